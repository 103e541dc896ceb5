#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "piculet/piculet.hpp"

namespace piculet::cli {

// Flag overrides layered over the config file; validated by the same loader.
struct CliConfig {
  std::string config_path;
  std::string fixture;
  std::string gallery;
  std::string detection_endpoint, ocr_endpoint, face_endpoint, mllm_endpoint, judge_endpoint;
  std::string enabled;
  bool baseline = false;

  GatewayConfig resolve() const {
    nlohmann::json j = nlohmann::json::object();
    fs::path base;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw input_error("cannot open config " + config_path);
      j = nlohmann::json::parse(in, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw input_error("config " + config_path + " is not a JSON object");
      base = fs::path(config_path).parent_path();
    }
    auto set = [&](const char* pointer, nlohmann::json v) { j[nlohmann::json::json_pointer(pointer)] = std::move(v); };
    auto abs = [](const std::string& p) { return fs::absolute(p).string(); };
    if (!fixture.empty()) {
      set("/extractors/backend", "fixture");
      set("/extractors/fixture", abs(fixture));
    }
    if (!gallery.empty()) set("/extractors/gallery", abs(gallery));
    if (!detection_endpoint.empty()) set("/extractors/detection/endpoint", detection_endpoint);
    if (!ocr_endpoint.empty()) set("/extractors/ocr/endpoint", ocr_endpoint);
    if (!face_endpoint.empty()) set("/extractors/face/endpoint", face_endpoint);
    if (!mllm_endpoint.empty()) set("/mllm/endpoint", mllm_endpoint);
    if (!judge_endpoint.empty()) set("/judge/endpoint", judge_endpoint);
    if (baseline) set("/extractors/enabled", nlohmann::json::array());
    else if (!enabled.empty()) set("/extractors/enabled", EnabledSet::parse(enabled));

    auto config = GatewayConfig::from_json(j, base);
    config.apply_env();
    return config;
  }
};

inline void add_common(CLI::App* cmd, CliConfig& c) {
  cmd->add_option("--config", c.config_path, "Config file (JSON)");
  cmd->add_option("--fixture", c.fixture, "Use a fixture file instead of HTTP extractor backends");
  cmd->add_option("--gallery", c.gallery, "Celebrity gallery JSON");
  cmd->add_option("--detection-endpoint", c.detection_endpoint, "Detection backend address");
  cmd->add_option("--ocr-endpoint", c.ocr_endpoint, "OCR backend address");
  cmd->add_option("--face-endpoint", c.face_endpoint, "Face backend address");
  cmd->add_option("--mllm-endpoint", c.mllm_endpoint, "Vision-chat backend address");
}

inline void add_enabled(CLI::App* cmd, CliConfig& c) {
  cmd->add_option("--enabled", c.enabled, "Extractors to run, e.g. det,ocr,face");
  cmd->add_flag("--baseline", c.baseline, "Disable all extractors (plain baseline)");
}

inline void print_warnings(const GatewayConfig& config, const std::vector<std::string>& warnings, std::ostream& err) {
  if (config.log_level == "quiet") return;
  for (const auto& w : warnings) err << "warning: " << w << "\n";
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge-augmented prompting gateway for multimodal LLMs, with benchmark harness"};
  app.require_subcommand(1);

  CliConfig common;

  auto* serve_cmd = app.add_subcommand("serve", "Run the gateway HTTP service");
  add_common(serve_cmd, common);
  std::string host;
  int port = -1;
  serve_cmd->add_option("--host", host, "Bind address");
  serve_cmd->add_option("--port", port, "Port");

  auto* answer_cmd = app.add_subcommand("answer", "Answer one query about one image");
  add_common(answer_cmd, common);
  add_enabled(answer_cmd, common);
  std::string image_path, query;
  bool show_prompt = false;
  answer_cmd->add_option("image", image_path, "Image file")->required();
  answer_cmd->add_option("query", query, "Question")->required();
  answer_cmd->add_flag("--show-prompt", show_prompt, "Print the formulated prompt with part tags");

  auto* eval_cmd = app.add_subcommand("eval", "Run a benchmark (pope, mme, qa90)");
  add_common(eval_cmd, common);
  add_enabled(eval_cmd, common);
  eval_cmd->add_option("--judge-endpoint", common.judge_endpoint, "Judge backend address (qa90)");
  std::string benchmark, dataset_path, out_dir = "runs", run_id, resume_id, images;
  std::size_t parallelism = 1;
  std::optional<std::size_t> limit;
  bool fail_fast = false;
  eval_cmd->add_option("benchmark", benchmark, "pope | mme | qa90")->required();
  eval_cmd->add_option("dataset", dataset_path, "Dataset file or directory")->required();
  eval_cmd->add_option("--out", out_dir, "Directory holding run directories");
  eval_cmd->add_option("--run-id", run_id, "Run id (default: generated)");
  eval_cmd->add_option("--resume", resume_id, "Resume an interrupted run");
  eval_cmd->add_option("--images", images, "Image root (default: dataset directory)");
  eval_cmd->add_option("--parallelism,-j", parallelism, "Concurrent pipeline calls")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--limit", limit, "Stop after this many new samples (run stays resumable)");
  eval_cmd->add_flag("--fail-fast", fail_fast, "Abort on the first backend failure");

  auto* ablate_cmd = app.add_subcommand("ablate", "Run the extractor-subset ablation on an MME dataset");
  add_common(ablate_cmd, common);
  std::vector<std::string> subsets;
  ablate_cmd->add_option("dataset", dataset_path, "MME dataset directory")->required();
  ablate_cmd->add_option("--out", out_dir, "Directory holding run directories");
  ablate_cmd->add_option("--run-id", run_id, "Base run id");
  ablate_cmd->add_option("--parallelism,-j", parallelism, "Concurrent pipeline calls")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--subset", subsets, "Subset to run (repeatable), e.g. det,ocr; 'none' for plain");

  auto* report_cmd = app.add_subcommand("report", "Render comparison tables for finished runs");
  std::vector<std::string> run_dirs;
  std::string format = "md";
  report_cmd->add_option("runs", run_dirs, "Run directories")->required();
  report_cmd->add_option("--format", format, "md | text")->check(CLI::IsMember({"md", "text"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*serve_cmd) {
      auto config = common.resolve();
      if (!host.empty()) config.host = host;
      if (port >= 0) config.port = port;
      config.validate();
      if (config.log_level != "quiet") err << "listening on " << config.host << ":" << config.port << "\n";
      serve(config);
      return 0;
    }

    if (*answer_cmd) {
      const auto config = common.resolve();
      auto gateway = Gateway::from_config(config);
      const auto image = read_file_bytes(image_path);
      auto result = gateway->answer_pipeline(image, query, config.extractors.enabled);
      if (show_prompt) out << render_tagged(result.formulated) << "\n";
      out << to_json(result).dump(2) << "\n";
      return 0;
    }

    if (*eval_cmd) {
      const auto config = common.resolve();
      const auto kind = parse_benchmark(benchmark);
      auto dataset = load_dataset(kind, dataset_path, images);
      print_warnings(config, dataset.warnings, err);
      auto gateway = Gateway::from_config(config);

      RunOptions opts;
      opts.out_dir = out_dir;
      opts.run_id = resume_id.empty() ? run_id : resume_id;
      opts.resume = !resume_id.empty();
      opts.enabled = config.extractors.enabled;
      opts.parallelism = parallelism;
      opts.fail_fast = fail_fast;
      opts.stop_after = limit;
      opts.dataset_path = fs::absolute(dataset_path).string();
      opts.config_snapshot = config.to_json();

      std::optional<JudgeSetup> judge;
      if (kind == Benchmark::qa90) {
        judge = JudgeSetup{make_chat_backend(config.judge, "judge"), config.judge.client,
                           config.judge.template_text.empty() ? std::string(kDefaultJudgeTemplate)
                                                              : config.judge.template_text};
      }
      auto rec = run_benchmark(dataset, *gateway, opts, judge ? &*judge : nullptr);
      out << "run: " << rec.dir.string() << "\n";
      if (!rec.complete) {
        out << "stopped after " << rec.transcript.size() << " of " << dataset.samples.size()
            << " samples; resume with --resume " << rec.run_id << "\n";
        return 0;
      }
      out << render_report({{rec.run_id, rec.snapshot, rec.metrics}}, TableFormat::markdown);
      return 0;
    }

    if (*ablate_cmd) {
      const auto config = common.resolve();
      auto dataset = load_dataset(Benchmark::mme, dataset_path);
      print_warnings(config, dataset.warnings, err);
      auto gateway = Gateway::from_config(config);
      RunOptions opts;
      opts.out_dir = out_dir;
      opts.run_id = run_id.empty() ? make_run_id(Benchmark::mme) + "-ablation" : run_id;
      opts.parallelism = parallelism;
      opts.dataset_path = fs::absolute(dataset_path).string();
      opts.config_snapshot = config.to_json();
      std::vector<EnabledSet> chosen;
      for (const auto& s : subsets) chosen.push_back(EnabledSet::parse(s));
      auto table = run_ablation(dataset, *gateway, opts, chosen.empty() ? default_ablation_subsets() : chosen);
      fs::create_directories(out_dir);
      write_text_atomic(fs::path(out_dir) / (opts.run_id + ".ablation.json"), table.to_json().dump(2) + "\n");
      write_text_atomic(fs::path(out_dir) / (opts.run_id + ".ablation.md"), table.render(TableFormat::markdown));
      out << table.render(TableFormat::markdown);
      return 0;
    }

    if (*report_cmd) {
      std::vector<ReportedRun> runs;
      for (const auto& d : run_dirs) {
        const fs::path dir(d);
        if (!fs::exists(dir / kMetricsFile))
          throw input_error(d + " has no " + kMetricsFile + " (run not finalized?)");
        runs.push_back({dir.filename().string(), read_json_file(dir / kSnapshotFile),
                        read_json_file(dir / kMetricsFile)});
      }
      out << render_report(runs, format == "md" ? TableFormat::markdown : TableFormat::text);
      return 0;
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace piculet::cli
