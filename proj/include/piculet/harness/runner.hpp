#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "piculet/error.hpp"
#include "piculet/gateway/pipeline.hpp"
#include "piculet/harness/datasets.hpp"
#include "piculet/harness/judge.hpp"
#include "piculet/harness/metrics.hpp"
#include "piculet/image.hpp"

namespace piculet {

using nlohmann::json;

inline constexpr const char* kSnapshotFile = "config.snapshot";
inline constexpr const char* kTranscriptFile = "transcript.jsonl";
inline constexpr const char* kMetricsFile = "metrics.json";

// Judge backend for qa90 runs.
struct JudgeSetup {
  std::shared_ptr<MllmBackend> backend;
  MllmBackendConfig config;
  std::string template_text = std::string(kDefaultJudgeTemplate);
};

struct RunOptions {
  fs::path out_dir = "runs";
  std::string run_id;  // empty = generated
  EnabledSet enabled = EnabledSet::all();
  std::size_t parallelism = 1;
  bool fail_fast = false;
  bool resume = false;
  std::optional<std::size_t> stop_after;  // process at most this many new samples, then stop unfinalized
  std::string dataset_path;               // recorded in the snapshot
  json config_snapshot;                   // gateway configuration recorded with the run
};

struct RunRecord {
  std::string run_id;
  fs::path dir;
  json snapshot;
  std::vector<json> transcript;  // ordered by sample key
  json metrics;                  // null until finalized
  bool complete = false;
};

inline std::string make_run_id(Benchmark kind) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  std::random_device rd;
  char suffix[8];
  std::snprintf(suffix, sizeof suffix, "%04x", rd() & 0xFFFFu);
  return std::string(to_string(kind)) + "-" + buf + "-" + suffix;
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void sort_transcript(std::vector<json>& entries) {
  std::sort(entries.begin(), entries.end(), [](const json& a, const json& b) {
    return natural_less(a["key"].get<std::string>(), b["key"].get<std::string>());
  });
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw input_error("cannot write " + tmp);
    out << text;
    if (!out.flush()) throw input_error("cannot write " + tmp);
  }
  fs::rename(tmp, path);
}

inline json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open " + path.string());
  auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw parse_error(path.string() + " is not valid JSON");
  return j;
}

// Complete lines only; a torn final line (crash mid-append) is dropped.
inline std::vector<json> read_transcript(const fs::path& path) {
  std::vector<json> out;
  std::ifstream in(path);
  if (!in) return out;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  for (const auto& l : lines) {
    ++line_no;
    if (l.empty()) continue;
    auto j = json::parse(l, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("key")) {
      if (line_no == lines.size()) break;
      throw parse_error(path.string() + ":" + std::to_string(line_no) + ": corrupt transcript line");
    }
    out.push_back(std::move(j));
  }
  return out;
}

// ---- metrics from transcript -------------------------------------------------

inline json pope_block(const ConfusionCounts& c) {
  json j = pope_metrics(c);
  j["counts"] = c;
  return j;
}

inline json compute_metrics(Benchmark kind, const std::vector<json>& transcript) {
  json m{{"benchmark", to_string(kind)}, {"samples", transcript.size()}};
  std::size_t errors = 0;
  for (const auto& e : transcript)
    if (!e.value("error", json()).is_null()) ++errors;
  m["errors"] = errors;

  if (kind == Benchmark::pope) {
    ConfusionCounts overall;
    std::map<std::string, ConfusionCounts> by_group;
    for (const auto& e : transcript) {
      const auto a = parse_binary_answer(e.at("normalized").get<std::string>());
      const bool label = e.at("label").get<std::string>() == "yes";
      add(overall, a, label);
      add(by_group[e.at("group").get<std::string>()], a, label);
    }
    m["overall"] = pope_block(overall);
    m["by_strategy"] = json::object();
    for (const auto& [g, c] : by_group) m["by_strategy"][g] = pope_block(c);
  } else if (kind == Benchmark::mme) {
    std::map<std::string, std::map<std::string, std::vector<MmeAnswer>>> grouped;
    for (const auto& e : transcript)
      grouped[e.at("group").get<std::string>()][e.at("pair_id").get<std::string>()].push_back(
          {parse_binary_answer(e.at("normalized").get<std::string>()),
           e.at("label").get<std::string>() == "yes"});
    m["by_subtask"] = json::object();
    double total = 0;
    for (const auto& [subtask, pairs] : grouped) {
      std::vector<MmePair> scored;
      for (const auto& [pair_id, answers] : pairs) {
        if (answers.size() != 2)
          throw parse_error("MME pair '" + subtask + "/" + pair_id + "' has " +
                            std::to_string(answers.size()) + " answers");
        scored.emplace_back(answers[0], answers[1]);
      }
      const auto s = mme_score(scored);
      m["by_subtask"][subtask] = s;
      total += s.score;
    }
    m["total"] = total;
  } else {
    double sums[4] = {0, 0, 0, 0};
    std::size_t judged = 0;
    for (const auto& e : transcript) {
      if (!e.contains("judge") || e["judge"].is_null()) continue;
      const auto& j = e["judge"];
      sums[0] += j.at("accuracy_1").get<double>();
      sums[1] += j.at("detailedness_1").get<double>();
      sums[2] += j.at("accuracy_2").get<double>();
      sums[3] += j.at("detailedness_2").get<double>();
      ++judged;
    }
    const auto mean = [&](double s) { return judged ? s / static_cast<double>(judged) : 0.0; };
    m["judged"] = judged;
    m["mean"] = {{"accuracy_1", mean(sums[0])}, {"detailedness_1", mean(sums[1])},
                 {"accuracy_2", mean(sums[2])}, {"detailedness_2", mean(sums[3])}};
  }
  return m;
}

// ---- per-sample execution ---------------------------------------------------

inline std::string error_text(std::exception_ptr ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const Error& e) {
    return std::string(to_string(e.kind())) + ": " + e.what();
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

inline json base_entry(const BenchSample& s) {
  return {{"key", s.key},
          {"group", s.group},
          {"pair_id", s.pair_id},
          {"image", s.image_ref},
          {"question", s.question},
          {"label", s.label ? json(*s.label ? "yes" : "no") : json()},
          {"error", nullptr}};
}

// Answers one sample. Backend failures are recorded in the entry (Other) unless
// `fail_fast`, in which case they propagate.
inline json run_sample(const BenchSample& s, Benchmark kind, const Gateway& gw, EnabledSet enabled,
                       const JudgeSetup* judge, bool fail_fast) {
  json e = base_entry(s);
  try {
    const auto image = read_file_bytes(s.image);
    if (kind == Benchmark::qa90) {
      auto plain = gw.answer_pipeline(image, s.question, EnabledSet::none());
      auto augmented = gw.answer_pipeline(image, s.question, enabled);
      e["prompt_1"] = plain.formulated.text;
      e["prompt_2"] = augmented.formulated.text;
      e["response_1"] = plain.answer;
      e["response_2"] = augmented.answer;
      e["mllm_attempts"] = plain.timings.mllm_attempts + augmented.timings.mllm_attempts;
      e["judge"] = nullptr;
      if (!judge || !judge->backend) throw input_error("qa90 runs need a judge backend");
      try {
        e["judge"] = judge_responses(image, s.question, plain.answer, augmented.answer, *judge->backend,
                                     judge->config, judge->template_text);
      } catch (const Error& je) {
        if (fail_fast) throw;
        e["judge_error"] = std::string(to_string(je.kind())) + ": " + je.what();
        e["judge_raw"] = je.raw();
      }
    } else {
      auto r = gw.answer_pipeline(image, s.question, enabled);
      e["prompt"] = r.formulated.text;
      e["answer"] = r.answer;
      e["normalized"] = to_string(normalize_binary(r.answer));
      e["mllm_attempts"] = r.timings.mllm_attempts;
      e["backend_failures"] = r.backend_failures;
    }
  } catch (...) {
    if (fail_fast) throw;
    e["error"] = error_text(std::current_exception());
    if (kind != Benchmark::qa90) {
      e["answer"] = "";
      e["normalized"] = to_string(BinaryAnswer::other);
    }
  }
  return e;
}

// ---- driver ------------------------------------------------------------------

// Answers every sample through the gateway, appending one transcript line per sample
// as it completes. Re-running with `resume` skips keys already in the transcript.
// Once all samples are present the transcript is rewritten in key order and
// metrics.json is written; results do not depend on `parallelism`.
inline RunRecord run_benchmark(const Dataset& dataset, const Gateway& gateway, RunOptions opts,
                               const JudgeSetup* judge = nullptr) {
  if (opts.parallelism == 0) throw input_error("parallelism must be >= 1");
  {
    std::set<std::string> keys;
    for (const auto& s : dataset.samples)
      if (!keys.insert(s.key).second) throw input_error("duplicate sample key " + s.key);
  }
  RunRecord rec;
  rec.run_id = opts.run_id.empty() ? make_run_id(dataset.kind) : opts.run_id;
  rec.dir = opts.out_dir / rec.run_id;
  const auto snapshot_path = rec.dir / kSnapshotFile;
  const auto transcript_path = rec.dir / kTranscriptFile;

  const json run_info{{"run_id", rec.run_id},
                      {"benchmark", to_string(dataset.kind)},
                      {"dataset", opts.dataset_path},
                      {"enabled", opts.enabled},
                      {"fail_fast", opts.fail_fast}};

  std::vector<json> done;
  if (fs::exists(snapshot_path)) {
    if (!opts.resume) throw input_error("run directory already exists: " + rec.dir.string() + " (use resume)");
    rec.snapshot = read_json_file(snapshot_path);
    const auto& prev = rec.snapshot.at("run");
    if (prev.at("benchmark") != run_info["benchmark"] || prev.at("enabled") != run_info["enabled"])
      throw input_error("cannot resume " + rec.run_id + ": benchmark or enabled set differs");
    done = read_transcript(transcript_path);
    std::string text;
    for (const auto& e : done) text += e.dump() + "\n";
    write_text_atomic(transcript_path, text);
  } else {
    if (opts.resume) throw input_error("no run to resume at " + rec.dir.string());
    fs::create_directories(rec.dir);
    rec.snapshot = {{"run", run_info}, {"config", opts.config_snapshot}, {"created", utc_timestamp()}};
    write_text_atomic(snapshot_path, rec.snapshot.dump(2) + "\n");
  }

  std::set<std::string> finished;
  for (const auto& e : done) finished.insert(e["key"].get<std::string>());
  std::vector<const BenchSample*> pending;
  for (const auto& s : dataset.samples)
    if (!finished.count(s.key)) pending.push_back(&s);

  const std::size_t limit = opts.stop_after ? std::min(*opts.stop_after, pending.size()) : pending.size();
  std::ofstream out(transcript_path, std::ios::app | std::ios::binary);
  if (!out) throw input_error("cannot append to " + transcript_path.string());
  std::mutex out_mu;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= limit) return;
      try {
        json e = run_sample(*pending[i], dataset.kind, gateway, opts.enabled, judge, opts.fail_fast);
        std::lock_guard lock(out_mu);
        out << e.dump() << '\n';
        out.flush();
        done.push_back(std::move(e));
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        abort.store(true);
      }
    }
  };
  {
    std::vector<std::jthread> workers;
    const auto n = std::min(opts.parallelism, std::max<std::size_t>(limit, 1));
    for (std::size_t t = 0; t < n; ++t) workers.emplace_back(worker);
  }
  out.close();
  if (failure) std::rethrow_exception(failure);

  sort_transcript(done);
  rec.transcript = std::move(done);
  rec.complete = rec.transcript.size() == dataset.samples.size();
  if (rec.complete) {
    std::string text;
    for (const auto& e : rec.transcript) text += e.dump() + "\n";
    write_text_atomic(transcript_path, text);
    rec.metrics = compute_metrics(dataset.kind, rec.transcript);
    write_text_atomic(rec.dir / kMetricsFile, rec.metrics.dump(2) + "\n");
  }
  return rec;
}

inline RunRecord load_run_record(const fs::path& dir) {
  RunRecord rec;
  rec.dir = dir;
  rec.snapshot = read_json_file(dir / kSnapshotFile);
  rec.run_id = rec.snapshot.at("run").at("run_id").get<std::string>();
  rec.transcript = read_transcript(dir / kTranscriptFile);
  sort_transcript(rec.transcript);
  if (fs::exists(dir / kMetricsFile)) {
    rec.metrics = read_json_file(dir / kMetricsFile);
    rec.complete = true;
  }
  return rec;
}

// Stored metrics must equal a recomputation from the transcript.
inline bool verify_run_record(const RunRecord& rec) {
  if (!rec.complete) return false;
  const auto kind = parse_benchmark(rec.snapshot.at("run").at("benchmark").get<std::string>());
  return compute_metrics(kind, rec.transcript) == rec.metrics;
}

}  // namespace piculet
