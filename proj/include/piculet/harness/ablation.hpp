#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "piculet/harness/report.hpp"
#include "piculet/harness/runner.hpp"

namespace piculet {

// Two-of-three subsets plus the full combination.
inline std::vector<EnabledSet> default_ablation_subsets() {
  return {
      {ExtractorKind::ocr, ExtractorKind::face},
      {ExtractorKind::detection, ExtractorKind::face},
      {ExtractorKind::detection, ExtractorKind::ocr},
      EnabledSet::all(),
  };
}

struct AblationRow {
  EnabledSet enabled;
  nlohmann::json metrics;
  std::string run_id;
};

struct AblationTable {
  std::vector<AblationRow> rows;

  // Detection / OCR / Face check-mark columns, then Total and the six subtask scores.
  Table table() const {
    Table t;
    t.header = {"Detection", "OCR", "Face", "Total", "Existence", "Count", "Position", "Color", "Celebrity", "OCR"};
    for (const auto& r : rows) {
      std::vector<std::string> row;
      for (auto k : kAllExtractorKinds) row.push_back(r.enabled.contains(k) ? "✓" : "");
      for (auto& c : mme_score_cells(r.metrics)) row.push_back(std::move(c));
      t.rows.push_back(std::move(row));
    }
    return t;
  }

  std::string render(TableFormat fmt) const { return table().render(fmt); }

  nlohmann::json to_json() const {
    auto rows_json = nlohmann::json::array();
    for (const auto& r : rows)
      rows_json.push_back({{"enabled", r.enabled}, {"run_id", r.run_id}, {"metrics", r.metrics}});
    return {{"rows", rows_json}};
  }
};

inline std::string subset_slug(EnabledSet s) {
  if (s.empty()) return "plain";
  std::string out;
  for (auto k : s.kinds()) {
    if (!out.empty()) out += "-";
    out += k == ExtractorKind::detection ? "det" : to_string(k);
  }
  return out;
}

// One run_benchmark per subset, each in <out_dir>/<base run id>-<subset>.
inline AblationTable run_ablation(const Dataset& dataset, const Gateway& gateway, const RunOptions& base,
                                  const std::vector<EnabledSet>& subsets = default_ablation_subsets()) {
  AblationTable table;
  const auto base_id = base.run_id.empty() ? make_run_id(dataset.kind) : base.run_id;
  for (auto subset : subsets) {
    RunOptions opts = base;
    opts.enabled = subset;
    opts.run_id = base_id + "-" + subset_slug(subset);
    opts.stop_after.reset();
    auto rec = run_benchmark(dataset, gateway, opts);
    table.rows.push_back({subset, rec.metrics, rec.run_id});
  }
  return table;
}

}  // namespace piculet
