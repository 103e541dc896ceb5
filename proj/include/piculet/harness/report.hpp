#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "piculet/harness/datasets.hpp"

namespace piculet {

// Column-aligned plain text or GitHub Markdown.
enum class TableFormat { text, markdown };

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string render(TableFormat fmt) const {
    std::vector<std::size_t> width(header.size(), 0);
    auto measure = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size() && i < width.size(); ++i)
        width[i] = std::max(width[i], display_width(r[i]));
    };
    measure(header);
    for (const auto& r : rows) measure(r);

    auto line = [&](const std::vector<std::string>& r) {
      std::string out = fmt == TableFormat::markdown ? "|" : "";
      for (std::size_t i = 0; i < width.size(); ++i) {
        const std::string cell = i < r.size() ? r[i] : "";
        if (fmt == TableFormat::markdown) {
          out += " " + pad(cell, width[i]) + " |";
        } else {
          if (i) out += "  ";
          out += pad(cell, width[i]);
        }
      }
      if (fmt == TableFormat::text)
        while (!out.empty() && out.back() == ' ') out.pop_back();
      return out + "\n";
    };

    std::string out = line(header);
    if (fmt == TableFormat::markdown) {
      out += "|";
      for (auto w : width) out += " " + std::string(std::max<std::size_t>(w, 3), '-') + " |";
      out += "\n";
    } else {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out += std::string(total + 2 * (width.size() - 1), '-') + "\n";
    }
    for (const auto& r : rows) out += line(r);
    return out;
  }

 private:
  // UTF-8 code points, so check marks count as one column.
  static std::size_t display_width(const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;
    return n;
  }
  static std::string pad(const std::string& s, std::size_t w) {
    const auto dw = display_width(s);
    return dw >= w ? s : s + std::string(w - dw, ' ');
  }
};

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string method_label(const nlohmann::json& enabled) {
  if (!enabled.is_array() || enabled.empty()) return "plain";
  std::string out = "+";
  for (std::size_t i = 0; i < enabled.size(); ++i) {
    if (i) out += ",";
    out += enabled[i].get<std::string>();
  }
  return out;
}

// MME column order: Total, then the six subtasks.
inline const std::vector<std::string>& mme_columns() {
  static const std::vector<std::string> cols{"existence", "count", "position", "color", "celebrity", "ocr"};
  return cols;
}

inline std::vector<std::string> mme_score_cells(const nlohmann::json& metrics) {
  std::vector<std::string> cells{fixed(metrics.value("total", 0.0), 2)};
  const auto& by = metrics.contains("by_subtask") ? metrics["by_subtask"] : nlohmann::json::object();
  for (const auto& c : mme_columns())
    cells.push_back(by.contains(c) ? fixed(by[c]["score"].get<double>(), 2) : "-");
  return cells;
}

struct ReportedRun {
  std::string name;
  nlohmann::json snapshot;
  nlohmann::json metrics;
};

// One table per benchmark present among the runs.
inline std::string render_report(const std::vector<ReportedRun>& runs, TableFormat fmt) {
  std::string out;
  for (auto kind : {Benchmark::pope, Benchmark::mme, Benchmark::qa90}) {
    Table t;
    if (kind == Benchmark::pope)
      t.header = {"Run", "Method", "Accuracy", "Precision", "Recall", "F1-Score", "Yes Rate"};
    else if (kind == Benchmark::mme)
      t.header = {"Run", "Method", "Total", "Existence", "Count", "Position", "Color", "Celebrity", "OCR"};
    else
      t.header = {"Run", "Method", "Accuracy (plain)", "Detailedness (plain)", "Accuracy", "Detailedness"};

    for (const auto& r : runs) {
      if (r.metrics.value("benchmark", std::string()) != to_string(kind)) continue;
      std::vector<std::string> row{r.name, method_label(r.snapshot["run"]["enabled"])};
      if (kind == Benchmark::pope) {
        const auto& o = r.metrics["overall"];
        for (const char* f : {"accuracy", "precision", "recall", "f1", "yes_rate"})
          row.push_back(fixed(o[f].get<double>(), 4));
      } else if (kind == Benchmark::mme) {
        for (auto& c : mme_score_cells(r.metrics)) row.push_back(std::move(c));
      } else {
        const auto& m = r.metrics["mean"];
        for (const char* f : {"accuracy_1", "detailedness_1", "accuracy_2", "detailedness_2"})
          row.push_back(fixed(m[f].get<double>(), 2));
      }
      t.rows.push_back(std::move(row));
    }
    if (t.rows.empty()) continue;
    if (!out.empty()) out += "\n";
    out += t.render(fmt);
  }
  return out;
}

}  // namespace piculet
