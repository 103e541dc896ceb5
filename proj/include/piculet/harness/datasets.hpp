#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "piculet/error.hpp"

namespace piculet {

namespace fs = std::filesystem;

enum class Benchmark { pope, mme, qa90 };

inline const char* to_string(Benchmark b) {
  switch (b) {
    case Benchmark::pope: return "pope";
    case Benchmark::mme: return "mme";
    case Benchmark::qa90: return "qa90";
  }
  return "?";
}

inline Benchmark parse_benchmark(std::string_view s) {
  if (s == "pope") return Benchmark::pope;
  if (s == "mme") return Benchmark::mme;
  if (s == "qa90") return Benchmark::qa90;
  throw input_error("unknown benchmark '" + std::string(s) + "' (expected pope, mme or qa90)");
}

// One question of any benchmark, as driven through the gateway.
struct BenchSample {
  std::string key;        // unique within the run; resume and ordering key
  std::string group;      // POPE strategy or MME subtask; empty for qa90
  std::string pair_id;    // MME image; empty otherwise
  std::string image_ref;  // image reference as written in the dataset
  fs::path image;         // resolved path
  std::string question;
  std::optional<bool> label;  // true = "yes"
};

struct Dataset {
  Benchmark kind = Benchmark::pope;
  std::vector<BenchSample> samples;
  std::vector<std::string> warnings;
};

// Orders digit runs numerically so "pope/10" follows "pope/9".
inline bool natural_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const bool da = std::isdigit(static_cast<unsigned char>(a[i])) != 0;
    const bool db = std::isdigit(static_cast<unsigned char>(b[j])) != 0;
    if (da && db) {
      std::size_t ei = i, ej = j;
      while (ei < a.size() && std::isdigit(static_cast<unsigned char>(a[ei]))) ++ei;
      while (ej < b.size() && std::isdigit(static_cast<unsigned char>(b[ej]))) ++ej;
      auto na = a.substr(i, ei - i), nb = b.substr(j, ej - j);
      while (na.size() > 1 && na.front() == '0') na.remove_prefix(1);
      while (nb.size() > 1 && nb.front() == '0') nb.remove_prefix(1);
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ei;
      j = ej;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

inline std::optional<bool> parse_yes_no(std::string_view s) {
  std::string low;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (low == "yes") return true;
  if (low == "no") return false;
  return std::nullopt;
}

inline std::string id_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  return v.dump();
}

// ---- POPE ------------------------------------------------------------------

enum class PopeStrategy { random, popular, adversarial };

inline const char* to_string(PopeStrategy s) {
  switch (s) {
    case PopeStrategy::random: return "random";
    case PopeStrategy::popular: return "popular";
    case PopeStrategy::adversarial: return "adversarial";
  }
  return "?";
}

inline std::optional<PopeStrategy> parse_strategy(std::string_view s) {
  if (s.find("adversarial") != std::string_view::npos) return PopeStrategy::adversarial;
  if (s.find("popular") != std::string_view::npos) return PopeStrategy::popular;
  if (s.find("random") != std::string_view::npos) return PopeStrategy::random;
  return std::nullopt;
}

struct PopeSample {
  std::string question_id;
  std::string image;
  std::string question;
  bool label = false;
  PopeStrategy strategy = PopeStrategy::random;
};

struct PopeDataset {
  std::vector<PopeSample> samples;  // file order within each strategy file
  std::vector<std::string> warnings;
  std::map<std::string, std::pair<std::size_t, std::size_t>> yes_no_by_file;
};

inline std::vector<fs::path> dataset_files(const fs::path& path, std::initializer_list<const char*> exts) {
  if (!fs::exists(path)) throw input_error("dataset path does not exist: " + path.string());
  if (!fs::is_directory(path)) return {path};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (!e.is_regular_file()) continue;
    for (const char* ext : exts)
      if (e.path().extension() == ext) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

// JSON-lines with question_id, image, text, label (+ optional strategy; otherwise
// taken from the file name). A 50/50 yes/no split is expected; imbalance only warns.
inline PopeDataset load_pope(const fs::path& path) {
  PopeDataset ds;
  for (const auto& file : dataset_files(path, {".jsonl", ".json"})) {
    std::ifstream in(file);
    if (!in) throw input_error("cannot open " + file.string());
    const auto file_strategy = parse_strategy(file.filename().string());
    std::size_t yes = 0, no = 0, line_no = 0;
    std::set<std::string> seen;
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto where = file.string() + ":" + std::to_string(line_no) + ": ";
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw parse_error(where + "malformed JSON line");
      for (const char* f : {"question_id", "image", "text", "label"})
        if (!j.contains(f)) throw parse_error(where + "missing field '" + f + "'");
      if (!j["image"].is_string() || !j["text"].is_string() || !j["label"].is_string())
        throw parse_error(where + "image, text and label must be strings");
      PopeSample s;
      s.question_id = id_string(j["question_id"]);
      s.image = j["image"].get<std::string>();
      s.question = j["text"].get<std::string>();
      if (s.question.empty()) throw parse_error(where + "empty question");
      auto label = parse_yes_no(j["label"].get<std::string>());
      if (!label) throw parse_error(where + "label must be yes or no");
      s.label = *label;
      auto strategy = j.contains("strategy") && j["strategy"].is_string()
                          ? parse_strategy(j["strategy"].get<std::string>())
                          : file_strategy;
      if (!strategy) throw parse_error(where + "cannot determine sampling strategy (random/popular/adversarial)");
      s.strategy = *strategy;
      if (!seen.insert(std::string(to_string(s.strategy)) + "/" + s.question_id).second)
        throw parse_error(where + "duplicate question_id " + s.question_id);
      (s.label ? yes : no)++;
      ds.samples.push_back(std::move(s));
    }
    ds.yes_no_by_file[file.filename().string()] = {yes, no};
    if (yes != no)
      ds.warnings.push_back(file.filename().string() + ": label imbalance (" + std::to_string(yes) +
                            " yes / " + std::to_string(no) + " no)");
  }
  return ds;
}

inline Dataset to_dataset(const PopeDataset& pope, const fs::path& image_root) {
  Dataset d{Benchmark::pope, {}, pope.warnings};
  for (const auto& s : pope.samples) {
    BenchSample b;
    b.group = to_string(s.strategy);
    b.key = b.group + "/" + s.question_id;
    b.image_ref = s.image;
    b.image = image_root / s.image;
    b.question = s.question;
    b.label = s.label;
    d.samples.push_back(std::move(b));
  }
  return d;
}

// ---- MME -------------------------------------------------------------------

inline constexpr std::array<std::string_view, 6> kMmeSubtasks = {"existence", "count", "position",
                                                                 "color", "celebrity", "ocr"};

struct MmeSample {
  std::string subtask;
  std::string image;
  std::string question;
  bool label = false;
  std::string pair_id;
};

struct MmeDataset {
  std::map<std::string, std::vector<MmeSample>> subtasks;
  std::vector<std::string> warnings;
};

// <dir>/<subtask>/questions.tsv with rows image<TAB>question<TAB>label, two rows per image.
inline MmeDataset load_mme(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw input_error("MME dataset must be a directory: " + dir.string());
  MmeDataset ds;
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) subdirs.push_back(e.path());
  std::sort(subdirs.begin(), subdirs.end());
  for (const auto& sub : subdirs) {
    const auto name = sub.filename().string();
    if (std::find(kMmeSubtasks.begin(), kMmeSubtasks.end(), name) == kMmeSubtasks.end()) {
      ds.warnings.push_back("skipping unknown MME subtask directory '" + name + "'");
      continue;
    }
    const auto tsv = sub / "questions.tsv";
    std::ifstream in(tsv);
    if (!in) throw input_error("missing " + tsv.string());
    std::vector<MmeSample> rows;
    std::map<std::string, std::size_t> per_image;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      const auto where = tsv.string() + ":" + std::to_string(line_no) + ": ";
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
        throw parse_error(where + "expected image<TAB>question<TAB>label");
      MmeSample s;
      s.subtask = name;
      s.image = line.substr(0, t1);
      s.question = line.substr(t1 + 1, t2 - t1 - 1);
      auto label = parse_yes_no(line.substr(t2 + 1));
      if (s.image.empty() || s.question.empty()) throw parse_error(where + "empty image or question");
      if (!label) throw parse_error(where + "label must be yes or no");
      s.label = *label;
      s.pair_id = s.image;
      ++per_image[s.image];
      rows.push_back(std::move(s));
    }
    for (const auto& [image, n] : per_image)
      if (n != 2)
        throw parse_error(tsv.string() + ": image '" + image + "' has " + std::to_string(n) +
                          " questions, expected exactly 2");
    ds.subtasks[name] = std::move(rows);
  }
  return ds;
}

inline Dataset to_dataset(const MmeDataset& mme, const fs::path& root) {
  Dataset d{Benchmark::mme, {}, mme.warnings};
  for (const auto& [subtask, rows] : mme.subtasks) {
    std::map<std::string, int> seen;
    for (const auto& r : rows) {
      BenchSample b;
      b.group = subtask;
      b.pair_id = r.pair_id;
      b.key = subtask + "/" + r.image + "#" + std::to_string(seen[r.image]++);
      b.image_ref = r.image;
      b.image = root / subtask / r.image;
      b.question = r.question;
      b.label = r.label;
      d.samples.push_back(std::move(b));
    }
  }
  return d;
}

// ---- LLaVA-QA90-style free-form questions ----------------------------------

// JSON-lines with question_id, image, text (category and other fields ignored).
inline Dataset load_qa90(const fs::path& path, const fs::path& image_root) {
  Dataset d{Benchmark::qa90, {}, {}};
  std::set<std::string> seen;
  for (const auto& file : dataset_files(path, {".jsonl", ".json"})) {
    std::ifstream in(file);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto where = file.string() + ":" + std::to_string(line_no) + ": ";
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.is_object()) throw parse_error(where + "malformed JSON line");
      for (const char* f : {"question_id", "image", "text"})
        if (!j.contains(f)) throw parse_error(where + "missing field '" + f + "'");
      BenchSample b;
      b.key = id_string(j["question_id"]);
      if (!seen.insert(b.key).second) throw parse_error(where + "duplicate question_id " + b.key);
      b.image_ref = j["image"].get<std::string>();
      b.image = image_root / b.image_ref;
      b.question = j["text"].get<std::string>();
      if (b.question.empty()) throw parse_error(where + "empty question");
      d.samples.push_back(std::move(b));
    }
  }
  return d;
}

// Loads any benchmark; `image_root` empty = directory of the dataset file (POPE/qa90).
inline Dataset load_dataset(Benchmark kind, const fs::path& path, fs::path image_root = {}) {
  if (image_root.empty()) image_root = fs::is_directory(path) ? path : path.parent_path();
  switch (kind) {
    case Benchmark::pope: return to_dataset(load_pope(path), image_root);
    case Benchmark::mme: return to_dataset(load_mme(path), path);
    case Benchmark::qa90: return load_qa90(path, image_root);
  }
  throw input_error("unknown benchmark");
}

}  // namespace piculet
