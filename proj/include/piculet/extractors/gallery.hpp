#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "piculet/error.hpp"

namespace piculet {

inline double l2_norm(std::span<const double> v) {
  double sum = 0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

// Throws input_error for zero or non-finite vectors.
inline std::vector<double> l2_normalized(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n > 0) || !std::isfinite(n)) throw input_error("embedding is all-zero or non-finite");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

// Repository of named reference face embeddings, stored L2-normalized.
class CelebrityGallery {
 public:
  struct Entry {
    std::string name;
    std::vector<double> embedding;  // unit length
  };

  CelebrityGallery() = default;
  explicit CelebrityGallery(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }

  void add(std::string name, std::span<const double> embedding) {
    if (name.empty()) throw input_error("gallery: empty celebrity name");
    if (embedding.size() != dim_)
      throw input_error("gallery: entry '" + name + "' has dimension " +
                        std::to_string(embedding.size()) + ", expected " + std::to_string(dim_));
    for (const auto& e : entries_)
      if (e.name == name) throw input_error("gallery: duplicate name '" + name + "'");
    entries_.push_back({std::move(name), l2_normalized(embedding)});
  }

  // { "dim": int, "entries": [ { "name": str, "embedding": [float; dim] } ] }
  static CelebrityGallery from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("dim") || !j["dim"].is_number_unsigned())
      throw input_error("gallery: missing or invalid 'dim'");
    CelebrityGallery g(j["dim"].get<std::size_t>());
    if (g.dim_ == 0) throw input_error("gallery: dim must be positive");
    if (!j.contains("entries") || !j["entries"].is_array())
      throw input_error("gallery: missing 'entries' array");
    for (const auto& e : j["entries"]) {
      if (!e.is_object() || !e.contains("name") || !e["name"].is_string() ||
          !e.contains("embedding") || !e["embedding"].is_array())
        throw input_error("gallery: entries need 'name' and 'embedding'");
      std::vector<double> v;
      for (const auto& x : e["embedding"]) {
        if (!x.is_number()) throw input_error("gallery: embedding values must be numbers");
        v.push_back(x.get<double>());
      }
      g.add(e["name"].get<std::string>(), v);
    }
    return g;
  }

  static CelebrityGallery load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw input_error("gallery: cannot open " + path.string());
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw input_error("gallery: " + path.string() + ": " + e.what());
    }
    return from_json(j);
  }

  nlohmann::json to_json() const {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : entries_) entries.push_back({{"name", e.name}, {"embedding", e.embedding}});
    return {{"dim", dim_}, {"entries", entries}};
  }

 private:
  std::size_t dim_ = 0;
  std::vector<Entry> entries_;
};

struct EmbeddingMatch {
  std::string name;
  double similarity = 0;
};

// Best gallery entry by cosine similarity, if it reaches `threshold`.
// Ties go to the lexicographically smallest name.
inline std::optional<EmbeddingMatch> match_embedding(std::span<const double> embedding,
                                                     const CelebrityGallery& gallery,
                                                     double threshold) {
  if (gallery.empty()) return std::nullopt;
  if (embedding.size() != gallery.dim())
    throw input_error("embedding dimension " + std::to_string(embedding.size()) +
                      " does not match gallery dimension " + std::to_string(gallery.dim()));
  const auto query = l2_normalized(embedding);

  const CelebrityGallery::Entry* best = nullptr;
  double best_sim = -2.0;
  for (const auto& entry : gallery.entries()) {
    double dot = 0;
    for (std::size_t i = 0; i < query.size(); ++i) dot += query[i] * entry.embedding[i];
    dot = std::clamp(dot, -1.0, 1.0);
    if (dot > best_sim || (dot == best_sim && entry.name < best->name)) {
      best = &entry;
      best_sim = dot;
    }
  }
  if (best_sim < threshold) return std::nullopt;
  return EmbeddingMatch{best->name, best_sim};
}

}  // namespace piculet
