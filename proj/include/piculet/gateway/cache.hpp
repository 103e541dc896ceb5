#pragma once

#include <cstddef>
#include <list>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "piculet/extractors/types.hpp"

namespace piculet {

struct CacheKey {
  std::string image_digest;
  EnabledSet enabled;
  std::string config_digest;

  std::string str() const {
    return image_digest + "|" + std::to_string(enabled.bits()) + "|" + config_digest;
  }
};

// LRU map from (image, enabled set, extractor config) to bundle. Thread-safe.
class ExtractionCache {
 public:
  explicit ExtractionCache(std::size_t capacity = 1024) : capacity_(capacity) {}

  std::optional<ExtractionBundle> get(const CacheKey& key) {
    std::lock_guard lock(mu_);
    auto it = index_.find(key.str());
    if (it == index_.end()) {
      ++misses_;
      return std::nullopt;
    }
    order_.splice(order_.begin(), order_, it->second);
    ++hits_;
    return it->second->second;
  }

  void put(const CacheKey& key, ExtractionBundle bundle) {
    if (capacity_ == 0) return;
    std::lock_guard lock(mu_);
    auto k = key.str();
    if (auto it = index_.find(k); it != index_.end()) {
      it->second->second = std::move(bundle);
      order_.splice(order_.begin(), order_, it->second);
      return;
    }
    order_.emplace_front(k, std::move(bundle));
    index_[k] = order_.begin();
    while (order_.size() > capacity_) {
      index_.erase(order_.back().first);
      order_.pop_back();
    }
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return order_.size();
  }
  std::size_t capacity() const { return capacity_; }
  std::size_t hits() const {
    std::lock_guard lock(mu_);
    return hits_;
  }
  std::size_t misses() const {
    std::lock_guard lock(mu_);
    return misses_;
  }

 private:
  using Node = std::pair<std::string, ExtractionBundle>;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<Node> order_;
  std::unordered_map<std::string, std::list<Node>::iterator> index_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace piculet
