#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

namespace birdfl {

// Content-addressed byte store shared by every run of a grid. Entries are
// addressed by (kind, key) where key is a hex digest of everything upstream
// of the stage. With a directory the store persists across processes
// (atomic write-then-rename); without one it memoizes in memory. Concurrent
// requests for the same entry compute it once.
class FeatureStore {
 public:
  struct Stats {
    std::size_t hits = 0;
    std::size_t misses = 0;
  };

  explicit FeatureStore(std::optional<std::filesystem::path> dir = std::nullopt);

  std::string get_or_compute(const std::string& kind, const std::string& key,
                             const std::function<std::string()>& compute);
  bool contains(const std::string& kind, const std::string& key) const;

  // Per-kind counters ("mel", "codebook", "encoded", ...).
  std::map<std::string, Stats> stats() const;
  void reset_stats();
  const std::optional<std::filesystem::path>& directory() const { return dir_; }

 private:
  std::filesystem::path path_for(const std::string& kind, const std::string& key) const;
  void count(const std::string& kind, bool hit);

  std::optional<std::filesystem::path> dir_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_future<std::shared_ptr<const std::string>>> entries_;
  std::map<std::string, Stats> stats_;
};

// Stable digest of a list of fields.
std::string cache_key(std::initializer_list<std::string> fields);

}  // namespace birdfl
