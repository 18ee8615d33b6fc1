#include "birdfl/cache.hpp"

#include "birdfl/common.hpp"

#include "binary_io.hpp"

namespace birdfl {

FeatureStore::FeatureStore(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (dir_) {
    std::error_code ec;
    std::filesystem::create_directories(*dir_, ec);
    if (ec) throw IoError("cannot create cache directory '" + dir_->string() + "': " + ec.message());
  }
}

std::filesystem::path FeatureStore::path_for(const std::string& kind, const std::string& key) const {
  return *dir_ / kind / key.substr(0, 2) / (key + ".bin");
}

void FeatureStore::count(const std::string& kind, bool hit) {
  std::lock_guard lock(mutex_);
  auto& s = stats_[kind];
  (hit ? s.hits : s.misses) += 1;
}

bool FeatureStore::contains(const std::string& kind, const std::string& key) const {
  {
    std::lock_guard lock(mutex_);
    if (entries_.count(kind + "/" + key)) return true;
  }
  return dir_ && std::filesystem::exists(path_for(kind, key));
}

std::string FeatureStore::get_or_compute(const std::string& kind, const std::string& key,
                                         const std::function<std::string()>& compute) {
  const std::string id = kind + "/" + key;
  std::promise<std::shared_ptr<const std::string>> promise;
  std::shared_future<std::shared_ptr<const std::string>> future;
  bool owner = false;
  {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(id);
    if (it != entries_.end()) {
      future = it->second;
    } else {
      future = promise.get_future().share();
      entries_.emplace(id, future);
      owner = true;
    }
  }
  if (!owner) {
    count(kind, true);
    return *future.get();
  }

  try {
    std::shared_ptr<const std::string> value;
    bool hit = false;
    if (dir_) {
      const auto path = path_for(kind, key);
      if (std::filesystem::exists(path)) {
        value = std::make_shared<const std::string>(detail::read_file(path));
        hit = true;
      }
    }
    if (!value) {
      value = std::make_shared<const std::string>(compute());
      if (dir_) detail::atomic_write(path_for(kind, key), *value);
    }
    count(kind, hit);
    promise.set_value(value);
    if (dir_) {
      // Disk-backed entries are not kept in memory once settled.
      std::lock_guard lock(mutex_);
      entries_.erase(id);
    }
    return *value;
  } catch (...) {
    promise.set_exception(std::current_exception());
    std::lock_guard lock(mutex_);
    entries_.erase(id);
    throw;
  }
}

std::map<std::string, FeatureStore::Stats> FeatureStore::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

void FeatureStore::reset_stats() {
  std::lock_guard lock(mutex_);
  stats_.clear();
}

std::string cache_key(std::initializer_list<std::string> fields) {
  std::string joined;
  for (const auto& f : fields) {
    joined += std::to_string(f.size());
    joined += ':';
    joined += f;
  }
  return sha256_hex(joined);
}

}  // namespace birdfl
