#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace birdfl {

// Ordered, unique label names with a reverse index. Ordering is the sorted
// order of the names, so it is stable across save/load and across the order
// in which manifests were merged.
class LabelVocabulary {
 public:
  LabelVocabulary() = default;
  explicit LabelVocabulary(const std::set<std::string>& names);

  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  // Throws ConfigError for unknown names.
  std::size_t index(const std::string& name) const;

  bool operator==(const LabelVocabulary& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, std::size_t> index_;
};

struct ManifestEntry {
  std::string clip_id;
  // Absolute or manifest-relative path, already resolved against the
  // manifest's directory at load time.
  std::filesystem::path audio_path;
  std::set<std::string> labels;
  std::optional<int> fold;
  std::optional<std::string> recordist;
};

class Manifest {
 public:
  Manifest() = default;
  // Validates clip_id uniqueness; throws IntegrityError on duplicates.
  Manifest(std::string name, std::vector<ManifestEntry> entries);

  const std::string& name() const { return name_; }
  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const ManifestEntry& at(std::size_t i) const { return entries_.at(i); }
  const ManifestEntry* find(const std::string& clip_id) const;

  LabelVocabulary vocabulary() const;
  // True when every entry carries exactly one label.
  bool is_single_label() const;
  // Sorted distinct fold values; empty when any entry is unassigned.
  std::vector<int> folds() const;

 private:
  std::string name_;
  std::vector<ManifestEntry> entries_;
  std::map<std::string, std::size_t> by_id_;
};

// Parses the manifest CSV (header `clip_id,audio_path,labels,fold,recordist`).
// Malformed rows raise ParseError with the 1-based line number.
Manifest load_manifest(const std::filesystem::path& path);
Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                        const std::string& name);
// Writes a manifest with paths relative to `path`'s directory when possible.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Entry count |a| + |b|. Clip ids from `b` that collide with `a` are
// prefixed with "<b.name()>:" (or "b:" when unnamed).
Manifest union_manifests(const Manifest& a, const Manifest& b);

struct FoldScheme {
  enum class Kind { kByColumn, kStratifiedByRecordist, kRandom };
  Kind kind = Kind::kByColumn;
  int k = 2;
  std::uint64_t seed = 0;

  static FoldScheme by_column() { return {Kind::kByColumn, 0, 0}; }
  static FoldScheme by_recordist(int k) { return {Kind::kStratifiedByRecordist, k, 0}; }
  static FoldScheme random(int k, std::uint64_t seed) { return {Kind::kRandom, k, seed}; }
};

// Returns a copy with every entry's fold in [0, k). Stratified assignment
// keeps each recordist inside a single fold; recordists are sorted by name
// and dealt round-robin, so k equal to the recordist count yields a
// leave-one-recordist-out partition.
Manifest assign_folds(const Manifest& manifest, const FoldScheme& scheme);

}  // namespace birdfl
