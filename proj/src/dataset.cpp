#include "birdfl/dataset.hpp"

#include "birdfl/common.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace birdfl {

LabelVocabulary::LabelVocabulary(const std::set<std::string>& names)
    : names_(names.begin(), names.end()) {
  for (std::size_t i = 0; i < names_.size(); ++i) index_.emplace(names_[i], i);
}

std::size_t LabelVocabulary::index(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("label '" + name + "' not in vocabulary");
  return it->second;
}

Manifest::Manifest(std::string name, std::vector<ManifestEntry> entries)
    : name_(std::move(name)), entries_(std::move(entries)) {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (!by_id_.emplace(entries_[i].clip_id, i).second) {
      throw IntegrityError("duplicate clip_id '" + entries_[i].clip_id + "' in manifest '" +
                           name_ + "'");
    }
  }
}

const ManifestEntry* Manifest::find(const std::string& clip_id) const {
  auto it = by_id_.find(clip_id);
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

LabelVocabulary Manifest::vocabulary() const {
  std::set<std::string> names;
  for (const auto& e : entries_) names.insert(e.labels.begin(), e.labels.end());
  return LabelVocabulary(names);
}

bool Manifest::is_single_label() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const ManifestEntry& e) { return e.labels.size() == 1; });
}

std::vector<int> Manifest::folds() const {
  std::set<int> folds;
  for (const auto& e : entries_) {
    if (!e.fold) return {};
    folds.insert(*e.fold);
  }
  return {folds.begin(), folds.end()};
}

namespace {

// RFC-4180-ish field splitter: handles quoted fields with doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      if (!cur.empty()) throw ParseError("unexpected quote inside field", line_no);
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError("unterminated quoted field", line_no);
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

Manifest parse_manifest(const std::string& text, const std::filesystem::path& base_dir,
                        const std::string& name) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  std::vector<ManifestEntry> entries;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line, line_no);
    if (!have_header) {
      static const std::vector<std::string> kHeader = {"clip_id", "audio_path", "labels", "fold",
                                                       "recordist"};
      for (auto& f : fields) f = trim(f);
      if (fields != kHeader) {
        throw ParseError("expected header 'clip_id,audio_path,labels,fold,recordist'", line_no);
      }
      have_header = true;
      continue;
    }
    if (fields.size() != 5) {
      throw ParseError("expected 5 fields, got " + std::to_string(fields.size()), line_no);
    }
    ManifestEntry e;
    e.clip_id = trim(fields[0]);
    if (e.clip_id.empty()) throw ParseError("empty clip_id", line_no);
    const std::string path = trim(fields[1]);
    if (path.empty()) throw ParseError("empty audio_path", line_no);
    e.audio_path = std::filesystem::path(path);
    if (e.audio_path.is_relative()) e.audio_path = base_dir / e.audio_path;
    std::stringstream labels(fields[2]);
    std::string label;
    while (std::getline(labels, label, ';')) {
      label = trim(label);
      if (!label.empty()) e.labels.insert(label);
    }
    const std::string fold = trim(fields[3]);
    if (!fold.empty()) {
      if (!std::all_of(fold.begin(), fold.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw ParseError("fold must be a non-negative integer, got '" + fold + "'", line_no);
      }
      try {
        e.fold = std::stoi(fold);
      } catch (const std::exception&) {
        throw ParseError("fold out of range: '" + fold + "'", line_no);
      }
    }
    const std::string recordist = trim(fields[4]);
    if (!recordist.empty()) e.recordist = recordist;
    entries.push_back(std::move(e));
  }
  if (!have_header) throw ParseError("missing header", line_no == 0 ? 1 : line_no);
  return Manifest(name, std::move(entries));
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str(), path.parent_path(), path.stem().string());
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  const auto base = path.parent_path();
  out << "clip_id,audio_path,labels,fold,recordist\n";
  for (const auto& e : manifest.entries()) {
    std::string audio = e.audio_path.string();
    if (!base.empty() && e.audio_path.is_absolute()) {
      auto rel = e.audio_path.lexically_relative(std::filesystem::absolute(base));
      if (!rel.empty()) audio = rel.string();
    } else if (!base.empty()) {
      auto rel = e.audio_path.lexically_relative(base);
      if (!rel.empty()) audio = rel.string();
    }
    std::string labels;
    for (const auto& l : e.labels) {
      if (!labels.empty()) labels.push_back(';');
      labels += l;
    }
    out << csv_escape(e.clip_id) << ',' << csv_escape(audio) << ',' << csv_escape(labels) << ','
        << (e.fold ? std::to_string(*e.fold) : "") << ',' << csv_escape(e.recordist.value_or(""))
        << '\n';
  }
}

Manifest union_manifests(const Manifest& a, const Manifest& b) {
  std::vector<ManifestEntry> entries = a.entries();
  const std::string prefix = (b.name().empty() ? std::string("b") : b.name()) + ":";
  for (ManifestEntry e : b.entries()) {
    std::string id = e.clip_id;
    while (a.find(id) != nullptr) id = prefix + id;
    e.clip_id = std::move(id);
    entries.push_back(std::move(e));
  }
  std::string name = a.name();
  if (!b.name().empty()) name += (name.empty() ? "" : "+") + b.name();
  return Manifest(name, std::move(entries));
}

Manifest assign_folds(const Manifest& manifest, const FoldScheme& scheme) {
  std::vector<ManifestEntry> entries = manifest.entries();
  switch (scheme.kind) {
    case FoldScheme::Kind::kByColumn:
      for (const auto& e : entries) {
        if (!e.fold) throw ConfigError("clip '" + e.clip_id + "' has no fold assignment");
      }
      break;
    case FoldScheme::Kind::kStratifiedByRecordist: {
      if (scheme.k < 1) throw ConfigError("fold count must be >= 1");
      std::set<std::string> recordists;
      for (const auto& e : entries) {
        if (!e.recordist) throw ConfigError("clip '" + e.clip_id + "' has no recordist");
        recordists.insert(*e.recordist);
      }
      std::map<std::string, int> fold_of;
      int next = 0;
      for (const auto& r : recordists) fold_of[r] = next++ % scheme.k;
      for (auto& e : entries) e.fold = fold_of.at(*e.recordist);
      break;
    }
    case FoldScheme::Kind::kRandom: {
      if (scheme.k < 1) throw ConfigError("fold count must be >= 1");
      // Balanced: a seeded permutation dealt round-robin into k folds.
      std::vector<std::size_t> order(entries.size());
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(scheme.seed);
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i = 0; i < order.size(); ++i) {
        entries[order[i]].fold = static_cast<int>(i % static_cast<std::size_t>(scheme.k));
      }
      break;
    }
  }
  return Manifest(manifest.name(), std::move(entries));
}

}  // namespace birdfl
