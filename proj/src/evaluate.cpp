#include "birdfl/evaluate.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace birdfl {

std::string to_string(PoolMode mode) { return mode == PoolMode::kMean ? "mean" : "max"; }

PoolMode parse_pool_mode(const std::string& text) {
  if (text == "mean") return PoolMode::kMean;
  if (text == "max") return PoolMode::kMax;
  throw ConfigError("unknown pooling mode '" + text + "' (expected mean or max)");
}

PredictionMatrix pool_decisions(const PredictionMatrix& windows, PoolMode mode) {
  if (static_cast<Eigen::Index>(windows.keys.size()) != windows.values.rows()) {
    throw DimensionError("pool_decisions: key count does not match rows");
  }
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Eigen::Index>> rows;
  for (std::size_t i = 0; i < windows.keys.size(); ++i) {
    auto [it, inserted] = rows.try_emplace(windows.keys[i].clip_id);
    if (inserted) order.push_back(windows.keys[i].clip_id);
    it->second.push_back(static_cast<Eigen::Index>(i));
  }
  PredictionMatrix out;
  out.vocabulary = windows.vocabulary;
  out.values.resize(static_cast<Eigen::Index>(order.size()), windows.values.cols());
  for (std::size_t c = 0; c < order.size(); ++c) {
    const auto& idx = rows[order[c]];
    auto row = out.values.row(static_cast<Eigen::Index>(c));
    row = windows.values.row(idx.front());
    for (std::size_t j = 1; j < idx.size(); ++j) {
      if (mode == PoolMode::kMean) {
        row += windows.values.row(idx[j]);
      } else {
        row = row.cwiseMax(windows.values.row(idx[j]));
      }
    }
    if (mode == PoolMode::kMean) row /= static_cast<double>(idx.size());
    out.keys.push_back({order[c], 0});
  }
  return out;
}

double auc(std::span<const double> scores, std::span<const std::uint8_t> truths) {
  if (scores.size() != truths.size()) throw DimensionError("auc: scores and truths differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (1-based, tie-averaged) ranks of the positives, kept doubled so
  // every quantity stays an exact integer.
  std::uint64_t positives = 0;
  std::uint64_t doubled_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::uint64_t pos_in_group = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      pos_in_group += truths[order[j]] ? 1 : 0;
      ++j;
    }
    doubled_rank_sum += pos_in_group * static_cast<std::uint64_t>(i + 1 + j);
    positives += pos_in_group;
    i = j;
  }
  const std::uint64_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw DomainError("auc: undefined without both positive and negative instances");
  }
  const std::uint64_t doubled_u = doubled_rank_sum - positives * (positives + 1);
  return static_cast<double>(doubled_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

double matrix_auc(const Matrix& scores, const LabelMatrix& truth, AucAveraging averaging) {
  if (scores.rows() != truth.rows() || scores.cols() != truth.cols()) {
    throw DimensionError("matrix_auc: score and truth shapes differ");
  }
  if (averaging == AucAveraging::kMicro) {
    const std::size_t n = static_cast<std::size_t>(scores.size());
    return auc({scores.data(), n}, {truth.data(), n});
  }
  double total = 0.0;
  int used = 0;
  std::vector<double> s(static_cast<std::size_t>(scores.rows()));
  std::vector<std::uint8_t> t(s.size());
  for (Eigen::Index c = 0; c < scores.cols(); ++c) {
    const auto pos = truth.col(c).cast<int>().sum();
    if (pos == 0 || pos == truth.rows()) continue;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      s[static_cast<std::size_t>(r)] = scores(r, c);
      t[static_cast<std::size_t>(r)] = truth(r, c);
    }
    total += auc(s, t);
    ++used;
  }
  if (used == 0) throw DomainError("matrix_auc: no label has both positive and negative clips");
  return total / used;
}

double average_precision(std::span<const double> scores, const std::set<std::size_t>& truth) {
  if (truth.empty()) throw DomainError("average_precision: empty truth set");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (truth.count(order[rank])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  for (std::size_t label : truth) {
    if (label >= scores.size()) throw DimensionError("average_precision: truth label out of range");
  }
  return sum / static_cast<double>(truth.size());
}

MapResult mean_average_precision(const PredictionMatrix& clips,
                                 const std::map<std::string, std::set<std::string>>& truth) {
  MapResult result;
  double total = 0.0;
  const auto width = static_cast<std::size_t>(clips.values.cols());
  for (std::size_t i = 0; i < clips.keys.size(); ++i) {
    const auto it = truth.find(clips.keys[i].clip_id);
    if (it == truth.end()) {
      throw IntegrityError("map: no truth for clip '" + clips.keys[i].clip_id + "'");
    }
    std::set<std::size_t> labels;
    for (const auto& name : it->second) {
      if (clips.vocabulary.contains(name)) labels.insert(clips.vocabulary.index(name));
    }
    if (labels.empty()) {
      ++result.excluded_empty;
      continue;
    }
    total += average_precision({clips.values.row(static_cast<Eigen::Index>(i)).data(), width}, labels);
    ++result.clips;
  }
  if (result.clips == 0) throw DomainError("map: no clip has a true label");
  result.map = total / static_cast<double>(result.clips);
  return result;
}

namespace {

double mean_defined(const std::vector<double>& values) {
  double sum = 0.0;
  int n = 0;
  for (double v : values) {
    if (!std::isnan(v)) {
      sum += v;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN() : sum / n;
}

}  // namespace

EvalReport evaluate_run(const Manifest& manifest, const std::vector<FoldPredictions>& folds,
                        PoolMode pool, AucAveraging averaging, const std::set<std::string>& excluded) {
  if (folds.empty()) throw DomainError("evaluate: no folds");
  EvalReport report;
  report.labels = folds.front().windows.vocabulary.size();
  std::vector<double> aucs, maps;
  for (const auto& fp : folds) {
    const PredictionMatrix clips = pool_decisions(fp.windows, pool);
    std::set<std::string> predicted;
    for (const auto& k : clips.keys) predicted.insert(k.clip_id);
    std::vector<std::string> missing;
    std::map<std::string, std::set<std::string>> truth;
    for (const auto& e : manifest.entries()) {
      if (e.fold != fp.fold) continue;
      truth[e.clip_id] = e.labels;
      if (!predicted.count(e.clip_id) && !excluded.count(e.clip_id)) missing.push_back(e.clip_id);
    }
    if (!missing.empty()) {
      std::string list;
      for (std::size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
      if (missing.size() > 10) list += ", ...";
      throw IntegrityError("evaluate: fold " + std::to_string(fp.fold) + " is missing predictions for " +
                           std::to_string(missing.size()) + " clip(s): " + list);
    }

    FoldResult fr;
    fr.fold = fp.fold;
    fr.clips = clips.keys.size();
    fr.windows = fp.windows.keys.size();
    LabelMatrix t = LabelMatrix::Zero(clips.values.rows(), clips.values.cols());
    for (std::size_t i = 0; i < clips.keys.size(); ++i) {
      const auto it = truth.find(clips.keys[i].clip_id);
      if (it == truth.end()) {
        throw IntegrityError("evaluate: clip '" + clips.keys[i].clip_id + "' is not in fold " +
                             std::to_string(fp.fold));
      }
      for (const auto& name : it->second) {
        if (clips.vocabulary.contains(name)) t(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(clips.vocabulary.index(name))) = 1;
      }
    }
    try {
      fr.auc = matrix_auc(clips.values, t, averaging);
    } catch (const DomainError&) {
      log_warn("evaluate: AUC undefined for fold " + std::to_string(fp.fold));
      fr.auc = std::numeric_limits<double>::quiet_NaN();
    }
    try {
      const MapResult m = mean_average_precision(clips, truth);
      fr.map = m.map;
      fr.excluded_empty = m.excluded_empty;
    } catch (const DomainError&) {
      fr.map = std::numeric_limits<double>::quiet_NaN();
      fr.excluded_empty = fr.clips;
    }
    aucs.push_back(fr.auc);
    maps.push_back(fr.map);
    report.folds.push_back(fr);
  }
  report.pooled_auc = mean_defined(aucs);
  report.pooled_map = mean_defined(maps);
  return report;
}

namespace {

std::string fixed(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

nlohmann::ordered_json number_or_null(double v) {
  if (std::isnan(v)) return nullptr;
  // Round-trip through the fixed text so JSON and CSV agree digit for digit.
  return std::stod(fixed(v));
}

}  // namespace

std::string reports_to_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream out;
  std::vector<std::string> keys;
  if (!reports.empty()) {
    for (const auto& kv : reports.front().fingerprint) keys.push_back(kv.first);
  }
  for (const auto& k : keys) out << csv_field(k) << ',';
  out << "fold,auc,map,clips,windows,error\n";
  for (const auto& r : reports) {
    std::string prefix;
    for (const auto& k : keys) {
      std::string value;
      for (const auto& kv : r.fingerprint) {
        if (kv.first == k) value = kv.second;
      }
      prefix += csv_field(value) + ',';
    }
    if (r.folds.empty()) {
      out << prefix << ",,,,," << csv_field(r.error) << '\n';
      continue;
    }
    for (const auto& f : r.folds) {
      out << prefix << f.fold << ',' << fixed(f.auc) << ',' << fixed(f.map) << ',' << f.clips << ','
          << f.windows << ',' << csv_field(r.error) << '\n';
    }
  }
  return out.str();
}

std::string reports_to_json(const std::vector<EvalReport>& reports) {
  nlohmann::ordered_json runs = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json run;
    nlohmann::ordered_json config = nlohmann::ordered_json::object();
    for (const auto& [k, v] : r.fingerprint) config[k] = v;
    run["config"] = config;
    nlohmann::ordered_json folds = nlohmann::ordered_json::array();
    for (const auto& f : r.folds) {
      folds.push_back({{"fold", f.fold},
                       {"auc", number_or_null(f.auc)},
                       {"map", number_or_null(f.map)},
                       {"clips", f.clips},
                       {"windows", f.windows},
                       {"excluded_empty_truth", f.excluded_empty}});
    }
    run["folds"] = folds;
    run["pooled_auc"] = r.folds.empty() ? nlohmann::ordered_json(nullptr) : number_or_null(r.pooled_auc);
    run["pooled_map"] = r.folds.empty() ? nlohmann::ordered_json(nullptr) : number_or_null(r.pooled_map);
    run["labels"] = r.labels;
    if (!r.error.empty()) run["error"] = r.error;
    runs.push_back(run);
  }
  return nlohmann::ordered_json{{"runs", runs}}.dump(2) + "\n";
}

}  // namespace birdfl
