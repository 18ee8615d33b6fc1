#pragma once

#include "birdfl/dataset.hpp"
#include "birdfl/forest.hpp"

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace birdfl {

enum class PoolMode { kMean, kMax };

std::string to_string(PoolMode mode);
PoolMode parse_pool_mode(const std::string& text);

// One row per clip, in order of first appearance; window_index is 0.
PredictionMatrix pool_decisions(const PredictionMatrix& windows, PoolMode mode);

// Mann-Whitney AUC with tied scores credited one half. Throws DomainError
// when every truth is equal.
double auc(std::span<const double> scores, std::span<const std::uint8_t> truths);

enum class AucAveraging { kMicro, kMacro };

// AUC over clip x label decisions. Micro pools every cell into one ROC;
// macro averages per-label AUCs over the labels that have both classes.
double matrix_auc(const Matrix& scores, const LabelMatrix& truth, AucAveraging averaging);

// Average precision of one ranked label list; labels sorted by descending
// score, ties by ascending index.
double average_precision(std::span<const double> scores, const std::set<std::size_t>& truth);

struct MapResult {
  double map = 0.0;
  std::size_t clips = 0;
  std::size_t excluded_empty = 0;
};

// `truth` maps clip_id to label names; clips with no true label are skipped
// and counted in excluded_empty. Throws DomainError when no clip remains.
MapResult mean_average_precision(const PredictionMatrix& clips,
                                 const std::map<std::string, std::set<std::string>>& truth);

struct FoldResult {
  int fold = 0;
  double auc = 0.0;  // NaN when undefined (single-class truth)
  double map = 0.0;  // NaN when no clip has a true label
  std::size_t clips = 0;
  std::size_t windows = 0;
  std::size_t excluded_empty = 0;
};

struct EvalReport {
  // Grid axes as ordered key/value pairs, e.g. ("features", "mfcc-ms").
  std::vector<std::pair<std::string, std::string>> fingerprint;
  std::vector<FoldResult> folds;
  double pooled_auc = 0.0;  // arithmetic mean over folds with a defined value
  double pooled_map = 0.0;
  std::size_t labels = 0;
  std::string error;  // non-empty when the run failed
};

struct FoldPredictions {
  int fold = 0;
  PredictionMatrix windows;
};

// Pools each fold's window predictions and scores them against the
// manifest. Every clip in the manifest whose fold matches must be predicted
// unless listed in `excluded`; missing clips raise IntegrityError.
EvalReport evaluate_run(const Manifest& manifest, const std::vector<FoldPredictions>& folds,
                        PoolMode pool, AucAveraging averaging = AucAveraging::kMicro,
                        const std::set<std::string>& excluded = {});

// CSV: one row per (run, fold) with the fingerprint columns of the first
// report followed by fold, auc, map, clips, windows, error.
std::string reports_to_csv(const std::vector<EvalReport>& reports);
std::string reports_to_json(const std::vector<EvalReport>& reports);

}  // namespace birdfl
