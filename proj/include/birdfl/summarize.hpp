#pragma once

#include "birdfl/spectral.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace birdfl {

enum class FeatureKind { kMfcc, kMelspec, kLearned, kLearnedTwoLayer };
enum class Summarization { kMeanStd, kMax, kModulation };

// One of the twelve feature/summarization combinations, e.g.
// "melspec-kfl4-ms" or "mfcc-modul".
struct FeatureConfig {
  std::string label;
  FeatureKind kind = FeatureKind::kMelspec;
  int frames_per_patch = 1;  // learned features only
  Summarization summary = Summarization::kMeanStd;

  bool learned() const {
    return kind == FeatureKind::kLearned || kind == FeatureKind::kLearnedTwoLayer;
  }
  // Width of the per-frame series feeding the summary (k for learned
  // features).
  int series_dims(int k = 500) const;
  // Width of the summary vector: 52, 26, 260, 80, 40, 400 or 2k.
  int summary_dims(int k = 500) const;

  // Throws ConfigError for unknown labels.
  static FeatureConfig parse(const std::string& label);
  // All twelve, in table order.
  static const std::vector<FeatureConfig>& all();
};

inline constexpr int kModulationBands = 10;

// Per-dimension mean followed by per-dimension population standard
// deviation.
RowVector mean_std(const Matrix& series);
RowVector max_summary(const Matrix& series);
// Per dimension: remove the temporal mean, zero-pad to the next power of two
// N >= T, take |FFT| bins 0..N/2 and average them into 10 equal-width bands
// (bins treated as unit-width cells, so bands may straddle bins). Output is
// dimension-major, 10 values per dimension. Requires T >= 2.
RowVector modulation_summary(const Matrix& series);
RowVector summarize(const Matrix& series, Summarization summary);

// Decision window length; nullopt means the whole clip.
struct DecisionWindow {
  std::optional<double> seconds;

  static DecisionWindow whole() { return {}; }
  static DecisionWindow of_seconds(double s) { return {s}; }
  static DecisionWindow parse(const std::string& text);
  std::string label() const;
  bool operator==(const DecisionWindow&) const = default;
};

struct WindowSlice {
  Matrix values;
  int index = 0;
  Eigen::Index start_frame = 0;
  double start_seconds = 0.0;
  double end_seconds = 0.0;
};

// Contiguous non-overlapping windows of max(1, floor(seconds * rate /
// frame_hop)) frames. A trailing partial window is kept. `whole` returns the
// series as a single window.
std::vector<WindowSlice> split_windows(const FeatureSeries& series, const DecisionWindow& window,
                                       int sample_rate = kSampleRate);

struct SummaryVector {
  RowVector values;
  std::string config_label;
  std::string clip_id;
  int window_index = 0;
  std::pair<double, double> window_span;
};

// Splits and summarizes one clip's series. Modulation summaries of
// single-frame windows are zero (the frame is repeated, then detrended).
std::vector<SummaryVector> summarize_clip(const FeatureSeries& series, const FeatureConfig& config,
                                          const DecisionWindow& window,
                                          const std::string& clip_id);

}  // namespace birdfl
