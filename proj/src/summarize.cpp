#include "birdfl/summarize.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

namespace birdfl {

int FeatureConfig::series_dims(int k) const {
  switch (kind) {
    case FeatureKind::kMfcc: return 2 * kCepstralCoefficients;
    case FeatureKind::kMelspec: return kMelBands;
    case FeatureKind::kLearned:
    case FeatureKind::kLearnedTwoLayer: return k;
  }
  return 0;
}

int FeatureConfig::summary_dims(int k) const {
  const int d = series_dims(k);
  switch (summary) {
    case Summarization::kMeanStd: return 2 * d;
    case Summarization::kMax: return d;
    case Summarization::kModulation: return kModulationBands * d;
  }
  return 0;
}

const std::vector<FeatureConfig>& FeatureConfig::all() {
  static const std::vector<FeatureConfig> configs = {
      {"mfcc-ms", FeatureKind::kMfcc, 1, Summarization::kMeanStd},
      {"mfcc-maxp", FeatureKind::kMfcc, 1, Summarization::kMax},
      {"mfcc-modul", FeatureKind::kMfcc, 1, Summarization::kModulation},
      {"melspec-ms", FeatureKind::kMelspec, 1, Summarization::kMeanStd},
      {"melspec-maxp", FeatureKind::kMelspec, 1, Summarization::kMax},
      {"melspec-modul", FeatureKind::kMelspec, 1, Summarization::kModulation},
      {"melspec-kfl1-ms", FeatureKind::kLearned, 1, Summarization::kMeanStd},
      {"melspec-kfl2-ms", FeatureKind::kLearned, 2, Summarization::kMeanStd},
      {"melspec-kfl3-ms", FeatureKind::kLearned, 3, Summarization::kMeanStd},
      {"melspec-kfl4-ms", FeatureKind::kLearned, 4, Summarization::kMeanStd},
      {"melspec-kfl8-ms", FeatureKind::kLearned, 8, Summarization::kMeanStd},
      {"melspec-kfl4pl8kfl4-ms", FeatureKind::kLearnedTwoLayer, 4, Summarization::kMeanStd},
  };
  return configs;
}

FeatureConfig FeatureConfig::parse(const std::string& label) {
  for (const auto& c : all()) {
    if (c.label == label) return c;
  }
  throw ConfigError("unknown feature configuration '" + label + "'");
}

RowVector mean_std(const Matrix& series) {
  if (series.rows() < 1) throw DomainError("mean_std: empty series");
  const Eigen::Index d = series.cols();
  RowVector out(2 * d);
  const RowVector mean = series.colwise().mean();
  out.head(d) = mean;
  out.tail(d) = ((series.rowwise() - mean).array().square().colwise().sum() /
                 static_cast<double>(series.rows()))
                    .sqrt()
                    .matrix();
  return out;
}

RowVector max_summary(const Matrix& series) {
  if (series.rows() < 1) throw DomainError("max_summary: empty series");
  return series.colwise().maxCoeff();
}

RowVector modulation_summary(const Matrix& series) {
  const Eigen::Index t = series.rows();
  if (t < 2) throw DomainError("modulation_summary: need at least 2 frames");
  std::size_t n = 1;
  while (n < static_cast<std::size_t>(t)) n <<= 1;
  const std::size_t bins = n / 2 + 1;
  const double band_width = static_cast<double>(bins) / kModulationBands;

  Eigen::FFT<double> fft;
  std::vector<double> signal(n);
  std::vector<std::complex<double>> spectrum;
  std::vector<double> magnitude(bins);
  RowVector out(kModulationBands * series.cols());
  for (Eigen::Index d = 0; d < series.cols(); ++d) {
    const double mean = series.col(d).mean();
    std::fill(signal.begin(), signal.end(), 0.0);
    for (Eigen::Index i = 0; i < t; ++i) signal[static_cast<std::size_t>(i)] = series(i, d) - mean;
    fft.fwd(spectrum, signal);
    for (std::size_t k = 0; k < bins; ++k) magnitude[k] = std::abs(spectrum[k]);
    for (int b = 0; b < kModulationBands; ++b) {
      const double lo = b * band_width;
      const double hi = (b + 1) * band_width;
      double acc = 0.0;
      for (auto k = static_cast<std::size_t>(lo); k < bins && static_cast<double>(k) < hi; ++k) {
        const double overlap =
            std::min(hi, static_cast<double>(k + 1)) - std::max(lo, static_cast<double>(k));
        if (overlap > 0.0) acc += overlap * magnitude[k];
      }
      out[d * kModulationBands + b] = acc / band_width;
    }
  }
  return out;
}

RowVector summarize(const Matrix& series, Summarization summary) {
  switch (summary) {
    case Summarization::kMeanStd: return mean_std(series);
    case Summarization::kMax: return max_summary(series);
    case Summarization::kModulation: return modulation_summary(series);
  }
  throw ConfigError("unknown summarization");
}

DecisionWindow DecisionWindow::parse(const std::string& text) {
  if (text == "whole") return whole();
  std::istringstream in(text);
  double s = 0.0;
  if (!(in >> s) || !in.eof() || !(s > 0.0)) {
    throw ConfigError("decision window must be 'whole' or a positive number of seconds, got '" +
                      text + "'");
  }
  return of_seconds(s);
}

std::string DecisionWindow::label() const {
  if (!seconds) return "whole";
  std::ostringstream out;
  out << *seconds;
  return out.str();
}

std::vector<WindowSlice> split_windows(const FeatureSeries& series, const DecisionWindow& window,
                                       int sample_rate) {
  const Eigen::Index t = series.frames();
  if (t < 1) throw DomainError("split_windows: empty series");
  const double hop_seconds = static_cast<double>(series.frame_hop) / sample_rate;
  std::vector<WindowSlice> out;
  if (!window.seconds) {
    out.push_back({series.values, 0, 0, 0.0, static_cast<double>(t) * hop_seconds});
    return out;
  }
  const auto len = std::max<Eigen::Index>(
      1, static_cast<Eigen::Index>(std::floor(*window.seconds * sample_rate / series.frame_hop)));
  int index = 0;
  for (Eigen::Index start = 0; start < t; start += len, ++index) {
    const Eigen::Index n = std::min(len, t - start);
    out.push_back({series.values.middleRows(start, n), index, start,
                   static_cast<double>(start) * hop_seconds,
                   static_cast<double>(start + n) * hop_seconds});
  }
  return out;
}

std::vector<SummaryVector> summarize_clip(const FeatureSeries& series, const FeatureConfig& config,
                                          const DecisionWindow& window,
                                          const std::string& clip_id) {
  std::vector<SummaryVector> out;
  for (const auto& w : split_windows(series, window)) {
    SummaryVector v;
    if (config.summary == Summarization::kModulation && w.values.rows() < 2) {
      v.values = RowVector::Zero(kModulationBands * w.values.cols());
    } else {
      v.values = summarize(w.values, config.summary);
    }
    v.config_label = config.label;
    v.clip_id = clip_id;
    v.window_index = w.index;
    v.window_span = {w.start_seconds, w.end_seconds};
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace birdfl
