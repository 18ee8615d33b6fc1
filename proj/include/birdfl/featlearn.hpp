#pragma once

#include "birdfl/common.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <vector>

namespace birdfl {

// A replayable stream of time series. Each invocation must visit the same
// series in the same order; learning makes two passes over it.
using SeriesVisitor = std::function<void(const Matrix&)>;
using SeriesStream = std::function<void(const SeriesVisitor&)>;

// Stream over an owned list of series.
SeriesStream stream_of(std::vector<Matrix> series);

// 1 - a.b / (|a||b|). Throws DomainError if either vector is zero and
// DimensionError on length mismatch.
double cosine_distance(std::span<const double> a, std::span<const double> b);

// Vitter's Algorithm R: a uniform sample without replacement of fixed
// capacity over a stream of unknown length.
template <typename T, typename Rng = std::mt19937_64>
class ReservoirSampler {
 public:
  ReservoirSampler(std::size_t capacity, Rng& rng) : capacity_(capacity), rng_(rng) {
    samples_.reserve(capacity_);
  }

  void add(const T& item) {
    ++seen_;
    if (samples_.size() < capacity_) {
      samples_.push_back(item);
      return;
    }
    std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
    const std::uint64_t j = pick(rng_);
    if (j < capacity_) samples_[static_cast<std::size_t>(j)] = item;
  }

  std::size_t capacity() const { return capacity_; }
  std::uint64_t seen() const { return seen_; }
  const std::vector<T>& samples() const { return samples_; }
  std::vector<T> take() { return std::move(samples_); }

 private:
  std::size_t capacity_;
  std::uint64_t seen_ = 0;
  std::vector<T> samples_;
  Rng& rng_;
};

// Single pass over every row of every series in `stream`; returns
// min(n, rows) rows sampled uniformly without replacement, shuffled.
Matrix reservoir_sample(const SeriesStream& stream, std::size_t n, std::uint64_t seed);

struct WhiteningTransform {
  RowVector mean;
  Matrix matrix;  // D x D, symmetric (ZCA)
  double epsilon = 0.0;

  Eigen::Index dims() const { return mean.size(); }
  // Row-wise: (X - mean) * matrix^T.
  Matrix apply(const Matrix& rows) const;
  // V diag(sqrt(lambda + eps)) V^T, the inverse of `matrix`.
  Matrix inverse_matrix() const;

  static WhiteningTransform identity(Eigen::Index dims);
};

// ZCA whitening V diag(1/sqrt(lambda + eps)) V^T from the eigendecomposition
// of the sample covariance (divisor N - 1). Requires N > D.
WhiteningTransform fit_whitening(const Matrix& sample, double epsilon = 1e-8);

// Row n of the result concatenates frames n .. n+p-1 of `series`.
Matrix stack_frames(const Matrix& series, int frames_per_patch);

// Elementwise max over consecutive blocks of `factor` rows; the trailing
// partial block is pooled as-is. Output has ceil(T / factor) rows.
Matrix max_pool_downsample(const Matrix& series, int factor = 8);

struct Codebook {
  Matrix bases;  // k x D, unit-norm rows
  std::vector<std::uint64_t> counts;
  int frames_per_patch = 1;
  WhiteningTransform whitening;
  int layer_index = 1;

  Eigen::Index k() const { return bases.rows(); }
  Eigen::Index dims() const { return bases.cols(); }
  // Input frame width M (dims / frames_per_patch).
  Eigen::Index frame_dims() const { return dims() / frames_per_patch; }
};

struct SkmeansParams {
  int k = 500;
  int frames_per_patch = 1;
  std::size_t sample_size = 32768;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  // When false the whitening stage is the identity; used for
  // low-dimensional demonstrations where directions are compared in input
  // space.
  bool whiten = true;
  int layer_index = 1;
};

// Pass 1: reservoir-sample patches, shuffle, fit whitening on the sample,
// and seed the k bases from the first k distinct whitened patches
// (distinctness judged before unit normalization).
Codebook skmeans_initialize(const SeriesStream& stream, const SkmeansParams& params);

// Pass 2: every patch is whitened, unit-normalized and assigned to the base
// with the largest dot product; that base moves to
// normalize(c + (x - c) / (n_c + 1)) and n_c is incremented. Patches whose
// whitened norm is below 1e-12 are skipped.
void skmeans_refine(Codebook& codebook, const SeriesStream& stream);

// Both passes.
Codebook skmeans_learn(const SeriesStream& stream, const SkmeansParams& params);

struct TwoLayerModel {
  Codebook layer1;
  int pool_factor = 8;
  Codebook layer2;
};

struct TwoLayerParams {
  SkmeansParams layer1;  // frames_per_patch forced to 4
  SkmeansParams layer2;  // frames_per_patch forced to 4, layer_index 2
};

// Layer 1 on the raw stream; layer 2 on the stream re-encoded through layer
// 1 and max-pooled by 8. Series too short for a layer-2 patch are skipped.
TwoLayerModel learn_two_layer(const SeriesStream& stream, const TwoLayerParams& params);

// Rounds every stored value through float32 (what the file format keeps).
void quantize(Codebook& codebook);

// Codebook file: magic "SKCB", u32 version, u64 k, u64 D,
// u32 frames_per_patch, u32 layer_index, f64 epsilon, then whitening mean
// (D float32), whitening matrix (D*D float32), bases (k*D float32), counts
// (k u64), all little-endian.
void save_codebook(const Codebook& codebook, const std::filesystem::path& path);
Codebook load_codebook(const std::filesystem::path& path);
std::string encode_codebook(const Codebook& codebook);
Codebook decode_codebook(const std::string& bytes, const std::string& source);

// Two-layer file: magic "SK2L", u32 version, u32 pool_factor, then the
// layer-1 and layer-2 codebook records.
void save_two_layer(const TwoLayerModel& model, const std::filesystem::path& path);
TwoLayerModel load_two_layer(const std::filesystem::path& path);
std::string encode_two_layer(const TwoLayerModel& model);
TwoLayerModel decode_two_layer(const std::string& bytes, const std::string& source);

}  // namespace birdfl
