#include "birdfl/encode.hpp"

#include <random>

namespace birdfl {

Matrix encode_patches(const Codebook& codebook, const Matrix& stacked) {
  if (stacked.cols() != codebook.dims()) {
    throw DimensionError("encode: patch width " + std::to_string(stacked.cols()) +
                         " does not match codebook dimension " +
                         std::to_string(codebook.dims()));
  }
  return codebook.whitening.apply(stacked) * codebook.bases.transpose();
}

Matrix encode(const Codebook& codebook, const Matrix& series) {
  const int p = codebook.frames_per_patch;
  if (series.cols() * p != codebook.dims()) {
    throw DimensionError("encode: frame width " + std::to_string(series.cols()) + " x " +
                         std::to_string(p) + " frames does not match codebook dimension " +
                         std::to_string(codebook.dims()));
  }
  if (series.rows() == 0) throw DomainError("encode: empty series");
  if (series.rows() >= p) return encode_patches(codebook, stack_frames(series, p));
  Matrix padded(p, series.cols());
  padded.topRows(series.rows()) = series;
  for (Eigen::Index r = series.rows(); r < p; ++r) padded.row(r) = series.row(series.rows() - 1);
  return encode_patches(codebook, stack_frames(padded, p));
}

FeatureSeries encode(const Codebook& codebook, const FeatureSeries& series) {
  return FeatureSeries{encode(codebook, series.values), DimMeaning::kEncoded, series.frame_hop};
}

Eigen::Index two_layer_min_frames(const TwoLayerModel& model) {
  return model.layer1.frames_per_patch - 1 +
         static_cast<Eigen::Index>(model.pool_factor) * (model.layer2.frames_per_patch - 1) + 1;
}

FeatureSeries encode_two_layer(const TwoLayerModel& model, const FeatureSeries& series) {
  const Eigen::Index need = two_layer_min_frames(model);
  if (series.frames() < need) {
    throw DomainError("encode_two_layer: clip has " + std::to_string(series.frames()) +
                      " frames, need at least " + std::to_string(need));
  }
  const Matrix first = encode(model.layer1, series.values);
  const Matrix pooled = max_pool_downsample(first, model.pool_factor);
  return FeatureSeries{encode_patches(model.layer2, stack_frames(pooled, model.layer2.frames_per_patch)),
                       DimMeaning::kEncoded, series.frame_hop * model.pool_factor};
}

RandomProjection RandomProjection::make(Eigen::Index input_dims, std::uint64_t seed,
                                        int output_dims) {
  if (input_dims < 1) throw DomainError("random projection: input dimension must be >= 1");
  RandomProjection rp;
  rp.seed = seed;
  rp.matrix.resize(input_dims, output_dims);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / std::sqrt(static_cast<double>(output_dims)));
  for (Eigen::Index i = 0; i < input_dims; ++i) {
    for (Eigen::Index j = 0; j < output_dims; ++j) rp.matrix(i, j) = gauss(rng);
  }
  return rp;
}

Matrix RandomProjection::apply(const Matrix& features) const {
  if (features.cols() != matrix.rows()) {
    throw DimensionError("random projection: expected " + std::to_string(matrix.rows()) +
                         " input dims, got " + std::to_string(features.cols()));
  }
  return features * matrix;
}

Matrix random_project(const Matrix& features, std::uint64_t seed) {
  return RandomProjection::make(features.cols(), seed).apply(features);
}

}  // namespace birdfl
