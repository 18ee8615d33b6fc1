#pragma once

#include "birdfl/featlearn.hpp"
#include "birdfl/spectral.hpp"

#include <cstdint>

namespace birdfl {

// Dot products of whitened stacked patches with every base:
// ((P - mean) W^T) B^T, one row per patch, one column per base.
Matrix encode_patches(const Codebook& codebook, const Matrix& stacked);

// Stacks frames_per_patch frames, whitens, projects onto the bases.
// Output is (T - p + 1) x k. Series shorter than one patch are padded by
// repeating their last frame. Throws DimensionError when
// frame width * p differs from the codebook dimension.
FeatureSeries encode(const Codebook& codebook, const FeatureSeries& series);
Matrix encode(const Codebook& codebook, const Matrix& series);

// Shortest input accepted by encode_two_layer: one layer-1 patch per pooled
// frame for enough pooled frames to fill one layer-2 patch.
Eigen::Index two_layer_min_frames(const TwoLayerModel& model);

// encode(layer1) -> max-pool -> encode(layer2). Throws DomainError when the
// input is shorter than two_layer_min_frames (28 frames for p=4, pool 8).
// The output frame hop is frame_hop * pool_factor.
FeatureSeries encode_two_layer(const TwoLayerModel& model, const FeatureSeries& series);

inline constexpr int kProjectionDims = 200;

// Gaussian projection with entries N(0, 1/200), drawn row-major from a
// seeded mt19937_64.
struct RandomProjection {
  Matrix matrix;  // D_in x 200
  std::uint64_t seed = 0;

  static RandomProjection make(Eigen::Index input_dims, std::uint64_t seed,
                               int output_dims = kProjectionDims);
  Matrix apply(const Matrix& features) const;
};

// features (N x D_in) times a fresh seeded projection; N x 200.
Matrix random_project(const Matrix& features, std::uint64_t seed);

}  // namespace birdfl
