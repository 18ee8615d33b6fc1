#include "birdfl/encode.hpp"
#include "birdfl/summarize.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace birdfl {
namespace {

using testing::gaussian_matrix;

Codebook identity_codebook(Matrix bases, int p) {
  Codebook cb;
  cb.frames_per_patch = p;
  cb.whitening = WhiteningTransform::identity(bases.cols());
  cb.counts.assign(static_cast<std::size_t>(bases.rows()), 0);
  cb.bases = std::move(bases);
  return cb;
}

TEST(Encode, DotWithUnitAxis) {
  Matrix b = Matrix::Zero(2, 4);
  b(0, 0) = 1.0;
  b(1, 1) = 1.0;
  Matrix x = Matrix::Zero(1, 4);
  x(0, 0) = 3.0;
  const Matrix y = encode(identity_codebook(b, 1), x);
  EXPECT_EQ(y(0, 0), 3.0);
  EXPECT_EQ(y(0, 1), 0.0);
}

TEST(Encode, IdentityWhiteningIsPlainProduct) {
  const Matrix b = gaussian_matrix(7, 5, 1).rowwise().normalized();
  const Matrix x = gaussian_matrix(20, 5, 2);
  EXPECT_LT((encode(identity_codebook(b, 1), x) - x * b.transpose()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Encode, LinearAndLocal) {
  const Codebook cb = identity_codebook(gaussian_matrix(6, 12, 3).rowwise().normalized(), 4);
  const Matrix x = gaussian_matrix(30, 3, 4), y = gaussian_matrix(30, 3, 5);
  const Matrix ex = encode(cb, x), ey = encode(cb, y);
  EXPECT_EQ(ex.rows(), 27);
  EXPECT_LT((encode(cb, Matrix(x + y)) - ex - ey).cwiseAbs().maxCoeff(), 1e-12);
  Matrix z = x;
  z(29, 1) += 10.0;
  const Matrix ez = encode(cb, z);
  EXPECT_EQ(ez.topRows(26), ex.topRows(26));
  EXPECT_NE(ez.row(26), ex.row(26));
}

TEST(Encode, DimensionMismatchAndShortPadding) {
  const Codebook cb = identity_codebook(gaussian_matrix(3, 8, 6).rowwise().normalized(), 2);
  EXPECT_THROW(encode(cb, gaussian_matrix(5, 3, 1)), DimensionError);
  const Matrix one = gaussian_matrix(1, 4, 7);
  Matrix twice(2, 4);
  twice << one, one;
  EXPECT_EQ(encode(cb, one), encode(cb, twice));
}

TwoLayerModel identity_two_layer(int k1, int m, int k2) {
  TwoLayerModel t;
  t.layer1 = identity_codebook(gaussian_matrix(k1, 4 * m, 8).rowwise().normalized(), 4);
  t.layer2 = identity_codebook(gaussian_matrix(k2, 4 * k1, 9).rowwise().normalized(), 4);
  t.layer2.layer_index = 2;
  return t;
}

TEST(EncodeTwoLayer, CompositionLengths) {
  const TwoLayerModel t = identity_two_layer(5, 3, 6);
  const FeatureSeries s{gaussian_matrix(36, 3, 10), DimMeaning::kMel, 1024};
  const FeatureSeries out = encode_two_layer(t, s);
  EXPECT_EQ(encode(t.layer1, s.values).rows(), 33);
  EXPECT_EQ(max_pool_downsample(encode(t.layer1, s.values), 8).rows(), 5);
  EXPECT_EQ(out.frames(), 2);
  EXPECT_EQ(out.dims(), 6);
  EXPECT_EQ(out.frame_hop, 8192);
  EXPECT_EQ(two_layer_min_frames(t), 28);
  EXPECT_THROW(encode_two_layer(t, FeatureSeries{gaussian_matrix(27, 3, 1), DimMeaning::kMel, 1024}), DomainError);
  EXPECT_EQ(encode_two_layer(t, FeatureSeries{gaussian_matrix(28, 3, 1), DimMeaning::kMel, 1024}).frames(), 1);
}

TEST(EncodeTwoLayer, ZeroInputGivesZeroOutput) {
  const TwoLayerModel t = identity_two_layer(5, 3, 6);
  const FeatureSeries out = encode_two_layer(t, FeatureSeries{Matrix::Zero(40, 3), DimMeaning::kMel, 1024});
  EXPECT_EQ(out.values.cwiseAbs().maxCoeff(), 0.0);
}

TEST(RandomProjection, WidthsAndDeterminism) {
  EXPECT_EQ(random_project(gaussian_matrix(4, 52, 1), 5).cols(), 200);
  EXPECT_EQ(random_project(gaussian_matrix(4, 1000, 1), 5).cols(), 200);
  const Matrix x = gaussian_matrix(3, 30, 2);
  EXPECT_EQ(random_project(x, 9), random_project(x, 9));
  EXPECT_NE(random_project(x, 9), random_project(x, 10));
  const RandomProjection rp = RandomProjection::make(1000, 3);
  const double var = rp.matrix.array().square().mean();
  EXPECT_NEAR(var, 1.0 / 200, 1e-4);
}

TEST(RandomProjection, DistancesRoughlyPreserved) {
  const Matrix x = gaussian_matrix(100, 1000, 11);
  const Matrix y = random_project(x, 12);
  std::vector<double> distortion;
  for (Eigen::Index i = 0; i < 100; ++i) {
    for (Eigen::Index j = i + 1; j < 100; ++j) {
      const double d0 = (x.row(i) - x.row(j)).norm(), d1 = (y.row(i) - y.row(j)).norm();
      distortion.push_back(std::abs(d1 / d0 - 1.0));
    }
  }
  std::nth_element(distortion.begin(), distortion.begin() + distortion.size() / 2, distortion.end());
  EXPECT_LT(distortion[distortion.size() / 2], 0.25);
}

TEST(Summaries, MeanStdAndMax) {
  const Matrix c = Matrix::Constant(7, 40, 2.0);
  const RowVector ms = mean_std(c);
  EXPECT_EQ(ms.size(), 80);
  EXPECT_EQ(ms.tail(40).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(mean_std(gaussian_matrix(1, 5, 1)).tail(5).cwiseAbs().maxCoeff(), 0.0);
  Matrix v(3, 1);
  v << 1, 2, 6;
  EXPECT_DOUBLE_EQ(mean_std(v)[1], std::sqrt(14.0 / 3.0));

  Matrix spike = Matrix::Zero(10, 26);
  spike(4, 3) = 9.0;
  const RowVector mx = max_summary(spike);
  EXPECT_EQ(mx.size(), 26);
  EXPECT_EQ(mx[3], 9.0);
  const Matrix g = gaussian_matrix(25, 6, 3);
  EXPECT_TRUE((max_summary(g).array() >= g.colwise().mean().array()).all());
}

TEST(Summaries, Modulation) {
  EXPECT_EQ(modulation_summary(gaussian_matrix(50, 26, 1)).size(), 260);
  EXPECT_EQ(modulation_summary(gaussian_matrix(50, 40, 1)).size(), 400);
  EXPECT_LT(modulation_summary(Matrix::Constant(33, 4, 5.0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(modulation_summary(gaussian_matrix(1, 4, 1)), DomainError);
  // Slow vs fast oscillation land in different bands.
  Matrix slow(64, 1), fast(64, 1);
  for (int t = 0; t < 64; ++t) {
    slow(t, 0) = std::sin(2 * std::numbers::pi * 2 * t / 64.0);
    fast(t, 0) = std::sin(2 * std::numbers::pi * 28 * t / 64.0);
  }
  Eigen::Index bs, bf;
  modulation_summary(slow).maxCoeff(&bs);
  modulation_summary(fast).maxCoeff(&bf);
  EXPECT_LT(bs, bf);
}

TEST(Summaries, TimeReversalAndDilation) {
  const Matrix x = gaussian_matrix(16, 5, 4);
  const Matrix r = x.colwise().reverse();
  EXPECT_LT((mean_std(x) - mean_std(r)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(max_summary(x), max_summary(r));
  EXPECT_LT((modulation_summary(x) - modulation_summary(r)).cwiseAbs().maxCoeff(), 1e-9);
  Matrix dilated(32, 5);
  for (Eigen::Index t = 0; t < 32; ++t) dilated.row(t) = x.row(t / 2);
  EXPECT_LT((mean_std(x) - mean_std(dilated)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_GT((modulation_summary(x) - modulation_summary(dilated)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(FeatureConfigs, TwelveLabelsWithTableWidths) {
  const std::map<std::string, int> expected{
      {"mfcc-ms", 52},          {"mfcc-maxp", 26},        {"mfcc-modul", 260},
      {"melspec-ms", 80},       {"melspec-maxp", 40},     {"melspec-modul", 400},
      {"melspec-kfl1-ms", 1000}, {"melspec-kfl2-ms", 1000}, {"melspec-kfl3-ms", 1000},
      {"melspec-kfl4-ms", 1000}, {"melspec-kfl8-ms", 1000}, {"melspec-kfl4pl8kfl4-ms", 1000}};
  ASSERT_EQ(FeatureConfig::all().size(), 12u);
  for (const auto& c : FeatureConfig::all()) {
    EXPECT_EQ(c.summary_dims(), expected.at(c.label)) << c.label;
    if (c.learned()) EXPECT_EQ(c.summary, Summarization::kMeanStd) << c.label;
    const FeatureSeries s{gaussian_matrix(40, c.series_dims(), 1), DimMeaning::kMel, 1024};
    EXPECT_EQ(summarize_clip(s, c, DecisionWindow::whole(), "x").front().values.size(), expected.at(c.label));
  }
  EXPECT_THROW(FeatureConfig::parse("melspec-kfl4-maxp"), ConfigError);
}

FeatureSeries seconds_of_frames(double seconds) {
  const auto t = static_cast<Eigen::Index>(std::floor(seconds * kSampleRate / kFrameSize));
  return FeatureSeries{gaussian_matrix(t, 3, 5), DimMeaning::kMel, kFrameSize};
}

TEST(Windows, CountsAndReconstruction) {
  // Window length is floor(60 * 44100 / 1024) = 2583 frames.
  const FeatureSeries exact{gaussian_matrix(2 * 2583, 3, 5), DimMeaning::kMel, kFrameSize};
  EXPECT_EQ(split_windows(exact, DecisionWindow::of_seconds(60)).size(), 2u);
  // A literal 120 s clip has 5167 frames: two full windows and a one-frame tail.
  const auto literal = split_windows(seconds_of_frames(120), DecisionWindow::of_seconds(60));
  ASSERT_EQ(literal.size(), 3u);
  EXPECT_EQ(literal.back().values.rows(), 1);
  EXPECT_EQ(split_windows(seconds_of_frames(4), DecisionWindow::of_seconds(5)).size(), 1u);
  const FeatureSeries s = seconds_of_frames(12.3);
  const auto whole = split_windows(s, DecisionWindow::whole());
  ASSERT_EQ(whole.size(), 1u);
  EXPECT_EQ(whole[0].values, s.values);

  const auto w = split_windows(s, DecisionWindow::of_seconds(1));
  Eigen::Index rows = 0;
  for (const auto& slice : w) {
    EXPECT_EQ(slice.values, s.values.middleRows(rows, slice.values.rows()));
    EXPECT_EQ(slice.start_frame, rows);
    rows += slice.values.rows();
  }
  EXPECT_EQ(rows, s.frames());
  EXPECT_EQ(w.front().values.rows(), 43);
}

TEST(Windows, ParseAndSingleFrameModulation) {
  EXPECT_EQ(DecisionWindow::parse("whole"), DecisionWindow::whole());
  EXPECT_EQ(*DecisionWindow::parse("5").seconds, 5.0);
  EXPECT_THROW(DecisionWindow::parse("-1"), ConfigError);
  EXPECT_THROW(DecisionWindow::parse("abc"), ConfigError);
  const FeatureSeries s{gaussian_matrix(44, 40, 1), DimMeaning::kMel, 1024};
  const auto v = summarize_clip(s, FeatureConfig::parse("melspec-modul"), DecisionWindow::of_seconds(1), "c");
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v[1].values.size(), 400);
  EXPECT_EQ(v[1].values.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(v[1].window_index, 1);
}

}  // namespace
}  // namespace birdfl
