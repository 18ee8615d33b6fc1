#include "birdfl/featlearn.hpp"

#include "binary_io.hpp"
#include "birdfl/encode.hpp"
#include "birdfl/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string_view>
#include <unordered_set>

namespace birdfl {

SeriesStream stream_of(std::vector<Matrix> series) {
  auto owned = std::make_shared<const std::vector<Matrix>>(std::move(series));
  return [owned](const SeriesVisitor& visit) {
    for (const auto& s : *owned) visit(s);
  };
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_distance: length mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_distance: zero vector");
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

Matrix reservoir_sample(const SeriesStream& stream, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw DomainError("reservoir_sample: sample size must be >= 1");
  std::mt19937_64 rng(seed);
  ReservoirSampler<RowVector> sampler(n, rng);
  Eigen::Index dims = -1;
  stream([&](const Matrix& series) {
    if (series.rows() == 0) return;
    if (dims < 0) dims = series.cols();
    if (series.cols() != dims) throw DimensionError("reservoir_sample: inconsistent row width");
    for (Eigen::Index r = 0; r < series.rows(); ++r) sampler.add(series.row(r));
  });
  if (sampler.seen() == 0) throw DomainError("reservoir_sample: empty stream");
  auto rows = sampler.take();
  std::shuffle(rows.begin(), rows.end(), rng);
  Matrix out(static_cast<Eigen::Index>(rows.size()), dims);
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = rows[i];
  return out;
}

Matrix WhiteningTransform::apply(const Matrix& rows) const {
  if (rows.cols() != dims()) throw DimensionError("whitening: dimension mismatch");
  return (rows.rowwise() - mean) * matrix.transpose();
}

Matrix WhiteningTransform::inverse_matrix() const {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(matrix);
  // matrix = V diag(1/sqrt(l + eps)) V^T, so its eigenvalues are s = 1/sqrt(l + eps).
  const Vector s = eig.eigenvalues();
  if ((s.array() <= 0.0).any()) throw DomainError("whitening matrix is not positive definite");
  return eig.eigenvectors() * s.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
}

WhiteningTransform WhiteningTransform::identity(Eigen::Index dims) {
  return {RowVector::Zero(dims), Matrix::Identity(dims, dims), 0.0};
}

WhiteningTransform fit_whitening(const Matrix& sample, double epsilon) {
  const Eigen::Index n = sample.rows();
  const Eigen::Index d = sample.cols();
  if (n <= d) {
    throw DomainError("fit_whitening: need more samples than dimensions (N=" + std::to_string(n) +
                      ", D=" + std::to_string(d) + ")");
  }
  WhiteningTransform w;
  w.epsilon = epsilon;
  w.mean = sample.colwise().mean();
  const Matrix centered = sample.rowwise() - w.mean;
  const Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw DomainError("fit_whitening: eigendecomposition failed");
  const Vector scale =
      (eig.eigenvalues().array().max(0.0) + epsilon).sqrt().inverse().matrix();
  w.matrix = eig.eigenvectors() * scale.asDiagonal() * eig.eigenvectors().transpose();
  if (!w.matrix.allFinite()) throw DomainError("fit_whitening: non-finite transform");
  return w;
}

Matrix stack_frames(const Matrix& series, int frames_per_patch) {
  const Eigen::Index p = frames_per_patch;
  if (p < 1) throw DomainError("stack_frames: frames_per_patch must be >= 1");
  const Eigen::Index t = series.rows();
  if (t < p) {
    throw DomainError("stack_frames: series has " + std::to_string(t) + " frames, need " +
                      std::to_string(p));
  }
  const Eigen::Index m = series.cols();
  Matrix out(t - p + 1, p * m);
  for (Eigen::Index n = 0; n + p <= t; ++n) {
    for (Eigen::Index d = 0; d < p; ++d) out.row(n).segment(d * m, m) = series.row(n + d);
  }
  return out;
}

Matrix max_pool_downsample(const Matrix& series, int factor) {
  if (factor < 1) throw DomainError("max_pool_downsample: factor must be >= 1");
  const Eigen::Index t = series.rows();
  if (t < 1) throw DomainError("max_pool_downsample: empty series");
  const Eigen::Index rows = (t + factor - 1) / factor;
  Matrix out(rows, series.cols());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Eigen::Index begin = r * factor;
    const Eigen::Index len = std::min<Eigen::Index>(factor, t - begin);
    out.row(r) = series.middleRows(begin, len).colwise().maxCoeff();
  }
  return out;
}

namespace {

constexpr double kMinPatchNorm = 1e-12;

// Visits the stacked patches of every series long enough to hold one.
SeriesStream patch_stream(const SeriesStream& stream, int frames_per_patch) {
  return [stream, frames_per_patch](const SeriesVisitor& visit) {
    stream([&](const Matrix& series) {
      if (series.rows() < frames_per_patch) return;
      visit(frames_per_patch == 1 ? series : stack_frames(series, frames_per_patch));
    });
  };
}

}  // namespace

Codebook skmeans_initialize(const SeriesStream& stream, const SkmeansParams& params) {
  if (params.k < 1) throw ConfigError("skmeans: k must be >= 1");
  const auto patches = patch_stream(stream, params.frames_per_patch);
  const Matrix sample = reservoir_sample(patches, std::max<std::size_t>(params.sample_size, 1),
                                         params.seed);
  if (sample.rows() < params.k) {
    throw DomainError("skmeans: stream yields " + std::to_string(sample.rows()) +
                      " patches, fewer than k=" + std::to_string(params.k));
  }

  Codebook cb;
  cb.frames_per_patch = params.frames_per_patch;
  cb.layer_index = params.layer_index;
  cb.whitening = params.whiten ? fit_whitening(sample, params.epsilon)
                               : WhiteningTransform::identity(sample.cols());
  const Matrix white = cb.whitening.apply(sample);

  cb.bases.resize(params.k, sample.cols());
  cb.counts.assign(static_cast<std::size_t>(params.k), 0);
  std::unordered_set<std::string_view> seen;
  Eigen::Index filled = 0;
  const std::size_t row_bytes = static_cast<std::size_t>(white.cols()) * sizeof(double);
  for (Eigen::Index r = 0; r < white.rows() && filled < params.k; ++r) {
    const double norm = white.row(r).norm();
    if (norm < kMinPatchNorm) continue;
    const std::string_view key(reinterpret_cast<const char*>(white.row(r).data()), row_bytes);
    if (!seen.insert(key).second) continue;
    cb.bases.row(filled++) = white.row(r) / norm;
  }
  if (filled < params.k) {
    throw DomainError("skmeans: only " + std::to_string(filled) +
                      " distinct patches available for k=" + std::to_string(params.k));
  }
  return cb;
}

void skmeans_refine(Codebook& codebook, const SeriesStream& stream) {
  const auto patches = patch_stream(stream, codebook.frames_per_patch);
  Matrix& bases = codebook.bases;
  Vector dots(bases.rows());
  RowVector x(bases.cols());
  patches([&](const Matrix& stacked) {
    if (stacked.cols() != bases.cols()) throw DimensionError("skmeans: patch width mismatch");
    const Matrix white = codebook.whitening.apply(stacked);
    for (Eigen::Index r = 0; r < white.rows(); ++r) {
      const double norm = white.row(r).norm();
      if (norm < kMinPatchNorm) continue;
      x = white.row(r) / norm;
      dots.noalias() = bases * x.transpose();
      Eigen::Index j = 0;
      dots.maxCoeff(&j);
      auto& n = codebook.counts[static_cast<std::size_t>(j)];
      const double w = 1.0 / static_cast<double>(n + 1);
      RowVector c = bases.row(j) + w * (x - bases.row(j));
      const double cn = c.norm();
      bases.row(j) = cn < kMinPatchNorm ? x : RowVector(c / cn);
      ++n;
    }
  });
}

Codebook skmeans_learn(const SeriesStream& stream, const SkmeansParams& params) {
  Codebook cb = skmeans_initialize(stream, params);
  skmeans_refine(cb, stream);
  return cb;
}

TwoLayerModel learn_two_layer(const SeriesStream& stream, const TwoLayerParams& params) {
  TwoLayerModel model;
  SkmeansParams p1 = params.layer1;
  p1.frames_per_patch = 4;
  p1.layer_index = 1;
  model.layer1 = skmeans_learn(stream, p1);
  quantize(model.layer1);

  const Codebook& layer1 = model.layer1;
  const int pool = model.pool_factor;
  SeriesStream pooled = [stream, &layer1, pool](const SeriesVisitor& visit) {
    stream([&](const Matrix& series) {
      if (series.rows() < layer1.frames_per_patch) return;
      visit(max_pool_downsample(encode_patches(layer1, stack_frames(series, layer1.frames_per_patch)),
                                pool));
    });
  };
  SkmeansParams p2 = params.layer2;
  p2.frames_per_patch = 4;
  p2.layer_index = 2;
  model.layer2 = skmeans_learn(pooled, p2);
  quantize(model.layer2);
  return model;
}

void quantize(Codebook& codebook) {
  quantize_to_float(codebook.bases);
  quantize_to_float(codebook.whitening.matrix);
  codebook.whitening.mean = codebook.whitening.mean.cast<float>().cast<double>();
}

namespace {

constexpr char kCodebookMagic[5] = "SKCB";
constexpr char kTwoLayerMagic[5] = "SK2L";
constexpr std::uint32_t kCodebookVersion = 1;

void write_codebook(detail::ByteWriter& w, const Codebook& cb) {
  const auto d = static_cast<std::uint64_t>(cb.dims());
  w.put_bytes(kCodebookMagic, 4);
  w.put<std::uint32_t>(kCodebookVersion);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(cb.k()));
  w.put<std::uint64_t>(d);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cb.frames_per_patch));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(cb.layer_index));
  w.put<double>(cb.whitening.epsilon);
  if (static_cast<std::uint64_t>(cb.whitening.dims()) != d) {
    throw DimensionError("codebook whitening width does not match bases");
  }
  w.put_floats(cb.whitening.mean.reshaped());
  w.put_floats(cb.whitening.matrix.reshaped<Eigen::RowMajor>());
  w.put_floats(cb.bases.reshaped<Eigen::RowMajor>());
  for (auto c : cb.counts) w.put<std::uint64_t>(c);
}

Codebook read_codebook(detail::ByteReader& r) {
  r.expect_magic(kCodebookMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kCodebookVersion) {
    throw IoError("'" + r.source() + "': unsupported codebook version " + std::to_string(version));
  }
  const auto k = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  const auto d = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  Codebook cb;
  cb.frames_per_patch = static_cast<int>(r.get<std::uint32_t>());
  cb.layer_index = static_cast<int>(r.get<std::uint32_t>());
  cb.whitening.epsilon = r.get<double>();
  if (cb.frames_per_patch < 1 || d % cb.frames_per_patch != 0) {
    throw IoError("'" + r.source() + "': inconsistent frames_per_patch");
  }
  auto mean = r.get_floats(static_cast<std::size_t>(d));
  cb.whitening.mean = Eigen::Map<const RowVector>(mean.data(), d);
  auto matrix = r.get_floats(static_cast<std::size_t>(d * d));
  cb.whitening.matrix = Eigen::Map<const Matrix>(matrix.data(), d, d);
  auto bases = r.get_floats(static_cast<std::size_t>(k * d));
  cb.bases = Eigen::Map<const Matrix>(bases.data(), k, d);
  cb.counts.resize(static_cast<std::size_t>(k));
  for (auto& c : cb.counts) c = r.get<std::uint64_t>();
  return cb;
}

}  // namespace

std::string encode_codebook(const Codebook& codebook) {
  detail::ByteWriter w;
  write_codebook(w, codebook);
  return w.bytes();
}

Codebook decode_codebook(const std::string& bytes, const std::string& source) {
  detail::ByteReader r(bytes, source);
  Codebook cb = read_codebook(r);
  if (!r.at_end()) throw IoError("'" + source + "': trailing bytes");
  return cb;
}

void save_codebook(const Codebook& codebook, const std::filesystem::path& path) {
  detail::atomic_write(path, encode_codebook(codebook));
}

Codebook load_codebook(const std::filesystem::path& path) {
  return decode_codebook(detail::read_file(path), path.string());
}

std::string encode_two_layer(const TwoLayerModel& model) {
  detail::ByteWriter w;
  w.put_bytes(kTwoLayerMagic, 4);
  w.put<std::uint32_t>(kCodebookVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.pool_factor));
  write_codebook(w, model.layer1);
  write_codebook(w, model.layer2);
  return w.bytes();
}

TwoLayerModel decode_two_layer(const std::string& bytes, const std::string& source) {
  detail::ByteReader r(bytes, source);
  r.expect_magic(kTwoLayerMagic);
  if (r.get<std::uint32_t>() != kCodebookVersion) {
    throw IoError("'" + source + "': unsupported two-layer version");
  }
  TwoLayerModel m;
  m.pool_factor = static_cast<int>(r.get<std::uint32_t>());
  m.layer1 = read_codebook(r);
  m.layer2 = read_codebook(r);
  if (!r.at_end()) throw IoError("'" + source + "': trailing bytes");
  return m;
}

void save_two_layer(const TwoLayerModel& model, const std::filesystem::path& path) {
  detail::atomic_write(path, encode_two_layer(model));
}

TwoLayerModel load_two_layer(const std::filesystem::path& path) {
  return decode_two_layer(detail::read_file(path), path.string());
}

}  // namespace birdfl
