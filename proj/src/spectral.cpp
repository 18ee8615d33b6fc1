#include "birdfl/spectral.hpp"

#include "binary_io.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace birdfl {

std::string to_string(DimMeaning meaning) {
  switch (meaning) {
    case DimMeaning::kMel: return "mel";
    case DimMeaning::kMfcc: return "mfcc";
    case DimMeaning::kEncoded: return "encoded";
    case DimMeaning::kRandomProjected: return "random-projected";
  }
  return "unknown";
}

FeatureSeries as_series(const MelSpectrogram& spec) {
  return FeatureSeries{spec.values, DimMeaning::kMel, spec.frame_hop};
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

std::vector<double> mel_edges(int bands, int sample_rate, double min_hz) {
  const double lo = hz_to_mel(min_hz);
  const double hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(static_cast<std::size_t>(bands) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / (bands + 1));
  }
  return edges;
}

}  // namespace

std::vector<double> mel_band_centers(int bands, int sample_rate, double min_hz) {
  const auto edges = mel_edges(bands, sample_rate, min_hz);
  return {edges.begin() + 1, edges.end() - 1};
}

Matrix mel_filterbank(int bands, int fft_size, int sample_rate, double min_hz) {
  const auto edges = mel_edges(bands, sample_rate, min_hz);
  const int bins = fft_size / 2 + 1;
  Matrix fb = Matrix::Zero(bands, bins);
  for (int m = 0; m < bands; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    const double height = 2.0 / (hi - lo);
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      if (f < min_hz || f <= lo || f >= hi) continue;
      fb(m, k) = height * (f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid));
    }
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelOptions& options) {
  if (clip.samples.empty()) throw DomainError("mel_spectrogram: empty clip '" + clip.clip_id + "'");
  if (clip.sample_rate != kSampleRate) {
    throw DomainError("mel_spectrogram: expected 44100 Hz audio, got " +
                      std::to_string(clip.sample_rate));
  }
  const std::size_t n = clip.samples.size();
  const std::size_t frames = std::max<std::size_t>(1, n / kFrameSize);
  static const Matrix filterbank = mel_filterbank(kMelBands, kFrameSize, kSampleRate, 500.0);
  const Matrix fb = (options.bands == kMelBands && options.min_hz == 500.0)
                        ? filterbank
                        : mel_filterbank(options.bands, kFrameSize, kSampleRate, options.min_hz);

  std::vector<double> window(kFrameSize);
  for (int i = 0; i < kFrameSize; ++i) {
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (kFrameSize - 1));
  }

  Eigen::FFT<double> fft;
  std::vector<double> frame(kFrameSize);
  std::vector<std::complex<double>> spectrum;
  constexpr int kBins = kFrameSize / 2 + 1;
  Vector magnitude(kBins);

  MelSpectrogram out;
  out.sample_rate = clip.sample_rate;
  out.frame_hop = kFrameSize;
  out.band_centers = mel_band_centers(options.bands, kSampleRate, options.min_hz);
  out.values.resize(static_cast<Eigen::Index>(frames), options.bands);
  for (std::size_t t = 0; t < frames; ++t) {
    for (int i = 0; i < kFrameSize; ++i) {
      const std::size_t s = t * kFrameSize + static_cast<std::size_t>(i);
      frame[i] = (s < n ? clip.samples[s] : 0.0) * window[i];
    }
    fft.fwd(spectrum, frame);
    for (int k = 0; k < kBins; ++k) magnitude[k] = std::abs(spectrum[k]);
    out.values.row(static_cast<Eigen::Index>(t)) = (fb * magnitude).transpose();
  }

  if (options.normalize_rms) {
    const double rms = std::sqrt(out.values.squaredNorm() / static_cast<double>(out.values.size()));
    if (rms > 0.0) out.values /= rms;
  }
  return out;
}

MelSpectrogram noise_reduce(const MelSpectrogram& spec) {
  MelSpectrogram out = spec;
  const Eigen::Index frames = spec.values.rows();
  if (frames == 0) throw DomainError("noise_reduce: empty spectrogram");
  std::vector<double> column(static_cast<std::size_t>(frames));
  for (Eigen::Index m = 0; m < spec.values.cols(); ++m) {
    for (Eigen::Index t = 0; t < frames; ++t) column[t] = spec.values(t, m);
    std::sort(column.begin(), column.end());
    const std::size_t half = column.size() / 2;
    const double median =
        column.size() % 2 == 1 ? column[half] : 0.5 * (column[half - 1] + column[half]);
    for (Eigen::Index t = 0; t < frames; ++t) {
      out.values(t, m) = std::max(0.0, spec.values(t, m) - median);
    }
  }
  return out;
}

FeatureSeries mfcc_with_deltas(const MelSpectrogram& spec) {
  const Eigen::Index frames = spec.values.rows();
  const Eigen::Index bands = spec.values.cols();
  if (frames == 0) throw DomainError("mfcc_with_deltas: empty spectrogram");
  if (bands < kCepstralCoefficients) throw DimensionError("mfcc_with_deltas: too few bands");

  Matrix dct(kCepstralCoefficients, bands);
  for (int k = 0; k < kCepstralCoefficients; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / bands) : std::sqrt(2.0 / bands);
    for (Eigen::Index m = 0; m < bands; ++m) {
      dct(k, m) = s * std::cos(std::numbers::pi * k * (m + 0.5) / bands);
    }
  }
  const Matrix logmel = (spec.values.array() + kLogFloor).log().matrix();
  const Matrix ceps = logmel * dct.transpose();

  FeatureSeries out;
  out.meaning = DimMeaning::kMfcc;
  out.frame_hop = spec.frame_hop;
  out.values.resize(frames, 2 * kCepstralCoefficients);
  out.values.leftCols(kCepstralCoefficients) = ceps;
  out.values.row(0).rightCols(kCepstralCoefficients).setZero();
  for (Eigen::Index t = 1; t < frames; ++t) {
    out.values.row(t).rightCols(kCepstralCoefficients) = ceps.row(t) - ceps.row(t - 1);
  }
  return out;
}

namespace {
constexpr char kSeriesMagic[5] = "BFFS";
constexpr std::uint32_t kSeriesVersion = 1;
}  // namespace

std::string encode_feature_series(const FeatureSeries& series) {
  detail::ByteWriter w;
  w.put_bytes(kSeriesMagic, 4);
  w.put<std::uint32_t>(kSeriesVersion);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(series.values.rows()));
  w.put<std::uint64_t>(static_cast<std::uint64_t>(series.values.cols()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(series.meaning));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(series.frame_hop));
  w.put_floats(series.values.reshaped<Eigen::RowMajor>());
  return w.bytes();
}

FeatureSeries decode_feature_series(const std::string& bytes, const std::string& source) {
  detail::ByteReader r(bytes, source);
  r.expect_magic(kSeriesMagic);
  const auto version = r.get<std::uint32_t>();
  if (version != kSeriesVersion) {
    throw IoError("'" + source + "': unsupported feature cache version " + std::to_string(version));
  }
  const auto rows = r.get<std::uint64_t>();
  const auto cols = r.get<std::uint64_t>();
  const auto meaning = r.get<std::uint32_t>();
  if (meaning > static_cast<std::uint32_t>(DimMeaning::kRandomProjected)) {
    throw IoError("'" + source + "': unknown dim meaning " + std::to_string(meaning));
  }
  FeatureSeries s;
  s.meaning = static_cast<DimMeaning>(meaning);
  s.frame_hop = static_cast<int>(r.get<std::uint32_t>());
  const auto values = r.get_floats(rows * cols);
  s.values = Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(rows),
                                      static_cast<Eigen::Index>(cols));
  if (!r.at_end()) throw IoError("'" + source + "': trailing bytes");
  return s;
}

void save_feature_series(const FeatureSeries& series, const std::filesystem::path& path) {
  detail::atomic_write(path, encode_feature_series(series));
}

FeatureSeries load_feature_series(const std::filesystem::path& path) {
  return decode_feature_series(detail::read_file(path), path.string());
}

void quantize_to_float(Matrix& m) { m = m.cast<float>().cast<double>(); }

}  // namespace birdfl
