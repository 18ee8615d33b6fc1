#pragma once

#include "birdfl/audio.hpp"
#include "birdfl/common.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace birdfl {

struct MelSpectrogram {
  Matrix values;  // T x 40, non-negative
  int frame_hop = kFrameSize;
  int sample_rate = kSampleRate;
  std::vector<double> band_centers;  // Hz, one per band

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index bands() const { return values.cols(); }
};

enum class DimMeaning : std::uint32_t { kMel = 0, kMfcc = 1, kEncoded = 2, kRandomProjected = 3 };

std::string to_string(DimMeaning meaning);

struct FeatureSeries {
  Matrix values;  // T x D
  DimMeaning meaning = DimMeaning::kMel;
  int frame_hop = kFrameSize;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dims() const { return values.cols(); }
};

FeatureSeries as_series(const MelSpectrogram& spec);

struct MelOptions {
  int bands = kMelBands;
  double min_hz = 500.0;
  // Per-spectrogram RMS normalization; disabled only by tests that compare
  // absolute energies.
  bool normalize_rms = true;
};

// Triangular Mel filterbank, area-normalized (each triangle integrates to 1
// over Hz), with edges spanning [min_hz, sample_rate / 2]. Returns a
// bands x (fft_size/2 + 1) weight matrix.
Matrix mel_filterbank(int bands, int fft_size, int sample_rate, double min_hz);
std::vector<double> mel_band_centers(int bands, int sample_rate, double min_hz);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Non-overlapping 1024-sample Hamming-windowed STFT magnitudes through the
// Mel filterbank. T = floor(len / 1024); clips shorter than one frame are
// zero-padded to a single frame. An all-silent clip stays all-zero.
MelSpectrogram mel_spectrogram(const AudioClip& clip, const MelOptions& options = {});

// Per-band median subtraction, clamped at zero.
MelSpectrogram noise_reduce(const MelSpectrogram& spec);

inline constexpr int kCepstralCoefficients = 13;
inline constexpr double kLogFloor = 1e-10;

// 13 orthonormal DCT-II coefficients of log(band + 1e-10) followed by their
// one-sided first differences over time (zero at t = 0): D = 26.
FeatureSeries mfcc_with_deltas(const MelSpectrogram& spec);

// Feature cache file: magic "BFFS", u32 version, u64 T, u64 D, u32 meaning,
// u32 frame_hop, then T*D float32 row-major. Values round-trip through
// float32.
void save_feature_series(const FeatureSeries& series, const std::filesystem::path& path);
FeatureSeries load_feature_series(const std::filesystem::path& path);
std::string encode_feature_series(const FeatureSeries& series);
FeatureSeries decode_feature_series(const std::string& bytes, const std::string& source);

// Rounds every value through float32 so in-memory results match what a
// cache round-trip would produce.
void quantize_to_float(Matrix& m);

}  // namespace birdfl
