#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace birdfl {

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 0;
  std::string clip_id;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

// Raw multichannel PCM as read from a WAV file, interleaved, scaled to [-1, 1].
struct WavData {
  std::vector<double> interleaved;
  int channels = 0;
  int sample_rate = 0;
};

// Reads RIFF/WAVE: integer PCM (8/16/24/32-bit), IEEE float (32/64-bit),
// and WAVE_FORMAT_EXTENSIBLE wrappers of either. Throws DecodeError.
WavData read_wav(const std::filesystem::path& path);

// Writes mono 16-bit PCM. Samples are clipped to [-1, 1].
void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate);

// Band-limited resampling with a Kaiser-windowed sinc kernel (64 taps at the
// lower of the two rates), evaluated from a finely tabulated kernel.
// Output length is round(n * to_rate / from_rate).
std::vector<double> resample(std::span<const double> input, int from_rate, int to_rate);

// Decodes, averages channels to mono and resamples to `target_rate`.
// The clip id is the file stem.
AudioClip decode_audio(const std::filesystem::path& path, int target_rate = 44100);

}  // namespace birdfl
