#include "birdfl/audio.hpp"

#include "birdfl/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

namespace birdfl {

namespace {

std::uint16_t le16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }
std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

WavData read_wav(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError(p, "cannot open file");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw DecodeError(p, "not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t off = 12;
  while (off + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + off;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = off + 8;
    const std::size_t avail = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || avail < 16) throw DecodeError(p, "truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      block_align = le16(f + 12);
      bits = le16(f + 14);
      if (format == kFormatExtensible) {
        if (size < 40 || avail < 40) throw DecodeError(p, "truncated extensible fmt chunk");
        format = le16(f + 24);  // first two bytes of the subformat GUID
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Streams written without a final size use 0 or 0xFFFFFFFF.
      data_size = (size == 0 || size > avail) ? avail : size;
    }
    off = body + size + (size & 1u);
  }
  if (!have_fmt) throw DecodeError(p, "missing fmt chunk");
  if (data == nullptr) throw DecodeError(p, "missing data chunk");
  if (channels == 0 || rate == 0) throw DecodeError(p, "invalid channel count or sample rate");
  const int bytes_per = bits / 8;
  if (bits % 8 != 0 || bytes_per == 0 || block_align != channels * bytes_per) {
    throw DecodeError(p, "unsupported sample layout (" + std::to_string(bits) + " bits)");
  }
  const bool is_int = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool is_float = format == kFormatFloat && (bits == 32 || bits == 64);
  if (!is_int && !is_float) {
    throw DecodeError(p, "unsupported format tag " + std::to_string(format) + " with " +
                             std::to_string(bits) + " bits");
  }

  WavData out;
  out.channels = channels;
  out.sample_rate = static_cast<int>(rate);
  const std::size_t n = data_size / static_cast<std::size_t>(bytes_per);
  out.interleaved.resize(n - n % channels);
  for (std::size_t i = 0; i < out.interleaved.size(); ++i) {
    const unsigned char* s = data + i * static_cast<std::size_t>(bytes_per);
    double v = 0.0;
    if (is_float) {
      if (bits == 32) {
        float f;
        std::memcpy(&f, s, 4);
        v = f;
      } else {
        double d;
        std::memcpy(&d, s, 8);
        v = d;
      }
    } else if (bits == 8) {
      v = (static_cast<int>(s[0]) - 128) / 128.0;
    } else if (bits == 16) {
      v = static_cast<std::int16_t>(le16(s)) / 32768.0;
    } else if (bits == 24) {
      std::int32_t x = static_cast<std::int32_t>(s[0] | (s[1] << 8) | (s[2] << 16));
      if (x & 0x800000) x |= ~0xFFFFFF;
      v = x / 8388608.0;
    } else {
      v = static_cast<std::int32_t>(le32(s)) / 2147483648.0;
    }
    if (!std::isfinite(v)) throw DecodeError(p, "non-finite sample");
    out.interleaved[i] = v;
  }
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               int sample_rate) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  auto put16 = [&](std::uint16_t v) {
    const char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>(v >> 8)};
    out.write(b, 2);
  };
  auto put32 = [&](std::uint32_t v) {
    const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                       static_cast<char>((v >> 16) & 0xFF), static_cast<char>(v >> 24)};
    out.write(b, 4);
  };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out.write("RIFF", 4);
  put32(36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put32(16);
  put16(kFormatPcm);
  put16(1);
  put32(static_cast<std::uint32_t>(sample_rate));
  put32(static_cast<std::uint32_t>(sample_rate) * 2);
  put16(2);
  put16(16);
  out.write("data", 4);
  put32(data_bytes);
  for (double s : samples) {
    const double c = std::clamp(s, -1.0, 1.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

namespace {

constexpr int kHalfTaps = 32;        // taps per side, measured at the lower rate
constexpr int kTableResolution = 512;  // kernel samples per unit
constexpr double kCutoff = 0.92;     // fraction of the lower Nyquist
constexpr double kKaiserBeta = 8.6;

const std::vector<double>& kernel_table() {
  static const std::vector<double> table = [] {
    std::vector<double> t(kHalfTaps * kTableResolution + 2);
    const double norm = std::cyl_bessel_i(0.0, kKaiserBeta);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x = static_cast<double>(i) / kTableResolution;
      const double r = x / kHalfTaps;
      const double w = r >= 1.0 ? 0.0 : std::cyl_bessel_i(0.0, kKaiserBeta * std::sqrt(1.0 - r * r)) / norm;
      const double a = std::numbers::pi * kCutoff * x;
      const double sinc = x == 0.0 ? 1.0 : std::sin(a) / a;
      t[i] = kCutoff * sinc * w;
    }
    return t;
  }();
  return table;
}

}  // namespace

std::vector<double> resample(std::span<const double> input, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw DomainError("sample rates must be positive");
  if (from_rate == to_rate) return {input.begin(), input.end()};
  const auto& table = kernel_table();
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double scale = std::min(1.0, ratio);
  const double half_in = kHalfTaps / scale;
  const std::size_t out_len =
      static_cast<std::size_t>(std::llround(static_cast<double>(input.size()) * ratio));
  const auto n_in = static_cast<std::int64_t>(input.size());
  std::vector<double> out(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double pos = static_cast<double>(n) / ratio;
    const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(pos - half_in)));
    const auto hi = std::min<std::int64_t>(n_in - 1, static_cast<std::int64_t>(std::floor(pos + half_in)));
    double acc = 0.0;
    for (std::int64_t i = lo; i <= hi; ++i) {
      const double u = std::abs(pos - static_cast<double>(i)) * scale * kTableResolution;
      const auto j = static_cast<std::size_t>(u);
      if (j + 1 >= table.size()) continue;
      const double frac = u - static_cast<double>(j);
      acc += input[static_cast<std::size_t>(i)] * (table[j] + frac * (table[j + 1] - table[j]));
    }
    out[n] = acc * scale;
  }
  return out;
}

AudioClip decode_audio(const std::filesystem::path& path, int target_rate) {
  WavData wav = read_wav(path);
  const std::size_t frames = wav.interleaved.size() / static_cast<std::size_t>(wav.channels);
  std::vector<double> mono(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double sum = 0.0;
    for (int c = 0; c < wav.channels; ++c) sum += wav.interleaved[f * wav.channels + c];
    mono[f] = sum / wav.channels;
  }
  AudioClip clip;
  clip.clip_id = path.stem().string();
  clip.sample_rate = target_rate;
  clip.samples = resample(mono, wav.sample_rate, target_rate);
  return clip;
}

}  // namespace birdfl
