#include "birdfl/synth.hpp"

#include "birdfl/audio.hpp"
#include "birdfl/common.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace birdfl {

std::vector<double> pink_noise(std::size_t n, double rms, std::mt19937_64& rng) {
  // Paul Kellet's refined pinking filter over white Gaussian noise.
  std::normal_distribution<double> white(0.0, 1.0);
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  std::vector<double> out(n);
  double energy = 0.0;
  for (auto& s : out) {
    const double w = white(rng);
    b0 = 0.99886 * b0 + w * 0.0555179;
    b1 = 0.99332 * b1 + w * 0.0750759;
    b2 = 0.96900 * b2 + w * 0.1538520;
    b3 = 0.86650 * b3 + w * 0.3104856;
    b4 = 0.55000 * b4 + w * 0.5329522;
    b5 = -0.7616 * b5 - w * 0.0168980;
    s = b0 + b1 + b2 + b3 + b4 + b5 + b6 + w * 0.5362;
    b6 = w * 0.115926;
    energy += s * s;
  }
  const double scale = n > 0 && energy > 0 ? rms / std::sqrt(energy / static_cast<double>(n)) : 0.0;
  for (auto& s : out) s *= scale;
  return out;
}

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Adds a sweep from f0 to f1 (Hz, exponential in frequency) starting at
// sample `start`, with a Hann envelope.
void add_sweep(std::vector<double>& signal, std::size_t start, double seconds, double f0, double f1,
               double amplitude) {
  const auto len = static_cast<std::size_t>(seconds * kSampleRate);
  double phase = 0.0;
  for (std::size_t i = 0; i < len && start + i < signal.size(); ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(len);
    const double f = f0 * std::pow(f1 / f0, t);
    phase += kTwoPi * f / kSampleRate;
    const double env = 0.5 - 0.5 * std::cos(kTwoPi * t);
    signal[start + i] += amplitude * env * std::sin(phase);
  }
}

std::string clip_name(const char* prefix, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%04d", prefix, index);
  return buf;
}

std::string class_name(int c) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "sp%02d", c);
  return buf;
}

void check_spec(const CorpusSpec& spec) {
  if (spec.classes < 1 || spec.clips_per_class < 1 || spec.folds < 1 || !(spec.seconds > 0)) {
    throw ConfigError("synth: classes, clips_per_class, folds and seconds must be positive");
  }
}

Manifest finish(const std::filesystem::path& dir, std::vector<ManifestEntry> entries) {
  Manifest m(dir.filename().string(), std::move(entries));
  save_manifest(m, dir / "manifest.csv");
  return load_manifest(dir / "manifest.csv");
}

}  // namespace

Manifest synth_tone_chirp_corpus(const std::filesystem::path& dir, const CorpusSpec& spec) {
  check_spec(spec);
  std::filesystem::create_directories(dir / "audio");
  const auto n = static_cast<std::size_t>(spec.seconds * kSampleRate);
  std::vector<ManifestEntry> entries;
  int index = 0;
  for (int i = 0; i < spec.clips_per_class; ++i) {
    for (int c = 0; c < spec.classes; ++c, ++index) {
      std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));
      std::vector<double> signal = pink_noise(n, spec.noise_rms, rng);
      // Base frequencies spread evenly on a log scale over 1-8 kHz.
      const double base = 1000.0 * std::pow(8.0, spec.classes > 1 ? c / (spec.classes - 1.0) : 0.0);
      std::uniform_real_distribution<double> amp(0.15, 0.4);
      std::uniform_real_distribution<double> jitter(0.97, 1.03);
      const double motif = 0.3;
      const int repeats = std::max(1, static_cast<int>(spec.seconds / 0.8));
      std::uniform_int_distribution<std::size_t> onset(
          0, n > static_cast<std::size_t>(motif * kSampleRate) ? n - static_cast<std::size_t>(motif * kSampleRate) : 0);
      for (int r = 0; r < repeats; ++r) {
        const std::size_t at = onset(rng);
        const double f = base * jitter(rng);
        const double a = amp(rng);
        add_sweep(signal, at, 0.15, f, f, a);
        add_sweep(signal, at + static_cast<std::size_t>(0.15 * kSampleRate), 0.15, f, f * 1.6, a);
      }
      ManifestEntry e;
      e.clip_id = clip_name("tc", index);
      e.audio_path = std::filesystem::absolute(dir / "audio" / (e.clip_id + ".wav"));
      e.labels = {class_name(c)};
      e.fold = i % spec.folds;
      e.recordist = "rec" + std::to_string(i % 5);
      write_wav(e.audio_path, signal, kSampleRate);
      entries.push_back(std::move(e));
    }
  }
  return finish(dir, std::move(entries));
}

Manifest synth_fm_corpus(const std::filesystem::path& dir, const CorpusSpec& spec) {
  check_spec(spec);
  if (spec.classes % 2 != 0) throw ConfigError("synth: FM corpus needs an even class count");
  std::filesystem::create_directories(dir / "audio");
  const auto n = static_cast<std::size_t>(spec.seconds * kSampleRate);
  const int clips = spec.classes * spec.clips_per_class / 2;
  const int bands = spec.classes / 2;
  std::vector<ManifestEntry> entries;
  for (int index = 0; index < clips; ++index) {
    std::mt19937_64 rng(derive_seed(spec.seed, static_cast<std::uint64_t>(index)));
    std::vector<double> signal = pink_noise(n, spec.noise_rms, rng);
    std::uniform_int_distribution<int> pick(0, spec.classes - 1);
    std::set<int> present{index % spec.classes};
    if (std::uniform_real_distribution<double>(0, 1)(rng) < 0.5) present.insert(pick(rng));

    std::uniform_real_distribution<double> amp(0.15, 0.35);
    std::uniform_real_distribution<double> gap(0.15, 0.35);
    std::uniform_real_distribution<double> jitter(0.95, 1.05);
    const double sweep = 0.07;
    for (int c : present) {
      const int band = c / 2;
      const bool up = c % 2 == 0;
      const double lo = 900.0 * std::pow(7.0, bands > 1 ? band / (bands - 1.0) : 0.0);
      const double hi = lo * 2.0;
      double t = gap(rng) * 0.5;
      while (t + sweep < spec.seconds) {
        const double j = jitter(rng);
        add_sweep(signal, static_cast<std::size_t>(t * kSampleRate), sweep, (up ? lo : hi) * j,
                  (up ? hi : lo) * j, amp(rng));
        t += sweep + gap(rng);
      }
    }
    ManifestEntry e;
    e.clip_id = clip_name("fm", index);
    e.audio_path = std::filesystem::absolute(dir / "audio" / (e.clip_id + ".wav"));
    for (int c : present) e.labels.insert(class_name(c));
    e.fold = (index / spec.classes) % spec.folds;
    e.recordist = "rec" + std::to_string(index % 5);
    write_wav(e.audio_path, signal, kSampleRate);
    entries.push_back(std::move(e));
  }
  return finish(dir, std::move(entries));
}

}  // namespace birdfl
