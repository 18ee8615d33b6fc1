#pragma once

#include "birdfl/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

namespace birdfl {

// Pink (1/f) noise scaled to the given RMS level, from a seeded generator.
std::vector<double> pink_noise(std::size_t n, double rms, std::mt19937_64& rng);

struct CorpusSpec {
  int classes = 8;
  int clips_per_class = 40;
  double seconds = 3.0;
  int folds = 2;
  double noise_rms = 0.05;
  std::uint64_t seed = 0;
};

// Single-label corpus: class c is a steady tone followed by an upward chirp,
// both starting from its own frequency, repeated a few times per clip over
// pink noise. Writes <dir>/audio/*.wav and <dir>/manifest.csv; clips of each
// class alternate between folds.
Manifest synth_tone_chirp_corpus(const std::filesystem::path& dir, const CorpusSpec& spec);

// Multilabel corpus of rapid frequency sweeps. Classes come in pairs that
// share a frequency band and differ only in sweep direction, so the
// per-band energy statistics of a pair match. Each clip holds one or two
// classes; the clip count is classes * clips_per_class / 2.
Manifest synth_fm_corpus(const std::filesystem::path& dir, const CorpusSpec& spec);

}  // namespace birdfl
