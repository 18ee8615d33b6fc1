// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Every oracle here is computed independently of the library code
// it checks.

#include "birdfl/pipeline.hpp"
#include "birdfl/synth.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

#include <unistd.h>

#ifndef BIRDFL_CLI_PATH
#error "BIRDFL_CLI_PATH must name the command-line binary"
#endif

namespace fs = std::filesystem;
using namespace birdfl;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

fs::path scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / ("birdfl_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

// ---------------------------------------------------------------------------

Outcome dimensionality() {
  Stopwatch clock;
  CorpusSpec spec;
  spec.classes = 5;
  spec.clips_per_class = 2;
  spec.seconds = 45.0;
  spec.folds = 2;
  spec.seed = 101;
  const Manifest corpus = synth_tone_chirp_corpus(scratch_root() / "dims", spec);

  const std::map<std::string, Eigen::Index> expected{
      {"mfcc-ms", 52},          {"mfcc-maxp", 26},        {"mfcc-modul", 260},
      {"melspec-ms", 80},       {"melspec-maxp", 40},     {"melspec-modul", 400},
      {"melspec-kfl1-ms", 1000}, {"melspec-kfl2-ms", 1000}, {"melspec-kfl3-ms", 1000},
      {"melspec-kfl4-ms", 1000}, {"melspec-kfl8-ms", 1000}, {"melspec-kfl4pl8kfl4-ms", 1000}};

  FeatureStore store;
  Pipeline pipeline(ExperimentData{corpus, {}}, store);
  std::ostringstream detail;
  bool ok = FeatureConfig::all().size() == expected.size();
  for (const FeatureConfig& fc : FeatureConfig::all()) {
    RunConfig rc;
    rc.features = fc;
    rc.learning.k = 500;
    std::optional<LearnedFeatures> learned;
    if (fc.learned()) learned = pipeline.learn(corpus.entries(), rc, 1);
    std::set<Eigen::Index> widths;
    for (const auto& entry : corpus.entries()) {
      const auto series = pipeline.feature_series(entry, rc, learned ? &*learned : nullptr);
      if (!series) {
        widths.insert(-1);
        continue;
      }
      for (const auto& v : summarize_clip(*series, fc, DecisionWindow::whole(), entry.clip_id)) {
        widths.insert(v.values.size());
      }
    }
    const bool match = widths.size() == 1 && *widths.begin() == expected.at(fc.label);
    ok = ok && match;
    detail << fc.label << "=" << (widths.size() == 1 ? std::to_string(*widths.begin()) : "mixed")
           << (match ? "" : "(!)") << " ";
  }
  const double t = clock.seconds();
  detail << "in " << fmt("%.1f", t) << " s";
  return {ok && t < 60.0, detail.str()};
}

Outcome spherical_kmeans_recovery() {
  Stopwatch clock;
  const double sigma = 5.0 * std::numbers::pi / 180.0;
  const std::vector<double> centers{0.35, 2.4, 4.3};
  std::mt19937_64 rng(7);
  std::normal_distribution<double> jitter(0.0, sigma), radius(1.0, 0.2);
  Matrix points(3000, 2);
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double a = centers[static_cast<std::size_t>(i % 3)] + jitter(rng);
    const double r = std::abs(radius(rng)) + 0.05;
    points(i, 0) = r * std::cos(a);
    points(i, 1) = r * std::sin(a);
  }
  SkmeansParams params;
  params.k = 10;
  params.frames_per_patch = 1;
  params.sample_size = 3000;
  params.whiten = false;
  params.seed = 11;
  const Codebook cb = skmeans_learn(stream_of({points}), params);

  double worst_norm = 0.0;
  for (Eigen::Index j = 0; j < cb.k(); ++j) worst_norm = std::max(worst_norm, std::abs(cb.bases.row(j).norm() - 1.0));
  double worst_angle = 0.0;
  for (double c : centers) {
    double best = 180.0;
    for (Eigen::Index j = 0; j < cb.k(); ++j) {
      const double cosang = std::clamp(cb.bases(j, 0) * std::cos(c) + cb.bases(j, 1) * std::sin(c), -1.0, 1.0);
      best = std::min(best, std::acos(cosang) * 180.0 / std::numbers::pi);
    }
    worst_angle = std::max(worst_angle, best);
  }
  const double t = clock.seconds();
  return {cb.k() == 10 && worst_angle <= 15.0 && worst_norm <= 1e-6 && t < 10.0,
          "k=" + std::to_string(cb.k()) + " worst angle " + fmt("%.2f", worst_angle) + " deg, max |norm-1| " +
              fmt("%.2e", worst_norm) + ", " + fmt("%.2f", t) + " s"};
}

Outcome whitening() {
  Stopwatch clock;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix mix(40, 40), z(5000, 40);
  for (Eigen::Index i = 0; i < mix.size(); ++i) mix.data()[i] = n(rng);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
  RowVector offset(40);
  for (Eigen::Index i = 0; i < 40; ++i) offset[i] = 5.0 * n(rng);
  const Matrix x = (z * mix).rowwise() + offset;
  const WhiteningTransform w = fit_whitening(x);
  const Matrix y = w.apply(x);
  const Matrix centered = y.rowwise() - y.colwise().mean();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(y.rows() - 1);
  const double dev = (cov - Matrix::Identity(40, 40)).cwiseAbs().maxCoeff();
  const double t = clock.seconds();
  return {dev < 5e-2 && t < 5.0, "max |C-I| " + fmt("%.3e", dev) + ", " + fmt("%.3f", t) + " s"};
}

double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& truth) {
  long long twice_credit = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!truth[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (truth[j]) continue;
      ++pairs;
      twice_credit += s[i] > s[j] ? 2 : (s[i] == s[j] ? 1 : 0);
    }
  }
  return static_cast<double>(twice_credit) / (2.0 * static_cast<double>(pairs));
}

Outcome auc_oracle() {
  std::mt19937_64 rng(19);
  std::uniform_int_distribution<int> size(2, 300), levels(2, 40);
  double worst = 0.0;
  int with_ties = 0;
  for (int instance = 0; instance < 200; ++instance) {
    const auto n = static_cast<std::size_t>(size(rng));
    const int q = levels(rng);
    std::uniform_int_distribution<int> level(0, q - 1);
    std::vector<double> s(n);
    std::vector<std::uint8_t> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(level(rng)) / q;
      truth[i] = static_cast<std::uint8_t>(rng() & 1u);
    }
    truth[0] = 1;
    truth[n - 1] = 0;
    std::set<double> distinct(s.begin(), s.end());
    with_ties += distinct.size() < n;
    worst = std::max(worst, std::abs(auc(s, truth) - pairwise_auc(s, truth)));
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(10000);
  std::vector<std::uint8_t> truth(10000);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = u(rng);
    truth[i] = static_cast<std::uint8_t>(u(rng) < 0.3);
  }
  const double chance = auc(s, truth);
  return {worst <= 1e-12 && with_ties > 0 && std::abs(chance - 0.5) <= 0.02,
          "max |rank - pairwise| " + fmt("%.2e", worst) + " over 200 instances (" + std::to_string(with_ties) +
              " with ties); chance AUC " + fmt("%.4f", chance)};
}

// AP as an exact fraction over the common denominator 60 * |R|
// (60 = lcm(1..6)).
std::pair<long long, long long> exact_ap(const std::vector<int>& ranking, unsigned relevant_mask) {
  long long numer = 0, hits = 0, relevant = 0;
  for (std::size_t pos = 0; pos < ranking.size(); ++pos) {
    if (relevant_mask & (1u << ranking[pos])) {
      ++hits;
      numer += hits * (60 / static_cast<long long>(pos + 1));
    }
  }
  for (std::size_t i = 0; i < ranking.size(); ++i) relevant += (relevant_mask >> i) & 1u;
  return {numer, 60 * relevant};
}

Outcome map_oracle() {
  double worst = 0.0;
  long long checked = 0;
  for (int l = 1; l <= 6; ++l) {
    std::set<std::string> names;
    for (int i = 0; i < l; ++i) names.insert("l" + std::to_string(i));
    PredictionMatrix clips{{}, Matrix(0, l), LabelVocabulary(names)};
    std::vector<RowVector> rows;
    std::map<std::string, std::set<std::string>> truth;
    double oracle_sum = 0.0;
    std::vector<int> ranking(static_cast<std::size_t>(l));
    std::iota(ranking.begin(), ranking.end(), 0);
    do {
      // Label ranking[pos] gets the pos-th highest score.
      std::vector<double> scores(static_cast<std::size_t>(l));
      for (int pos = 0; pos < l; ++pos) scores[static_cast<std::size_t>(ranking[pos])] = 1.0 - 0.1 * pos;
      for (unsigned mask = 1; mask < (1u << l); ++mask) {
        const auto [num, den] = exact_ap(ranking, mask);
        std::set<std::size_t> rel;
        std::set<std::string> rel_names;
        for (int i = 0; i < l; ++i) {
          if (mask & (1u << i)) {
            rel.insert(static_cast<std::size_t>(i));
            rel_names.insert("l" + std::to_string(i));
          }
        }
        const double oracle = static_cast<double>(num) / static_cast<double>(den);
        worst = std::max(worst, std::abs(average_precision(scores, rel) - oracle));
        ++checked;
        const std::string id = "c" + std::to_string(rows.size());
        clips.keys.push_back({id, 0});
        rows.push_back(Eigen::Map<const RowVector>(scores.data(), l));
        truth[id] = rel_names;
        oracle_sum += oracle;
      }
    } while (std::next_permutation(ranking.begin(), ranking.end()));
    clips.values.resize(static_cast<Eigen::Index>(rows.size()), l);
    for (std::size_t i = 0; i < rows.size(); ++i) clips.values.row(static_cast<Eigen::Index>(i)) = rows[i];
    const MapResult m = mean_average_precision(clips, truth);
    worst = std::max(worst, std::abs(m.map - oracle_sum / static_cast<double>(rows.size())));
  }
  // Differences can only come from rounding the exact fractions to double.
  return {worst <= 1e-15, std::to_string(checked) + " (ranking, truth set) cases for L=1..6; max deviation from exact " +
                              fmt("%.1e", worst)};
}

std::string fold_summary(const EvalReport& r) {
  return "AUC " + fmt("%.4f", r.pooled_auc) + " MAP " + fmt("%.4f", r.pooled_map);
}

Outcome tone_chirp_benchmark() {
  Stopwatch clock;
  CorpusSpec spec;
  spec.classes = 8;
  spec.clips_per_class = 40;
  spec.seconds = 3.0;
  spec.folds = 2;
  spec.seed = 2024;
  const Manifest corpus = synth_tone_chirp_corpus(scratch_root() / "tonechirp", spec);
  FeatureStore store;
  Pipeline pipeline(ExperimentData{corpus, {}}, store);
  RunConfig rc;
  rc.features = FeatureConfig::parse("melspec-kfl4-ms");
  rc.classifier = ClassifierMode::kMultilabel;
  rc.forest.seed = 5;
  rc.learning.seed = 5;
  const RunResult r = pipeline.run_single(rc);
  const double t = clock.seconds();
  return {r.report.pooled_auc >= 0.95 && r.report.pooled_map >= 0.85 && t < 300.0,
          std::to_string(corpus.size()) + " clips, " + fold_summary(r.report) + ", " + fmt("%.1f", t) + " s"};
}

Outcome modulated_ordering() {
  CorpusSpec spec;
  spec.classes = 8;
  spec.clips_per_class = 40;
  spec.seconds = 3.0;
  spec.folds = 2;
  spec.seed = 77;
  const Manifest corpus = synth_fm_corpus(scratch_root() / "fm", spec);
  FeatureStore store;
  Pipeline pipeline(ExperimentData{corpus, {}}, store);
  std::map<std::string, EvalReport> reports;
  for (const char* label : {"mfcc-ms", "melspec-ms", "melspec-kfl4-ms"}) {
    RunConfig rc;
    rc.features = FeatureConfig::parse(label);
    rc.forest.seed = 9;
    rc.learning.seed = 9;
    reports[label] = pipeline.run_single(rc).report;
  }
  const double kfl = reports["melspec-kfl4-ms"].pooled_auc;
  const double mel = reports["melspec-ms"].pooled_auc;
  const double mfcc = reports["mfcc-ms"].pooled_auc;
  std::string detail = "kfl4-ms " + fmt("%.4f", kfl) + ", melspec-ms " + fmt("%.4f", mel) + ", mfcc-ms " +
                       fmt("%.4f", mfcc) + "; kfl4>=melspec " + (kfl >= mel ? "holds" : "fails") +
                       ", melspec>=mfcc " + (mel >= mfcc ? "holds" : "fails");
  return {kfl >= mel - 0.02, detail};
}

Outcome noise_reduction_contract() {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> level(0.1, 2.0);
  MelSpectrogram s;
  s.values.resize(60, 40);
  RowVector floor(40);
  for (Eigen::Index b = 0; b < 40; ++b) floor[b] = level(rng);
  for (Eigen::Index t = 0; t < 60; ++t) s.values.row(t) = floor;
  const std::set<Eigen::Index> impulses{7, 23, 41};
  for (Eigen::Index t : impulses) {
    for (Eigen::Index b = 0; b < 40; ++b) s.values(t, b) += level(rng) * 5.0;
  }
  const MelSpectrogram out = noise_reduce(s);
  bool support_ok = true;
  for (Eigen::Index t = 0; t < 60; ++t) {
    const bool impulse = impulses.count(t) != 0;
    for (Eigen::Index b = 0; b < 40; ++b) {
      if (!impulse && out.values(t, b) != 0.0) support_ok = false;
      if (impulse && out.values(t, b) <= 0.0) support_ok = false;
    }
  }

  double worst = 0.0;
  MelSpectrogram noisy;
  noisy.values = Matrix(50, 40);
  for (Eigen::Index i = 0; i < noisy.values.size(); ++i) noisy.values.data()[i] = level(rng);
  const MelSpectrogram base = noise_reduce(noisy);
  for (double a : {0.37, 2.0, 1e3}) {
    MelSpectrogram scaled;
    scaled.values = a * noisy.values;
    const Matrix diff = noise_reduce(scaled).values - a * base.values;
    const double scale = std::max(1e-300, (a * base.values).cwiseAbs().maxCoeff());
    worst = std::max(worst, diff.cwiseAbs().maxCoeff() / scale);
  }
  return {support_ok && worst <= 1e-9, std::string("support ") + (support_ok ? "exact" : "violated") +
                                           ", homogeneity max relative error " + fmt("%.2e", worst)};
}

Outcome leakage_audit() {
  CorpusSpec spec;
  spec.classes = 4;
  spec.clips_per_class = 6;
  spec.seconds = 3.0;
  spec.folds = 2;
  spec.seed = 404;
  const Manifest primary = synth_tone_chirp_corpus(scratch_root() / "audit_primary", spec);
  spec.clips_per_class = 3;
  spec.seed = 405;
  const Manifest aux(
      "aux", synth_tone_chirp_corpus(scratch_root() / "audit_aux", spec).entries());

  RunConfig base;
  base.learning.k = 16;
  base.learning.sample_size = 4000;
  base.forest.n_trees = 5;

  GridSpec grid;
  for (const auto& fc : FeatureConfig::all()) grid.features.push_back(fc.label);
  grid.noise_reduction = {false, true};
  grid.windows = {DecisionWindow::of_seconds(1), DecisionWindow::whole()};
  grid.pools = {PoolMode::kMean, PoolMode::kMax};
  grid.classifiers = {ClassifierMode::kMultilabel, ClassifierMode::kBinaryRelevance};
  grid.base = base;
  std::vector<RunConfig> runs = grid.expand();
  for (AugmentMode mode : {AugmentMode::kFeaturesOnly, AugmentMode::kFeaturesAndTraining, AugmentMode::kCrossCondition}) {
    for (const char* label : {"melspec-ms", "melspec-kfl4-ms", "melspec-kfl4pl8kfl4-ms"}) {
      RunConfig rc = base;
      rc.features = FeatureConfig::parse(label);
      rc.augment = mode;
      runs.push_back(rc);
    }
  }

  FeatureStore store;
  Pipeline pipeline(ExperimentData{primary, {aux}}, store);
  const std::vector<RunResult> results = pipeline.run_grid(runs);

  std::size_t leaks = 0, records = 0, failed = 0;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (!results[i].report.error.empty()) {
      ++failed;
      std::cerr << "  run " << i << " failed: " << results[i].report.error << "\n";
      continue;
    }
    const ExperimentData data = runs[i].augment == AugmentMode::kNone ? ExperimentData{primary, {}}
                                                                      : ExperimentData{primary, {aux}};
    std::map<int, std::set<std::string>> test_ids;
    for (const FoldPlan& fp : plan_experiment(data, runs[i].augment).folds) {
      for (const auto& e : fp.test) test_ids[fp.fold].insert(e.clip_id);
    }
    for (const AuditRecord& a : results[i].audit) {
      ++records;
      leaks += test_ids[a.fold].count(a.clip_id);
    }
  }
  return {leaks == 0 && failed == 0 && records > 0,
          std::to_string(runs.size()) + " runs, " + std::to_string(records) + " audit records, " +
              std::to_string(leaks) + " test-fold clips consumed, " + std::to_string(failed) + " failed runs"};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const fs::path dir = scratch_root() / "determinism";
  CorpusSpec spec;
  spec.classes = 4;
  spec.clips_per_class = 6;
  spec.seconds = 3.0;
  spec.seed = 606;
  synth_tone_chirp_corpus(dir / "corpus", spec);
  std::ofstream(dir / "grid.cfg") << "manifest = corpus/manifest.csv\n"
                                     "features = mfcc-modul, melspec-kfl4-ms, melspec-kfl4pl8kfl4-ms\n"
                                     "window = 1, whole\n"
                                     "pool = mean, max\n"
                                     "classifier = multilabel, binary-relevance\n"
                                     "projection_seed = 12\n"
                                     "k = 16\nsample_size = 4000\ntrees = 10\nseed = 3\n";
  const std::string cli = BIRDFL_CLI_PATH;
  const auto run = [&](const std::string& csv, int workers) {
    const std::string cmd = "\"" + cli + "\" -q --workers " + std::to_string(workers) + " --config \"" +
                            (dir / "grid.cfg").string() + "\" grid --csv \"" + (dir / csv).string() +
                            "\" > /dev/null";
    return std::system(cmd.c_str());
  };
  const int rc1 = run("first.csv", 1);
  const int rc2 = run("second.csv", 3);
  const std::string a = slurp(dir / "first.csv"), b = slurp(dir / "second.csv");
  const auto lines = std::count(a.begin(), a.end(), '\n');
  return {rc1 == 0 && rc2 == 0 && !a.empty() && a == b,
          "two CLI executions (1 and 3 workers): exit " + std::to_string(rc1) + "/" + std::to_string(rc2) + ", " +
              std::to_string(lines) + " CSV lines, " + (a == b ? "byte-identical" : "differ")};
}

Outcome grid_cardinality() {
  const GridSpec full = GridSpec::full(ClassifierMode::kBinaryRelevance);
  GridSpec two_windows = full;
  two_windows.windows = {DecisionWindow::of_seconds(5), DecisionWindow::whole()};
  GridSpec whole = full;
  whole.windows = {DecisionWindow::whole()};
  const std::size_t a = full.expand().size(), b = two_windows.expand().size(), c = whole.expand().size();
  return {a == 384 && b == 192 && c == 96,
          "full " + std::to_string(a) + ", two windows " + std::to_string(b) + ", whole only " + std::to_string(c)};
}

}  // namespace

int main() {
  set_log_level(LogLevel::kWarn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"dimensionality contract", dimensionality},
      {"spherical k-means recovery", spherical_kmeans_recovery},
      {"whitening", whitening},
      {"AUC oracle equivalence", auc_oracle},
      {"MAP oracle equivalence", map_oracle},
      {"synthetic single-label benchmark", tone_chirp_benchmark},
      {"frequency-modulated ordering", modulated_ordering},
      {"noise-reduction contract", noise_reduction_contract},
      {"leakage audit", leakage_audit},
      {"determinism", determinism},
      {"grid cardinality", grid_cardinality},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << (i + 1) << " (" << criteria[i].first
              << "): " << o.detail << std::endl;
  }
  std::error_code ec;
  fs::remove_all(scratch_root(), ec);
  std::cout << (criteria.size() - static_cast<std::size_t>(failures)) << "/" << criteria.size()
            << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
