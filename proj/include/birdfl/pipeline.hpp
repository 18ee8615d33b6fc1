#pragma once

#include "birdfl/cache.hpp"
#include "birdfl/dataset.hpp"
#include "birdfl/encode.hpp"
#include "birdfl/evaluate.hpp"
#include "birdfl/featlearn.hpp"
#include "birdfl/forest.hpp"
#include "birdfl/summarize.hpp"

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace birdfl {

// How auxiliary manifests take part in an experiment.
//   features-only: auxiliary audio joins the feature-learning stream.
//   features-and-training: it also joins every fold's training set.
//   cross-condition: train on the auxiliary data, test on all primary clips.
enum class AugmentMode { kNone, kFeaturesOnly, kFeaturesAndTraining, kCrossCondition };

std::string to_string(AugmentMode mode);
AugmentMode parse_augment_mode(const std::string& text);

struct LearningParams {
  int k = 500;
  std::size_t sample_size = 32768;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

struct RunConfig {
  FeatureConfig features = FeatureConfig::parse("mfcc-ms");
  bool noise_reduction = false;
  DecisionWindow window;
  PoolMode pool = PoolMode::kMean;
  ClassifierMode classifier = ClassifierMode::kMultilabel;
  std::optional<std::uint64_t> projection_seed;
  ForestParams forest;
  LearningParams learning;
  AugmentMode augment = AugmentMode::kNone;
  AucAveraging auc_averaging = AucAveraging::kMicro;

  // Ordered (axis, value) pairs naming this run in reports.
  std::vector<std::pair<std::string, std::string>> fingerprint() const;
};

struct ExperimentData {
  Manifest primary;  // every entry must carry a fold
  std::vector<Manifest> auxiliary;
};

struct FoldPlan {
  int fold = 0;
  std::vector<ManifestEntry> train;
  std::vector<ManifestEntry> test;
  std::vector<ManifestEntry> learn;  // feature-learning clips
};

struct ExperimentPlan {
  std::vector<FoldPlan> folds;
  LabelVocabulary vocabulary;
  // Test clips with their fold as evaluated; in cross-condition mode every
  // primary clip sits in fold 0.
  Manifest evaluation;
};

// Throws ConfigError for an empty auxiliary list in augmented modes, an
// empty vocabulary intersection in cross-condition mode, or missing folds.
ExperimentPlan plan_experiment(const ExperimentData& data, AugmentMode mode);

struct AuditRecord {
  int fold = 0;
  std::string stage;  // "feature-learning" or "training"
  std::string clip_id;
};

struct RunResult {
  EvalReport report;
  std::vector<AuditRecord> audit;
  std::vector<FoldPredictions> predictions;
  std::vector<std::size_t> training_clips;        // per fold
  std::vector<std::size_t> training_annotations;  // per fold, sum of label counts
  std::set<std::string> excluded;                 // clips too short for the feature path
  std::map<std::string, double> stage_seconds;
};

// Either codebook type plus the cache key it was stored under.
struct LearnedFeatures {
  std::optional<Codebook> single;
  std::optional<TwoLayerModel> two_layer;
  std::string key;
};

class Pipeline {
 public:
  Pipeline(ExperimentData data, FeatureStore& store);

  const ExperimentData& data() const { return data_; }

  // Decode, Mel spectrogram, optional noise reduction; cached by audio
  // content.
  FeatureSeries mel_series(const ManifestEntry& entry, bool noise_reduction);
  // Learns (or loads) the codebook for a set of clips.
  LearnedFeatures learn(const std::vector<ManifestEntry>& clips, const RunConfig& config,
                        std::uint64_t seed, int workers = 1);
  // The per-frame series feeding the summary. Returns nullopt when the clip
  // is too short for the two-layer path.
  std::optional<FeatureSeries> feature_series(const ManifestEntry& entry, const RunConfig& config,
                                              const LearnedFeatures* learned);

  // Errors are rethrown as StageError naming the stage and clip.
  RunResult run_single(const RunConfig& config, int workers = 1);
  // Runs are spread over `workers` threads; a failed run yields a report
  // with `error` set and the grid carries on.
  std::vector<RunResult> run_grid(const std::vector<RunConfig>& runs, int workers = 1);

 private:
  std::string audio_digest(const ManifestEntry& entry);
  std::string mel_key(const ManifestEntry& entry, bool noise_reduction);

  ExperimentData data_;
  FeatureStore& store_;
  std::mutex digest_mutex_;
  std::map<std::string, std::string> digests_;
};

// Lists of values per axis; the run list is their Cartesian product in the
// order features, noise_reduction, window, pool, classifier (last fastest).
struct GridSpec {
  std::vector<std::string> features;
  std::vector<bool> noise_reduction{false};
  std::vector<DecisionWindow> windows{DecisionWindow::whole()};
  std::vector<PoolMode> pools{PoolMode::kMean};
  std::vector<ClassifierMode> classifiers{ClassifierMode::kMultilabel};
  RunConfig base;  // shared non-axis settings

  std::size_t size() const;
  std::vector<RunConfig> expand() const;

  // 12 x 2 x 2 x 4 x 2; `classifier_alt` is single-label or
  // binary-relevance.
  static GridSpec full(ClassifierMode classifier_alt);
};

// Flat `key = value[, value...]` configuration with `#` comments.
using ConfigMap = std::map<std::string, std::vector<std::string>>;
ConfigMap parse_config(const std::string& text);
ConfigMap load_config(const std::filesystem::path& path);

// Experiment setup carried by a configuration file.
struct ExperimentConfig {
  std::filesystem::path manifest;
  FoldScheme folds = FoldScheme::by_column();
  std::vector<std::filesystem::path> auxiliary;
  std::optional<std::filesystem::path> cache_dir;
  int workers = 1;
  GridSpec grid;
};

// Recognized keys: manifest, folds (column | recordist:K | random:K),
// aux_manifest, augment, cache_dir, workers, features (or "all"),
// noise_reduction (on/off), window, pool, classifier, projection_seed,
// k, sample_size, epsilon, learn_seed, trees, max_features,
// min_samples_leaf, bootstrap, seed, auc. Relative paths resolve against
// `base_dir`. Unknown keys raise ConfigError.
ExperimentConfig experiment_from_config(const ConfigMap& config,
                                        const std::filesystem::path& base_dir);
ExperimentData load_experiment(const ExperimentConfig& config);

// Writes bases[0 .. min(count, k)) un-whitened and reshaped to
// frames_per_patch x M, one CSV grid per base (base_NNN.csv) and, when
// `images` is set, a PGM rendering with frequency increasing upwards.
// Returns the number exported.
std::size_t export_bases(const Codebook& codebook, std::size_t count,
                         const std::filesystem::path& out_dir, bool images = true);
// Base i mapped back through the linear part of the whitening.
Matrix unwhiten_base(const Codebook& codebook, Eigen::Index i);

}  // namespace birdfl
