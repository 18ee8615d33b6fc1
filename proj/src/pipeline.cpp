#include "birdfl/pipeline.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace birdfl {

std::string to_string(AugmentMode mode) {
  switch (mode) {
    case AugmentMode::kNone: return "none";
    case AugmentMode::kFeaturesOnly: return "features-only";
    case AugmentMode::kFeaturesAndTraining: return "features-and-training";
    case AugmentMode::kCrossCondition: return "cross-condition";
  }
  return "unknown";
}

AugmentMode parse_augment_mode(const std::string& text) {
  if (text == "none") return AugmentMode::kNone;
  if (text == "features-only") return AugmentMode::kFeaturesOnly;
  if (text == "features-and-training") return AugmentMode::kFeaturesAndTraining;
  if (text == "cross-condition") return AugmentMode::kCrossCondition;
  throw ConfigError("unknown augment mode '" + text +
                    "' (expected none, features-only, features-and-training or cross-condition)");
}

std::vector<std::pair<std::string, std::string>> RunConfig::fingerprint() const {
  return {{"features", features.label},
          {"noise_reduction", noise_reduction ? "on" : "off"},
          {"window", window.label()},
          {"pool", to_string(pool)},
          {"classifier", to_string(classifier)},
          {"projection", projection_seed ? std::to_string(*projection_seed) : "none"},
          {"augment", to_string(augment)}};
}

ExperimentPlan plan_experiment(const ExperimentData& data, AugmentMode mode) {
  const Manifest& primary = data.primary;
  if (primary.empty()) throw ConfigError("primary manifest is empty");
  const std::vector<int> folds = primary.folds();
  if (folds.empty()) throw ConfigError("every primary clip needs a fold assignment");
  if (mode != AugmentMode::kNone && data.auxiliary.empty()) {
    throw ConfigError("augment mode '" + to_string(mode) + "' needs at least one auxiliary manifest");
  }

  // Auxiliary entries, renamed where their ids collide with primary ids so
  // the audit log can tell them apart.
  std::vector<ManifestEntry> aux;
  std::set<std::string> aux_labels;
  if (mode != AugmentMode::kNone) {
    Manifest merged = primary;
    for (const auto& m : data.auxiliary) merged = union_manifests(merged, m);
    aux.assign(merged.entries().begin() + static_cast<std::ptrdiff_t>(primary.size()),
               merged.entries().end());
    for (const auto& e : aux) aux_labels.insert(e.labels.begin(), e.labels.end());
  }

  const LabelVocabulary primary_vocab = primary.vocabulary();
  ExperimentPlan plan;
  if (mode == AugmentMode::kCrossCondition) {
    std::set<std::string> shared;
    for (const auto& name : primary_vocab.names()) {
      if (aux_labels.count(name)) shared.insert(name);
    }
    if (shared.empty()) throw ConfigError("cross-condition: primary and auxiliary share no labels");
    plan.vocabulary = LabelVocabulary(shared);
    FoldPlan fp;
    fp.fold = 0;
    fp.train = aux;
    fp.learn = aux;
    std::vector<ManifestEntry> eval;
    for (auto e : primary.entries()) {
      e.fold = 0;
      eval.push_back(e);
    }
    fp.test = eval;
    plan.evaluation = Manifest(primary.name(), eval);
    plan.folds.push_back(std::move(fp));
    return plan;
  }

  std::set<std::string> names;
  for (const auto& n : primary_vocab.names()) names.insert(n);
  if (mode == AugmentMode::kFeaturesAndTraining) names.insert(aux_labels.begin(), aux_labels.end());
  plan.vocabulary = LabelVocabulary(names);
  plan.evaluation = primary;
  for (int f : folds) {
    FoldPlan fp;
    fp.fold = f;
    for (const auto& e : primary.entries()) (e.fold == f ? fp.test : fp.train).push_back(e);
    fp.learn = fp.train;
    if (mode == AugmentMode::kFeaturesAndTraining) fp.train.insert(fp.train.end(), aux.begin(), aux.end());
    if (mode != AugmentMode::kNone) fp.learn.insert(fp.learn.end(), aux.begin(), aux.end());
    plan.folds.push_back(std::move(fp));
  }
  return plan;
}

Pipeline::Pipeline(ExperimentData data, FeatureStore& store) : data_(std::move(data)), store_(store) {}

std::string Pipeline::audio_digest(const ManifestEntry& entry) {
  const std::string path = entry.audio_path.string();
  {
    std::lock_guard lock(digest_mutex_);
    auto it = digests_.find(path);
    if (it != digests_.end()) return it->second;
  }
  std::string digest;
  try {
    digest = sha256_hex(detail::read_file(entry.audio_path));
  } catch (const Error& e) {
    throw DecodeError(path, e.what());
  }
  std::lock_guard lock(digest_mutex_);
  digests_.emplace(path, digest);
  return digest;
}

std::string Pipeline::mel_key(const ManifestEntry& entry, bool noise_reduction) {
  return cache_key({"mel-v1", audio_digest(entry), noise_reduction ? "nr" : "raw"});
}

FeatureSeries Pipeline::mel_series(const ManifestEntry& entry, bool noise_reduction) {
  const std::string key = mel_key(entry, noise_reduction);
  const std::string bytes = store_.get_or_compute("mel", key, [&] {
    MelSpectrogram spec = mel_spectrogram(decode_audio(entry.audio_path));
    if (noise_reduction) spec = noise_reduce(spec);
    return encode_feature_series(as_series(spec));
  });
  return decode_feature_series(bytes, "mel/" + key);
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class StageTimer {
 public:
  StageTimer(std::map<std::string, double>& sink, std::string stage)
      : sink_(sink), stage_(std::move(stage)), start_(std::chrono::steady_clock::now()) {}
  ~StageTimer() {
    sink_[stage_] += std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::map<std::string, double>& sink_;
  std::string stage_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

LearnedFeatures Pipeline::learn(const std::vector<ManifestEntry>& clips, const RunConfig& config,
                                std::uint64_t seed, int workers) {
  const bool two = config.features.kind == FeatureKind::kLearnedTwoLayer;
  const bool nr = config.noise_reduction;
  const LearningParams& lp = config.learning;
  if (!config.features.learned()) throw ConfigError("learn: '" + config.features.label + "' is not a learned feature");
  if (clips.empty()) throw DomainError("feature learning: no clips");

  std::vector<std::string> keys(clips.size());
  parallel_for(clips.size(), workers, [&](std::size_t i) { keys[i] = mel_key(clips[i], nr); });
  std::string joined;
  for (const auto& k : keys) joined += k + "\n";
  LearnedFeatures out;
  out.key = cache_key({"codebook-v1", two ? "two-layer" : "single",
                       std::to_string(config.features.frames_per_patch), std::to_string(lp.k),
                       std::to_string(lp.sample_size), format_double(lp.epsilon),
                       std::to_string(seed), joined});
  const std::string kind = two ? "two-layer" : "codebook";
  const std::string bytes = store_.get_or_compute(kind, out.key, [&] {
    parallel_for(clips.size(), workers, [&](std::size_t i) { mel_series(clips[i], nr); });
    SeriesStream stream = [&](const SeriesVisitor& visit) {
      for (const auto& c : clips) visit(mel_series(c, nr).values);
    };
    if (two) {
      TwoLayerParams tp;
      tp.layer1 = SkmeansParams{lp.k, 4, lp.sample_size, lp.epsilon, seed, true, 1};
      tp.layer2 = SkmeansParams{lp.k, 4, lp.sample_size, lp.epsilon, derive_seed(seed, 2), true, 2};
      return encode_two_layer(learn_two_layer(stream, tp));
    }
    SkmeansParams sp{lp.k, config.features.frames_per_patch, lp.sample_size, lp.epsilon, seed, true, 1};
    return encode_codebook(skmeans_learn(stream, sp));
  });
  if (two) {
    out.two_layer = decode_two_layer(bytes, kind + "/" + out.key);
  } else {
    out.single = decode_codebook(bytes, kind + "/" + out.key);
  }
  return out;
}

std::optional<FeatureSeries> Pipeline::feature_series(const ManifestEntry& entry, const RunConfig& config,
                                                      const LearnedFeatures* learned) {
  FeatureSeries mel = mel_series(entry, config.noise_reduction);
  switch (config.features.kind) {
    case FeatureKind::kMelspec:
      return mel;
    case FeatureKind::kMfcc: {
      MelSpectrogram spec;
      spec.values = std::move(mel.values);
      spec.frame_hop = mel.frame_hop;
      return mfcc_with_deltas(spec);
    }
    case FeatureKind::kLearned:
    case FeatureKind::kLearnedTwoLayer:
      break;
  }
  if (!learned) throw ConfigError("feature extraction: learned features need a codebook");
  const bool two = config.features.kind == FeatureKind::kLearnedTwoLayer;
  if (two && mel.frames() < two_layer_min_frames(*learned->two_layer)) return std::nullopt;
  auto compute = [&] {
    FeatureSeries s = two ? birdfl::encode_two_layer(*learned->two_layer, mel) : encode(*learned->single, mel);
    quantize_to_float(s.values);
    return s;
  };
  // Encoded series are large; they are cached only when the store is on
  // disk. Quantizing keeps both paths numerically identical.
  if (!store_.directory()) return compute();
  const std::string key = cache_key({"encoded-v1", learned->key, mel_key(entry, config.noise_reduction)});
  const std::string bytes =
      store_.get_or_compute("encoded", key, [&] { return encode_feature_series(compute()); });
  return decode_feature_series(bytes, "encoded/" + key);
}

namespace {

struct ClipSummaries {
  std::vector<SummaryVector> windows;
  bool excluded = false;
};

bool any_multilabel(const std::vector<ManifestEntry>& entries) {
  return std::any_of(entries.begin(), entries.end(), [](const ManifestEntry& e) { return e.labels.size() != 1; });
}

}  // namespace

RunResult Pipeline::run_single(const RunConfig& config, int workers) {
  RunResult result;
  const ExperimentPlan plan = plan_experiment(data_, config.augment);
  if (config.classifier == ClassifierMode::kSingleLabel) {
    for (const auto& fp : plan.folds) {
      if (any_multilabel(fp.train) || any_multilabel(fp.test)) {
        throw StageError("config", "", "single-label classifier requires single-label manifests");
      }
    }
  }
  const LabelVocabulary& vocab = plan.vocabulary;
  const auto l = static_cast<Eigen::Index>(vocab.size());

  auto summarize_all = [&](const std::vector<ManifestEntry>& clips, const LearnedFeatures* learned,
                           const char* stage) {
    std::vector<ClipSummaries> out(clips.size());
    parallel_for(clips.size(), workers, [&](std::size_t i) {
      try {
        auto series = feature_series(clips[i], config, learned);
        if (!series) {
          out[i].excluded = true;
          return;
        }
        out[i].windows = summarize_clip(*series, config.features, config.window, clips[i].clip_id);
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError(stage, clips[i].clip_id, e.what());
      }
    });
    return out;
  };

  for (const auto& fp : plan.folds) {
    const std::string fold_tag = "fold " + std::to_string(fp.fold);
    LearnedFeatures learned;
    if (config.features.learned()) {
      StageTimer timer(result.stage_seconds, "feature-learning");
      for (const auto& e : fp.learn) result.audit.push_back({fp.fold, "feature-learning", e.clip_id});
      try {
        learned = learn(fp.learn, config, derive_seed(config.learning.seed, static_cast<std::uint64_t>(fp.fold)),
                        workers);
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError("feature-learning", fold_tag, e.what());
      }
    }
    const LearnedFeatures* lf = config.features.learned() ? &learned : nullptr;

    std::vector<ClipSummaries> train_sum, test_sum;
    {
      StageTimer timer(result.stage_seconds, "extract");
      train_sum = summarize_all(fp.train, lf, "extract");
      test_sum = summarize_all(fp.test, lf, "extract");
    }

    std::vector<const SummaryVector*> rows;
    std::vector<const ManifestEntry*> row_clip;
    std::size_t clips_used = 0, annotations = 0;
    for (std::size_t i = 0; i < fp.train.size(); ++i) {
      const auto& e = fp.train[i];
      if (train_sum[i].excluded) {
        result.excluded.insert(e.clip_id);
        continue;
      }
      std::size_t known = 0;
      for (const auto& name : e.labels) known += vocab.contains(name) ? 1 : 0;
      if (config.classifier == ClassifierMode::kSingleLabel && known != 1) continue;
      ++clips_used;
      annotations += known;
      result.audit.push_back({fp.fold, "training", e.clip_id});
      for (const auto& w : train_sum[i].windows) {
        rows.push_back(&w);
        row_clip.push_back(&e);
      }
    }
    result.training_clips.push_back(clips_used);
    result.training_annotations.push_back(annotations);
    if (rows.empty()) throw StageError("training", fold_tag, "no usable training clips");

    const Eigen::Index d = rows.front()->values.size();
    Matrix x(static_cast<Eigen::Index>(rows.size()), d);
    LabelMatrix y = LabelMatrix::Zero(x.rows(), l);
    for (std::size_t r = 0; r < rows.size(); ++r) {
      x.row(static_cast<Eigen::Index>(r)) = rows[r]->values;
      for (const auto& name : row_clip[r]->labels) {
        if (vocab.contains(name)) y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(vocab.index(name))) = 1;
      }
    }

    std::vector<InstanceKey> keys;
    std::vector<const SummaryVector*> test_rows;
    for (std::size_t i = 0; i < fp.test.size(); ++i) {
      if (test_sum[i].excluded) {
        log_warn("clip '" + fp.test[i].clip_id + "' is too short for " + config.features.label +
                 "; excluded from training and evaluation");
        result.excluded.insert(fp.test[i].clip_id);
        continue;
      }
      for (const auto& w : test_sum[i].windows) {
        keys.push_back({w.clip_id, w.window_index});
        test_rows.push_back(&w);
      }
    }
    Matrix xt(static_cast<Eigen::Index>(test_rows.size()), d);
    for (std::size_t r = 0; r < test_rows.size(); ++r) xt.row(static_cast<Eigen::Index>(r)) = test_rows[r]->values;

    if (config.projection_seed) {
      const RandomProjection rp = RandomProjection::make(d, *config.projection_seed);
      x = rp.apply(x);
      if (xt.rows() > 0) xt = rp.apply(xt);
    }

    TrainedModel model;
    {
      StageTimer timer(result.stage_seconds, "training");
      ForestParams params = config.forest;
      params.seed = derive_seed(config.forest.seed, static_cast<std::uint64_t>(fp.fold));
      params.workers = workers;
      try {
        model = train(x, y, config.classifier, vocab, params);
      } catch (const std::exception& e) {
        throw StageError("training", fold_tag, e.what());
      }
    }
    {
      StageTimer timer(result.stage_seconds, "predict");
      try {
        Matrix probs = xt.rows() > 0 ? predict_proba(model, xt) : Matrix(0, l);
        result.predictions.push_back({fp.fold, PredictionMatrix{std::move(keys), std::move(probs), vocab}});
      } catch (const std::exception& e) {
        throw StageError("predict", fold_tag, e.what());
      }
    }
  }

  {
    StageTimer timer(result.stage_seconds, "evaluate");
    try {
      result.report = evaluate_run(plan.evaluation, result.predictions, config.pool, config.auc_averaging,
                                   result.excluded);
    } catch (const std::exception& e) {
      throw StageError("evaluate", "", e.what());
    }
  }
  result.report.fingerprint = config.fingerprint();
  for (const auto& [stage, seconds] : result.stage_seconds) {
    log_info(config.features.label + " " + stage + ": " + format_double(seconds) + " s");
  }
  return result;
}

std::vector<RunResult> Pipeline::run_grid(const std::vector<RunConfig>& runs, int workers) {
  if (runs.empty()) throw ConfigError("grid is empty");
  log_info("grid: " + std::to_string(runs.size()) + " runs");
  std::vector<RunResult> results(runs.size());
  parallel_for(runs.size(), workers, [&](std::size_t i) {
    try {
      results[i] = run_single(runs[i], 1);
    } catch (const std::exception& e) {
      log_warn("run " + std::to_string(i) + " failed: " + e.what());
      results[i] = RunResult{};
      results[i].report.fingerprint = runs[i].fingerprint();
      results[i].report.error = e.what();
    }
  });
  return results;
}

std::size_t GridSpec::size() const {
  return features.size() * noise_reduction.size() * windows.size() * pools.size() * classifiers.size();
}

std::vector<RunConfig> GridSpec::expand() const {
  std::vector<RunConfig> out;
  out.reserve(size());
  for (const auto& f : features) {
    const FeatureConfig fc = FeatureConfig::parse(f);
    for (bool nr : noise_reduction) {
      for (const auto& w : windows) {
        for (PoolMode p : pools) {
          for (ClassifierMode c : classifiers) {
            RunConfig rc = base;
            rc.features = fc;
            rc.noise_reduction = nr;
            rc.window = w;
            rc.pool = p;
            rc.classifier = c;
            out.push_back(std::move(rc));
          }
        }
      }
    }
  }
  return out;
}

GridSpec GridSpec::full(ClassifierMode classifier_alt) {
  GridSpec g;
  for (const auto& c : FeatureConfig::all()) g.features.push_back(c.label);
  g.noise_reduction = {false, true};
  g.windows = {DecisionWindow::of_seconds(1), DecisionWindow::of_seconds(5),
               DecisionWindow::of_seconds(60), DecisionWindow::whole()};
  g.pools = {PoolMode::kMean, PoolMode::kMax};
  g.classifiers = {ClassifierMode::kMultilabel, classifier_alt};
  return g;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigMap parse_config(const std::string& text) {
  ConfigMap out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("config: expected 'key = value'", number);
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ParseError("config: empty key", number);
    if (out.count(key)) throw ParseError("config: duplicate key '" + key + "'", number);
    std::vector<std::string> values;
    std::istringstream vs(line.substr(eq + 1));
    std::string v;
    while (std::getline(vs, v, ',')) {
      v = trim(v);
      if (v.empty()) throw ParseError("config: empty value for '" + key + "'", number);
      values.push_back(v);
    }
    if (values.empty()) throw ParseError("config: no value for '" + key + "'", number);
    out[key] = std::move(values);
  }
  return out;
}

ConfigMap load_config(const std::filesystem::path& path) {
  return parse_config(detail::read_file(path));
}

namespace {

bool parse_flag(const std::string& key, const std::string& v) {
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects on/off, got '" + v + "'");
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  const long long x = parse_int(key, v);
  if (x < 0) throw ConfigError("config: '" + key + "' must be non-negative");
  return static_cast<std::uint64_t>(x);
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  return out;
}

FoldScheme parse_fold_scheme(const std::string& v) {
  if (v == "column") return FoldScheme::by_column();
  const auto colon = v.find(':');
  const std::string kind = v.substr(0, colon);
  if (colon == std::string::npos) throw ConfigError("config: folds expects column, recordist:K or random:K");
  const int k = static_cast<int>(parse_int("folds", v.substr(colon + 1)));
  if (kind == "recordist") return FoldScheme::by_recordist(k);
  if (kind == "random") return FoldScheme::random(k, 0);
  throw ConfigError("config: unknown fold scheme '" + v + "'");
}

}  // namespace

ExperimentConfig experiment_from_config(const ConfigMap& config, const std::filesystem::path& base_dir) {
  ExperimentConfig ec;
  GridSpec& g = ec.grid;
  RunConfig& b = g.base;
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  };
  auto single = [&](const std::string& key, const std::vector<std::string>& values) -> const std::string& {
    if (values.size() != 1) throw ConfigError("config: '" + key + "' takes a single value");
    return values.front();
  };
  std::optional<std::uint64_t> fold_seed;
  for (const auto& [key, values] : config) {
    if (key == "manifest") {
      ec.manifest = path(single(key, values));
    } else if (key == "folds") {
      ec.folds = parse_fold_scheme(single(key, values));
    } else if (key == "fold_seed") {
      fold_seed = parse_u64(key, single(key, values));
    } else if (key == "aux_manifest") {
      for (const auto& v : values) ec.auxiliary.push_back(path(v));
    } else if (key == "augment") {
      b.augment = parse_augment_mode(single(key, values));
    } else if (key == "cache_dir") {
      ec.cache_dir = path(single(key, values));
    } else if (key == "workers") {
      ec.workers = static_cast<int>(parse_int(key, single(key, values)));
      if (ec.workers < 1) throw ConfigError("config: workers must be >= 1");
    } else if (key == "features") {
      g.features.clear();
      for (const auto& v : values) {
        if (v == "all") {
          for (const auto& c : FeatureConfig::all()) g.features.push_back(c.label);
        } else {
          g.features.push_back(FeatureConfig::parse(v).label);
        }
      }
    } else if (key == "noise_reduction") {
      g.noise_reduction.clear();
      for (const auto& v : values) g.noise_reduction.push_back(parse_flag(key, v));
    } else if (key == "window") {
      g.windows.clear();
      for (const auto& v : values) g.windows.push_back(DecisionWindow::parse(v));
    } else if (key == "pool") {
      g.pools.clear();
      for (const auto& v : values) g.pools.push_back(parse_pool_mode(v));
    } else if (key == "classifier") {
      g.classifiers.clear();
      for (const auto& v : values) g.classifiers.push_back(parse_classifier_mode(v));
    } else if (key == "projection_seed") {
      const std::string& v = single(key, values);
      b.projection_seed = v == "none" ? std::nullopt : std::optional<std::uint64_t>(parse_u64(key, v));
    } else if (key == "k") {
      b.learning.k = static_cast<int>(parse_int(key, single(key, values)));
    } else if (key == "sample_size") {
      b.learning.sample_size = parse_u64(key, single(key, values));
    } else if (key == "epsilon") {
      b.learning.epsilon = parse_real(key, single(key, values));
    } else if (key == "learn_seed") {
      b.learning.seed = parse_u64(key, single(key, values));
    } else if (key == "trees") {
      b.forest.n_trees = static_cast<int>(parse_int(key, single(key, values)));
    } else if (key == "max_features") {
      b.forest.max_features = static_cast<int>(parse_int(key, single(key, values)));
    } else if (key == "min_samples_leaf") {
      b.forest.min_samples_leaf = static_cast<int>(parse_int(key, single(key, values)));
    } else if (key == "bootstrap") {
      b.forest.bootstrap = parse_flag(key, single(key, values));
    } else if (key == "seed") {
      const std::uint64_t s = parse_u64(key, single(key, values));
      b.forest.seed = s;
      if (!config.count("learn_seed")) b.learning.seed = s;
    } else if (key == "auc") {
      const std::string& v = single(key, values);
      if (v == "micro") {
        b.auc_averaging = AucAveraging::kMicro;
      } else if (v == "macro") {
        b.auc_averaging = AucAveraging::kMacro;
      } else {
        throw ConfigError("config: auc expects micro or macro");
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  if (fold_seed) ec.folds.seed = *fold_seed;
  if (b.learning.k < 1) throw ConfigError("config: k must be >= 1");
  if (b.learning.sample_size < 1) throw ConfigError("config: sample_size must be >= 1");
  if (b.forest.n_trees < 1) throw ConfigError("config: trees must be >= 1");
  if (b.forest.min_samples_leaf < 1) throw ConfigError("config: min_samples_leaf must be >= 1");
  if (b.forest.max_features < 0) throw ConfigError("config: max_features must be >= 0");
  return ec;
}

ExperimentData load_experiment(const ExperimentConfig& config) {
  if (config.manifest.empty()) throw ConfigError("config: no manifest given");
  ExperimentData data;
  data.primary = assign_folds(load_manifest(config.manifest), config.folds);
  for (const auto& p : config.auxiliary) data.auxiliary.push_back(load_manifest(p));
  return data;
}

Matrix unwhiten_base(const Codebook& codebook, Eigen::Index i) {
  const Vector flat = codebook.whitening.inverse_matrix() * codebook.bases.row(i).transpose();
  const Eigen::Index p = codebook.frames_per_patch;
  Matrix grid(p, codebook.frame_dims());
  for (Eigen::Index d = 0; d < p; ++d) grid.row(d) = flat.segment(d * grid.cols(), grid.cols()).transpose();
  return grid;
}

std::size_t export_bases(const Codebook& codebook, std::size_t count, const std::filesystem::path& out_dir,
                         bool images) {
  std::filesystem::create_directories(out_dir);
  const std::size_t n = std::min(count, static_cast<std::size_t>(codebook.k()));
  const Matrix inverse = codebook.whitening.inverse_matrix();
  const Eigen::Index p = codebook.frames_per_patch;
  const Eigen::Index m = codebook.frame_dims();
  constexpr int kScale = 8;
  for (std::size_t i = 0; i < n; ++i) {
    const Vector flat = inverse * codebook.bases.row(static_cast<Eigen::Index>(i)).transpose();
    char stem[32];
    std::snprintf(stem, sizeof stem, "base_%03zu", i);

    std::ostringstream csv;
    for (Eigen::Index d = 0; d < p; ++d) {
      for (Eigen::Index j = 0; j < m; ++j) csv << (j ? "," : "") << format_double(flat[d * m + j]);
      csv << '\n';
    }
    detail::atomic_write(out_dir / (std::string(stem) + ".csv"), csv.str());

    if (!images) continue;
    const double lo = flat.minCoeff(), hi = flat.maxCoeff();
    const auto w = static_cast<int>(p) * kScale, h = static_cast<int>(m) * kScale;
    std::string pgm = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (int y = 0; y < h; ++y) {
      const Eigen::Index band = m - 1 - y / kScale;
      for (int x = 0; x < w; ++x) {
        const double v = flat[(x / kScale) * m + band];
        const double t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
        pgm += static_cast<char>(static_cast<unsigned char>(std::lround(t * 255.0)));
      }
    }
    detail::atomic_write(out_dir / (std::string(stem) + ".pgm"), pgm);
  }
  return n;
}

}  // namespace birdfl
