// Command-line front end for the birdfl pipeline.

#include "birdfl/pipeline.hpp"
#include "birdfl/synth.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace birdfl;

struct Common {
  std::string config;
  std::string cache_dir;
  int workers = 0;
  long long seed = -1;
  bool verbose = false;
  bool quiet = false;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

// clip_id,window_index,<values...> with a header row.
struct Table {
  std::vector<std::string> header;
  std::vector<InstanceKey> keys;
  Matrix values;
};

Table read_table(const std::string& path, std::size_t meta_columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ParseError("'" + path + "' is empty", 1);
  t.header = split_csv_line(line);
  if (t.header.size() <= meta_columns) throw ParseError("'" + path + "' has no value columns", 1);
  std::vector<std::vector<double>> rows;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != t.header.size()) throw ParseError("'" + path + "': wrong field count", number);
    try {
      t.keys.push_back({f[0], std::stoi(f[1])});
      std::vector<double> row;
      for (std::size_t i = meta_columns; i < f.size(); ++i) row.push_back(std::stod(f[i]));
      rows.push_back(std::move(row));
    } catch (const std::logic_error&) {
      throw ParseError("'" + path + "': malformed number", number);
    }
  }
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size() - meta_columns));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) t.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  }
  return t;
}

ConfigMap base_config(const Common& common) {
  ConfigMap config;
  if (!common.config.empty()) config = load_config(common.config);
  if (!common.cache_dir.empty()) config["cache_dir"] = {common.cache_dir};
  if (common.workers > 0) config["workers"] = {std::to_string(common.workers)};
  if (common.seed >= 0) config["seed"] = {std::to_string(common.seed)};
  return config;
}

std::filesystem::path config_dir(const Common& common) {
  return common.config.empty() ? std::filesystem::current_path()
                               : std::filesystem::absolute(common.config).parent_path();
}

std::unique_ptr<FeatureStore> make_store(const ExperimentConfig& ec) {
  return std::make_unique<FeatureStore>(ec.cache_dir);
}

std::vector<ManifestEntry> entries_except(const Manifest& m, std::optional<int> fold) {
  std::vector<ManifestEntry> out;
  for (const auto& e : m.entries()) {
    if (!fold || e.fold != fold) out.push_back(e);
  }
  return out;
}

void print_report(const std::vector<EvalReport>& reports) {
  for (const auto& r : reports) {
    std::string name;
    for (const auto& [k, v] : r.fingerprint) name += (name.empty() ? "" : " ") + k + "=" + v;
    if (!r.error.empty()) {
      std::cout << name << "  FAILED: " << r.error << '\n';
      continue;
    }
    std::printf("%s  AUC %.4f  MAP %.4f\n", name.c_str(), r.pooled_auc, r.pooled_map);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"birdfl: bird sound classification with learned spectro-temporal features"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--config", common.config, "Configuration file (key = value, ...)");
  app.add_option("--cache-dir", common.cache_dir, "Feature cache directory");
  app.add_option("--workers", common.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", common.seed, "Master seed")->check(CLI::NonNegativeNumber);
  app.add_flag("-v,--verbose", common.verbose, "Log progress and stage timings");
  app.add_flag("-q,--quiet", common.quiet, "Suppress warnings");

  // Options shared by the feature subcommands.
  std::string manifest_path, features_label = "melspec-kfl4-ms", out_path;
  bool nr = false;
  std::optional<int> exclude_fold;

  auto* learn_cmd = app.add_subcommand("learn-features", "Learn a codebook from manifest clips");
  learn_cmd->add_option("--manifest", manifest_path)->required();
  learn_cmd->add_option("--features", features_label, "Learned feature label");
  learn_cmd->add_option("--exclude-fold", exclude_fold, "Leave this fold's clips out");
  learn_cmd->add_flag("--noise-reduction", nr);
  learn_cmd->add_option("--out", out_path)->required();

  std::string codebook_path, window_text = "whole";
  std::optional<std::uint64_t> projection_seed;
  auto* extract_cmd = app.add_subcommand("extract", "Summarized features per clip window");
  extract_cmd->add_option("--manifest", manifest_path)->required();
  extract_cmd->add_option("--features", features_label);
  extract_cmd->add_option("--codebook", codebook_path, "Codebook from learn-features");
  extract_cmd->add_flag("--noise-reduction", nr);
  extract_cmd->add_option("--window", window_text, "Seconds or 'whole'");
  extract_cmd->add_option("--projection-seed", projection_seed);
  extract_cmd->add_option("--out", out_path)->required();

  std::string features_path, mode_text = "multilabel";
  ForestParams forest;
  bool no_bootstrap = false;
  auto* train_cmd = app.add_subcommand("train", "Train a random forest on extracted features");
  train_cmd->add_option("--features", features_path)->required();
  train_cmd->add_option("--manifest", manifest_path, "Labels for the feature rows")->required();
  train_cmd->add_option("--mode", mode_text, "single-label | multilabel | binary-relevance");
  train_cmd->add_option("--exclude-fold", exclude_fold);
  train_cmd->add_option("--trees", forest.n_trees);
  train_cmd->add_option("--max-features", forest.max_features);
  train_cmd->add_option("--min-samples-leaf", forest.min_samples_leaf);
  train_cmd->add_flag("--no-bootstrap", no_bootstrap);
  train_cmd->add_option("--out", out_path)->required();

  std::string model_path;
  auto* predict_cmd = app.add_subcommand("predict", "Per-window label probabilities");
  predict_cmd->add_option("--model", model_path)->required();
  predict_cmd->add_option("--features", features_path)->required();
  predict_cmd->add_option("--out", out_path)->required();

  std::string predictions_path, pool_text = "mean", auc_text = "micro", json_path, csv_path;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "AUC and MAP of predictions per fold");
  evaluate_cmd->add_option("--manifest", manifest_path)->required();
  evaluate_cmd->add_option("--predictions", predictions_path)->required();
  evaluate_cmd->add_option("--pool", pool_text, "mean | max");
  evaluate_cmd->add_option("--auc", auc_text, "micro | macro");
  evaluate_cmd->add_option("--json", json_path);

  std::string full_alt;
  bool dry_run = false;
  auto* grid_cmd = app.add_subcommand("grid", "Run the configured grid of crossvalidated experiments");
  grid_cmd->add_option("--csv", csv_path, "Report CSV path");
  grid_cmd->add_option("--json", json_path, "Report JSON path");
  grid_cmd->add_option("--full", full_alt,
                       "Expand the full 384-run grid; value is the alternative classifier mode");
  grid_cmd->add_flag("--dry-run", dry_run, "Print the run count and exit");

  std::vector<std::string> aux_paths;
  std::string augment_text = "features-only";
  auto* augment_cmd = app.add_subcommand("augment", "Augmented or cross-condition experiment");
  augment_cmd->add_option("--manifest", manifest_path, "Primary manifest (overrides config)");
  augment_cmd->add_option("--aux", aux_paths, "Auxiliary manifest(s)");
  augment_cmd->add_option("--mode", augment_text, "features-only | features-and-training | cross-condition");
  augment_cmd->add_option("--csv", csv_path);
  augment_cmd->add_option("--json", json_path);

  std::size_t count = 16;
  int layer = 1;
  bool no_images = false;
  auto* export_cmd = app.add_subcommand("export-bases", "Write un-whitened bases as grids and images");
  export_cmd->add_option("--codebook", codebook_path)->required();
  export_cmd->add_option("--count", count);
  export_cmd->add_option("--layer", layer, "Layer of a two-layer model")->check(CLI::Range(1, 2));
  export_cmd->add_flag("--no-images", no_images);
  export_cmd->add_option("--out", out_path)->required();

  std::string synth_kind = "tone-chirp";
  CorpusSpec spec;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus and manifest");
  synth_cmd->add_option("--kind", synth_kind, "tone-chirp | fm");
  synth_cmd->add_option("--classes", spec.classes);
  synth_cmd->add_option("--clips-per-class", spec.clips_per_class);
  synth_cmd->add_option("--seconds", spec.seconds);
  synth_cmd->add_option("--folds", spec.folds);
  synth_cmd->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);
  set_log_level(common.quiet ? LogLevel::kQuiet : common.verbose ? LogLevel::kInfo : LogLevel::kWarn);

  const char* stage = "config";
  try {
    ConfigMap config = base_config(common);
    ExperimentConfig ec = experiment_from_config(config, config_dir(common));
    RunConfig run = ec.grid.base;

    if (*learn_cmd || *extract_cmd) {
      run.features = FeatureConfig::parse(features_label);
      run.noise_reduction = nr;
      run.window = DecisionWindow::parse(window_text);
      run.projection_seed = projection_seed;
    }

    if (*learn_cmd) {
      stage = "feature-learning";
      if (!run.features.learned()) throw ConfigError("'" + features_label + "' is not a learned feature");
      ExperimentData data;
      data.primary = load_manifest(manifest_path);
      auto store = make_store(ec);
      Pipeline pipeline(data, *store);
      const auto clips = entries_except(data.primary, exclude_fold);
      const LearnedFeatures lf = pipeline.learn(clips, run, run.learning.seed, ec.workers);
      if (lf.two_layer) {
        save_two_layer(*lf.two_layer, out_path);
      } else {
        save_codebook(*lf.single, out_path);
      }
      std::cout << "learned " << run.learning.k << " bases from " << clips.size() << " clips -> " << out_path << '\n';
      return 0;
    }

    if (*extract_cmd) {
      stage = "extract";
      ExperimentData data;
      data.primary = load_manifest(manifest_path);
      auto store = make_store(ec);
      Pipeline pipeline(data, *store);
      LearnedFeatures lf;
      if (run.features.learned()) {
        if (codebook_path.empty()) throw ConfigError("learned features need --codebook");
        const std::string bytes = [&] {
          std::ifstream in(codebook_path, std::ios::binary);
          if (!in) throw IoError("cannot read '" + codebook_path + "'");
          std::ostringstream s;
          s << in.rdbuf();
          return s.str();
        }();
        if (run.features.kind == FeatureKind::kLearnedTwoLayer) {
          lf.two_layer = decode_two_layer(bytes, codebook_path);
        } else {
          lf.single = decode_codebook(bytes, codebook_path);
        }
        lf.key = sha256_hex(bytes);
      }
      const auto& entries = data.primary.entries();
      std::vector<std::vector<SummaryVector>> rows(entries.size());
      parallel_for(entries.size(), ec.workers, [&](std::size_t i) {
        try {
          auto series = pipeline.feature_series(entries[i], run, run.features.learned() ? &lf : nullptr);
          if (!series) {
            log_warn("clip '" + entries[i].clip_id + "' is too short; skipped");
            return;
          }
          rows[i] = summarize_clip(*series, run.features, run.window, entries[i].clip_id);
        } catch (const StageError&) {
          throw;
        } catch (const std::exception& e) {
          throw StageError("extract", entries[i].clip_id, e.what());
        }
      });
      std::optional<RandomProjection> rp;
      std::ostringstream out;
      bool header = false;
      for (const auto& clip : rows) {
        for (const auto& w : clip) {
          RowVector v = w.values;
          if (run.projection_seed) {
            if (!rp) rp = RandomProjection::make(v.size(), *run.projection_seed);
            v = rp->apply(Matrix(v)).row(0);
          }
          if (!header) {
            out << "clip_id,window_index";
            for (Eigen::Index d = 0; d < v.size(); ++d) out << ",f" << d;
            out << '\n';
            header = true;
          }
          out << w.clip_id << ',' << w.window_index;
          for (Eigen::Index d = 0; d < v.size(); ++d) out << ',' << fmt(v[d]);
          out << '\n';
        }
      }
      write_text(out_path, out.str());
      return 0;
    }

    if (*train_cmd) {
      stage = "training";
      forest.bootstrap = !no_bootstrap;
      forest.seed = run.forest.seed;
      forest.workers = ec.workers;
      const Manifest manifest = load_manifest(manifest_path);
      const Table t = read_table(features_path, 2);
      const LabelVocabulary vocab = manifest.vocabulary();
      std::vector<Eigen::Index> keep;
      for (std::size_t r = 0; r < t.keys.size(); ++r) {
        const ManifestEntry* e = manifest.find(t.keys[r].clip_id);
        if (!e) throw IntegrityError("clip '" + t.keys[r].clip_id + "' is not in the manifest");
        if (!exclude_fold || e->fold != exclude_fold) keep.push_back(static_cast<Eigen::Index>(r));
      }
      Matrix x(static_cast<Eigen::Index>(keep.size()), t.values.cols());
      LabelMatrix y = LabelMatrix::Zero(x.rows(), static_cast<Eigen::Index>(vocab.size()));
      for (std::size_t i = 0; i < keep.size(); ++i) {
        x.row(static_cast<Eigen::Index>(i)) = t.values.row(keep[i]);
        for (const auto& name : manifest.find(t.keys[static_cast<std::size_t>(keep[i])].clip_id)->labels) {
          y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(vocab.index(name))) = 1;
        }
      }
      save_model(train(x, y, parse_classifier_mode(mode_text), vocab, forest), out_path);
      std::cout << "trained on " << keep.size() << " instances -> " << out_path << '\n';
      return 0;
    }

    if (*predict_cmd) {
      stage = "predict";
      const TrainedModel model = load_model(model_path);
      const Table t = read_table(features_path, 2);
      const PredictionMatrix p = predict_proba(model, t.values, t.keys);
      std::ostringstream out;
      out << "clip_id,window_index";
      for (const auto& name : p.vocabulary.names()) out << ',' << name;
      out << '\n';
      for (std::size_t r = 0; r < p.keys.size(); ++r) {
        out << p.keys[r].clip_id << ',' << p.keys[r].window_index;
        for (Eigen::Index c = 0; c < p.values.cols(); ++c) out << ',' << fmt(p.values(static_cast<Eigen::Index>(r), c));
        out << '\n';
      }
      write_text(out_path, out.str());
      return 0;
    }

    if (*evaluate_cmd) {
      stage = "evaluate";
      const Manifest manifest = load_manifest(manifest_path);
      const Table t = read_table(predictions_path, 2);
      std::set<std::string> names(t.header.begin() + 2, t.header.end());
      const LabelVocabulary vocab(names);
      if (vocab.names() != std::vector<std::string>(t.header.begin() + 2, t.header.end())) {
        throw ParseError("prediction columns must be distinct labels in sorted order", 1);
      }
      std::map<int, std::vector<std::size_t>> by_fold;
      for (std::size_t r = 0; r < t.keys.size(); ++r) {
        const ManifestEntry* e = manifest.find(t.keys[r].clip_id);
        if (!e) throw IntegrityError("clip '" + t.keys[r].clip_id + "' is not in the manifest");
        by_fold[e->fold.value_or(0)].push_back(r);
      }
      std::vector<FoldPredictions> folds;
      for (const auto& [fold, rows] : by_fold) {
        FoldPredictions fp{fold, {{}, Matrix(static_cast<Eigen::Index>(rows.size()), t.values.cols()), vocab}};
        for (std::size_t i = 0; i < rows.size(); ++i) {
          fp.windows.keys.push_back(t.keys[rows[i]]);
          fp.windows.values.row(static_cast<Eigen::Index>(i)) = t.values.row(static_cast<Eigen::Index>(rows[i]));
        }
        folds.push_back(std::move(fp));
      }
      if (auc_text != "micro" && auc_text != "macro") throw ConfigError("--auc expects micro or macro");
      EvalReport report = evaluate_run(manifest, folds, parse_pool_mode(pool_text),
                                       auc_text == "micro" ? AucAveraging::kMicro : AucAveraging::kMacro);
      report.fingerprint = {{"pool", pool_text}, {"auc", auc_text}};
      for (const auto& f : report.folds) std::printf("fold %d  AUC %.4f  MAP %.4f  (%zu clips)\n", f.fold, f.auc, f.map, f.clips);
      print_report({report});
      if (!json_path.empty()) write_text(json_path, reports_to_json({report}));
      return 0;
    }

    if (*grid_cmd || *augment_cmd) {
      stage = "grid";
      if (*augment_cmd) {
        if (!manifest_path.empty()) ec.manifest = manifest_path;
        for (const auto& p : aux_paths) ec.auxiliary.emplace_back(p);
        ec.grid.base.augment = parse_augment_mode(augment_text);
      }
      if (!full_alt.empty()) {
        GridSpec full = GridSpec::full(parse_classifier_mode(full_alt));
        full.base = ec.grid.base;
        ec.grid = full;
      }
      if (ec.grid.features.empty()) throw ConfigError("no features configured (set 'features' in the config)");
      const std::vector<RunConfig> runs = ec.grid.expand();
      std::cout << "grid: " << runs.size() << " runs\n" << std::flush;
      if (dry_run) return 0;
      auto store = make_store(ec);
      Pipeline pipeline(load_experiment(ec), *store);
      std::vector<EvalReport> reports;
      if (runs.size() == 1) {
        reports.push_back(pipeline.run_single(runs.front(), ec.workers).report);
      } else {
        for (auto& r : pipeline.run_grid(runs, ec.workers)) reports.push_back(std::move(r.report));
      }
      print_report(reports);
      if (!csv_path.empty()) write_text(csv_path, reports_to_csv(reports));
      if (!json_path.empty()) write_text(json_path, reports_to_json(reports));
      const bool any_failed = std::any_of(reports.begin(), reports.end(), [](const EvalReport& r) { return !r.error.empty(); });
      return any_failed ? 3 : 0;
    }

    if (*export_cmd) {
      stage = "export-bases";
      Codebook cb;
      try {
        cb = load_codebook(codebook_path);
      } catch (const IoError&) {
        const TwoLayerModel m = load_two_layer(codebook_path);
        cb = layer == 1 ? m.layer1 : m.layer2;
      }
      const std::size_t n = export_bases(cb, count, out_path, !no_images);
      std::cout << "exported " << n << " bases (" << cb.frames_per_patch << " x " << cb.frame_dims() << ") to "
                << out_path << '\n';
      return 0;
    }

    if (*synth_cmd) {
      stage = "synth";
      spec.seed = run.forest.seed;
      Manifest m;
      if (synth_kind == "tone-chirp") {
        m = synth_tone_chirp_corpus(out_path, spec);
      } else if (synth_kind == "fm") {
        m = synth_fm_corpus(out_path, spec);
      } else {
        throw ConfigError("--kind expects tone-chirp or fm");
      }
      std::cout << "wrote " << m.size() << " clips to " << out_path << "/manifest.csv\n";
      return 0;
    }
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: [" << stage << "] " << e.what() << '\n';
    return 1;
  }
  return 0;
}
