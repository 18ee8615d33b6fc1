#include "birdfl/forest.hpp"

#include "binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace birdfl {

std::string to_string(ClassifierMode mode) {
  switch (mode) {
    case ClassifierMode::kSingleLabel: return "single-label";
    case ClassifierMode::kMultilabel: return "multilabel";
    case ClassifierMode::kBinaryRelevance: return "binary-relevance";
  }
  return "unknown";
}

ClassifierMode parse_classifier_mode(const std::string& text) {
  if (text == "single-label") return ClassifierMode::kSingleLabel;
  if (text == "multilabel") return ClassifierMode::kMultilabel;
  if (text == "binary-relevance") return ClassifierMode::kBinaryRelevance;
  throw ConfigError("unknown classifier mode '" + text +
                    "' (expected single-label, multilabel or binary-relevance)");
}

int ForestParams::resolved_max_features(Eigen::Index dims) const {
  if (dims < 1) throw DimensionError("forest: feature dimension must be >= 1");
  const int d = static_cast<int>(dims);
  if (max_features == 0) return std::clamp(static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d)))), 1, d);
  if (max_features < 1 || max_features > d) {
    throw ConfigError("forest: max_features must lie in [1, " + std::to_string(d) + "]");
  }
  return max_features;
}

int TargetSet::value_width() const { return std::accumulate(classes.begin(), classes.end(), 0); }

DecisionTree::DecisionTree(std::vector<Node> nodes, std::vector<double> values, int value_width)
    : nodes_(std::move(nodes)), values_(std::move(values)), value_width_(value_width) {
  if (values_.size() != nodes_.size() * static_cast<std::size_t>(value_width_)) {
    throw IntegrityError("decision tree: value array does not match node count");
  }
}

namespace {

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double score = -1.0;  // sum over heads of sum_c n_c^2 / n, per child
  double gap = 0.0;
};

}  // namespace

DecisionTree DecisionTree::fit(const Matrix& features, const TargetSet& targets,
                               std::vector<std::size_t> samples, int max_features,
                               int min_samples_leaf, std::uint64_t seed) {
  const auto dims = static_cast<int>(features.cols());
  const std::size_t heads = targets.heads();
  const int width = targets.value_width();
  if (samples.empty()) throw DomainError("decision tree: no training samples");
  if (min_samples_leaf < 1) throw ConfigError("decision tree: min_samples_leaf must be >= 1");

  std::vector<int> offset(heads);
  for (std::size_t h = 1; h < heads; ++h) offset[h] = offset[h - 1] + targets.classes[h - 1];
  auto slot = [&](std::size_t sample, std::size_t h) {
    return static_cast<std::size_t>(offset[h] + targets.at(sample, h));
  };

  std::mt19937_64 rng(seed);
  std::vector<Node> nodes(1);
  std::vector<double> values;
  struct Task {
    std::size_t node, begin, end;
  };
  std::vector<Task> stack{{0, 0, samples.size()}};
  std::vector<std::int64_t> counts(static_cast<std::size_t>(width));
  std::vector<std::int64_t> left(static_cast<std::size_t>(width));
  std::vector<std::int64_t> right(static_cast<std::size_t>(width));
  std::vector<int> order(static_cast<std::size_t>(dims));
  std::vector<std::pair<double, std::size_t>> sorted;

  while (!stack.empty()) {
    const Task task = stack.back();
    stack.pop_back();
    const std::size_t n = task.end - task.begin;

    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = task.begin; i < task.end; ++i) {
      for (std::size_t h = 0; h < heads; ++h) ++counts[slot(samples[i], h)];
    }
    values.resize(nodes.size() * static_cast<std::size_t>(width));
    double* dist = values.data() + task.node * static_cast<std::size_t>(width);
    for (int c = 0; c < width; ++c) dist[c] = static_cast<double>(counts[c]) / static_cast<double>(n);

    bool pure = true;
    for (std::size_t h = 0; h < heads && pure; ++h) {
      int nonzero = 0;
      for (int c = 0; c < targets.classes[h]; ++c) nonzero += counts[offset[h] + c] > 0;
      pure = nonzero <= 1;
    }
    if (pure || n < 2 * static_cast<std::size_t>(min_samples_leaf)) continue;

    SplitCandidate best;
    std::iota(order.begin(), order.end(), 0);
    int examined = 0;
    for (int i = 0; i < dims; ++i) {
      if (examined >= max_features && best.feature >= 0) break;
      std::uniform_int_distribution<int> pick(i, dims - 1);
      std::swap(order[i], order[pick(rng)]);
      const int f = order[i];
      ++examined;

      sorted.clear();
      for (std::size_t s = task.begin; s < task.end; ++s) {
        sorted.emplace_back(features(static_cast<Eigen::Index>(samples[s]), f), samples[s]);
      }
      std::sort(sorted.begin(), sorted.end());
      if (sorted.front().first == sorted.back().first) continue;

      std::fill(left.begin(), left.end(), 0);
      right = counts;
      double sum_sq_left = 0.0, sum_sq_right = 0.0;
      for (int c = 0; c < width; ++c) sum_sq_right += static_cast<double>(counts[c] * counts[c]);
      for (std::size_t j = 0; j + 1 < n; ++j) {
        const std::size_t s = sorted[j].second;
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t c = slot(s, h);
          sum_sq_left += static_cast<double>(2 * left[c] + 1);
          sum_sq_right -= static_cast<double>(2 * right[c] - 1);
          ++left[c];
          --right[c];
        }
        const double lo = sorted[j].first, hi = sorted[j + 1].first;
        const std::size_t n_left = j + 1, n_right = n - n_left;
        if (!(lo < hi)) continue;
        if (n_left < static_cast<std::size_t>(min_samples_leaf) ||
            n_right < static_cast<std::size_t>(min_samples_leaf)) {
          continue;
        }
        const double score = sum_sq_left / static_cast<double>(n_left) +
                             sum_sq_right / static_cast<double>(n_right);
        const double gap = hi - lo;
        if (score > best.score || (score == best.score && gap > best.gap)) {
          double threshold = lo + 0.5 * gap;
          if (!(threshold < hi)) threshold = lo;
          best = {f, threshold, score, gap};
        }
      }
    }
    if (best.feature < 0) continue;

    const auto mid = std::stable_partition(
        samples.begin() + static_cast<std::ptrdiff_t>(task.begin),
        samples.begin() + static_cast<std::ptrdiff_t>(task.end), [&](std::size_t s) {
          return features(static_cast<Eigen::Index>(s), best.feature) <= best.threshold;
        });
    const std::size_t split = static_cast<std::size_t>(mid - samples.begin());
    const auto left_id = static_cast<std::int32_t>(nodes.size());
    nodes.emplace_back();
    nodes.emplace_back();
    Node& node = nodes[task.node];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = left_id;
    node.right = left_id + 1;
    stack.push_back({static_cast<std::size_t>(left_id + 1), split, task.end});
    stack.push_back({static_cast<std::size_t>(left_id), task.begin, split});
  }
  values.resize(nodes.size() * static_cast<std::size_t>(width));
  return DecisionTree(std::move(nodes), std::move(values), width);
}

std::size_t DecisionTree::leaf_index(const double* x) const {
  std::size_t i = 0;
  while (nodes_[i].feature >= 0) {
    const Node& n = nodes_[i];
    i = static_cast<std::size_t>(x[n.feature] <= n.threshold ? n.left : n.right);
  }
  return i;
}

std::span<const double> DecisionTree::leaf_distribution(const double* x) const {
  const std::size_t leaf = leaf_index(x);
  return {values_.data() + leaf * static_cast<std::size_t>(value_width_),
          static_cast<std::size_t>(value_width_)};
}

RandomForest RandomForest::fit(const Matrix& features, const TargetSet& targets,
                               const ForestParams& params) {
  const std::size_t n = static_cast<std::size_t>(features.rows());
  if (targets.rows() != n) throw DimensionError("forest: target rows do not match features");
  if (params.n_trees < 1) throw ConfigError("forest: n_trees must be >= 1");
  const int max_features = params.resolved_max_features(features.cols());
  std::vector<DecisionTree> trees(static_cast<std::size_t>(params.n_trees));
  parallel_for(trees.size(), params.workers, [&](std::size_t t) {
    const std::uint64_t tree_seed = derive_seed(params.seed, t);
    std::mt19937_64 rng(tree_seed);
    std::vector<std::size_t> samples(n);
    if (params.bootstrap) {
      std::uniform_int_distribution<std::size_t> draw(0, n - 1);
      for (auto& s : samples) s = draw(rng);
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    trees[t] = DecisionTree::fit(features, targets, std::move(samples), max_features,
                                 params.min_samples_leaf, rng());
  });
  return RandomForest(std::move(trees), targets.classes);
}

Matrix RandomForest::predict(const Matrix& features) const {
  if (trees_.empty()) throw IntegrityError("forest: no trees");
  const int width = trees_.front().value_width();
  Matrix out = Matrix::Zero(features.rows(), width);
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    const double* x = features.row(r).data();
    for (const auto& tree : trees_) {
      const auto dist = tree.leaf_distribution(x);
      for (int c = 0; c < width; ++c) out(r, c) += dist[static_cast<std::size_t>(c)];
    }
  }
  out /= static_cast<double>(trees_.size());
  return out;
}

TrainedModel train(const Matrix& features, const LabelMatrix& labels, ClassifierMode mode,
                   const LabelVocabulary& vocabulary, const ForestParams& params) {
  const Eigen::Index n = features.rows();
  const auto l = static_cast<Eigen::Index>(vocabulary.size());
  if (n < 2) throw DomainError("train: need at least 2 instances");
  if (labels.rows() != n || labels.cols() != l) {
    throw DimensionError("train: label matrix must be " + std::to_string(n) + " x " +
                         std::to_string(l));
  }
  if (l < 1) throw ConfigError("train: empty label vocabulary");
  if (!features.allFinite()) throw DomainError("train: non-finite feature values");

  TrainedModel model;
  model.mode = mode;
  model.vocabulary = vocabulary;
  model.params = params;
  model.feature_dim = features.cols();
  params.resolved_max_features(features.cols());

  switch (mode) {
    case ClassifierMode::kSingleLabel: {
      TargetSet t{{static_cast<int>(l)}, std::vector<std::int32_t>(static_cast<std::size_t>(n))};
      for (Eigen::Index r = 0; r < n; ++r) {
        int positives = 0;
        for (Eigen::Index c = 0; c < l; ++c) {
          if (labels(r, c)) {
            ++positives;
            t.values[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(c);
          }
        }
        if (positives != 1) {
          throw ConfigError("train: single-label mode needs exactly one label per instance (row " +
                            std::to_string(r) + " has " + std::to_string(positives) + ")");
        }
      }
      for (Eigen::Index c = 0; c < l; ++c) {
        if (labels.col(c).cast<int>().sum() == 0) {
          log_warn("train: class '" + vocabulary.name(static_cast<std::size_t>(c)) +
                   "' has no training instances");
        }
      }
      model.forests.push_back(RandomForest::fit(features, t, params));
      break;
    }
    case ClassifierMode::kMultilabel: {
      TargetSet t{std::vector<int>(static_cast<std::size_t>(l), 2),
                  std::vector<std::int32_t>(static_cast<std::size_t>(n * l))};
      for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < l; ++c) t.values[static_cast<std::size_t>(r * l + c)] = labels(r, c) ? 1 : 0;
      }
      model.forests.push_back(RandomForest::fit(features, t, params));
      break;
    }
    case ClassifierMode::kBinaryRelevance: {
      for (Eigen::Index c = 0; c < l; ++c) {
        TargetSet t{{2}, std::vector<std::int32_t>(static_cast<std::size_t>(n))};
        for (Eigen::Index r = 0; r < n; ++r) t.values[static_cast<std::size_t>(r)] = labels(r, c) ? 1 : 0;
        ForestParams p = params;
        p.seed = derive_seed(params.seed, static_cast<std::uint64_t>(c));
        model.forests.push_back(RandomForest::fit(features, t, p));
      }
      break;
    }
  }
  return model;
}

Matrix predict_proba(const TrainedModel& model, const Matrix& features) {
  if (features.cols() != model.feature_dim) {
    throw DimensionError("predict: model expects " + std::to_string(model.feature_dim) +
                         " features, got " + std::to_string(features.cols()));
  }
  const auto l = static_cast<Eigen::Index>(model.vocabulary.size());
  switch (model.mode) {
    case ClassifierMode::kSingleLabel:
      return model.forests.at(0).predict(features);
    case ClassifierMode::kMultilabel: {
      const Matrix raw = model.forests.at(0).predict(features);
      Matrix out(features.rows(), l);
      for (Eigen::Index c = 0; c < l; ++c) out.col(c) = raw.col(2 * c + 1);
      return out;
    }
    case ClassifierMode::kBinaryRelevance: {
      if (static_cast<Eigen::Index>(model.forests.size()) != l) {
        throw IntegrityError("predict: binary-relevance model needs one forest per label");
      }
      Matrix out(features.rows(), l);
      for (Eigen::Index c = 0; c < l; ++c) out.col(c) = model.forests[static_cast<std::size_t>(c)].predict(features).col(1);
      return out;
    }
  }
  throw IntegrityError("predict: unknown classifier mode");
}

PredictionMatrix predict_proba(const TrainedModel& model, const Matrix& features,
                               std::vector<InstanceKey> keys) {
  if (static_cast<Eigen::Index>(keys.size()) != features.rows()) {
    throw DimensionError("predict: one key per feature row required");
  }
  return PredictionMatrix{std::move(keys), predict_proba(model, features), model.vocabulary};
}

namespace {
constexpr char kModelMagic[5] = "RFMD";
constexpr std::uint32_t kModelVersion = 1;
}  // namespace

std::string encode_model(const TrainedModel& model) {
  detail::ByteWriter w;
  w.put_bytes(kModelMagic, 4);
  w.put<std::uint32_t>(kModelVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.mode));
  w.put<std::int32_t>(model.params.n_trees);
  w.put<std::int32_t>(model.params.max_features);
  w.put<std::int32_t>(model.params.min_samples_leaf);
  w.put<std::uint8_t>(model.params.bootstrap ? 1 : 0);
  w.put<std::uint64_t>(model.params.seed);
  w.put<std::uint64_t>(static_cast<std::uint64_t>(model.feature_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.vocabulary.size()));
  for (const auto& name : model.vocabulary.names()) w.put_string(name);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.forests.size()));
  for (const auto& forest : model.forests) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(forest.classes().size()));
    for (int c : forest.classes()) w.put<std::int32_t>(c);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(forest.trees().size()));
    for (const auto& tree : forest.trees()) {
      w.put<std::uint32_t>(static_cast<std::uint32_t>(tree.nodes().size()));
      w.put<std::int32_t>(tree.value_width());
      for (const auto& node : tree.nodes()) {
        w.put<std::int32_t>(node.feature);
        w.put<double>(node.threshold);
        w.put<std::int32_t>(node.left);
        w.put<std::int32_t>(node.right);
      }
      for (double v : tree.values()) w.put<double>(v);
    }
  }
  return w.bytes();
}

TrainedModel decode_model(const std::string& bytes, const std::string& source) {
  detail::ByteReader r(bytes, source);
  r.expect_magic(kModelMagic);
  if (r.get<std::uint32_t>() != kModelVersion) throw IoError("'" + source + "': unsupported model version");
  TrainedModel m;
  const auto mode = r.get<std::uint32_t>();
  if (mode > static_cast<std::uint32_t>(ClassifierMode::kBinaryRelevance)) {
    throw IoError("'" + source + "': unknown classifier mode");
  }
  m.mode = static_cast<ClassifierMode>(mode);
  m.params.n_trees = r.get<std::int32_t>();
  m.params.max_features = r.get<std::int32_t>();
  m.params.min_samples_leaf = r.get<std::int32_t>();
  m.params.bootstrap = r.get<std::uint8_t>() != 0;
  m.params.seed = r.get<std::uint64_t>();
  m.feature_dim = static_cast<Eigen::Index>(r.get<std::uint64_t>());
  std::set<std::string> names;
  const auto n_labels = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_labels; ++i) names.insert(r.get_string());
  m.vocabulary = LabelVocabulary(names);
  if (m.vocabulary.size() != n_labels) throw IoError("'" + source + "': duplicate label names");
  const auto n_forests = r.get<std::uint32_t>();
  for (std::uint32_t f = 0; f < n_forests; ++f) {
    std::vector<int> classes(r.get<std::uint32_t>());
    for (auto& c : classes) c = r.get<std::int32_t>();
    std::vector<DecisionTree> trees(r.get<std::uint32_t>());
    for (auto& tree : trees) {
      std::vector<DecisionTree::Node> nodes(r.get<std::uint32_t>());
      const int width = r.get<std::int32_t>();
      for (auto& node : nodes) {
        node.feature = r.get<std::int32_t>();
        node.threshold = r.get<double>();
        node.left = r.get<std::int32_t>();
        node.right = r.get<std::int32_t>();
        if (node.feature >= static_cast<std::int32_t>(m.feature_dim) ||
            (node.feature >= 0 && (node.left < 0 || node.right < 0 ||
                                   static_cast<std::size_t>(std::max(node.left, node.right)) >= nodes.size()))) {
          throw IoError("'" + source + "': corrupt tree node");
        }
      }
      std::vector<double> values(nodes.size() * static_cast<std::size_t>(width));
      for (auto& v : values) v = r.get<double>();
      tree = DecisionTree(std::move(nodes), std::move(values), width);
    }
    m.forests.emplace_back(std::move(trees), std::move(classes));
  }
  if (!r.at_end()) throw IoError("'" + source + "': trailing bytes");
  return m;
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) {
  detail::atomic_write(path, encode_model(model));
}

TrainedModel load_model(const std::filesystem::path& path) {
  return decode_model(detail::read_file(path), path.string());
}

}  // namespace birdfl
