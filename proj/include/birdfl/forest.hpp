#pragma once

#include "birdfl/common.hpp"
#include "birdfl/dataset.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace birdfl {

enum class ClassifierMode { kSingleLabel, kMultilabel, kBinaryRelevance };

std::string to_string(ClassifierMode mode);
// Accepts "single-label", "multilabel", "binary-relevance".
ClassifierMode parse_classifier_mode(const std::string& text);

// N x L presence matrix, entries 0 or 1.
using LabelMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ForestParams {
  int n_trees = 200;
  // 0 selects ceil(sqrt(D)).
  int max_features = 0;
  int min_samples_leaf = 1;
  bool bootstrap = true;
  std::uint64_t seed = 0;
  // Execution only; does not affect the trained model.
  int workers = 1;

  int resolved_max_features(Eigen::Index dims) const;
};

// Categorical targets for a multi-output tree: head h takes values in
// [0, classes[h]). Stored row-major N x H.
struct TargetSet {
  std::vector<int> classes;
  std::vector<std::int32_t> values;

  std::size_t heads() const { return classes.size(); }
  std::size_t rows() const { return heads() == 0 ? 0 : values.size() / heads(); }
  int at(std::size_t row, std::size_t head) const { return values[row * heads() + head]; }
  // Sum of classes: the width of a leaf distribution.
  int value_width() const;
};

// CART tree with summed per-head Gini impurity, grown to purity. Leaves hold
// the per-head class frequencies of the training samples that reached them,
// concatenated head by head.
class DecisionTree {
 public:
  struct Node {
    std::int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;     // x[feature] <= threshold goes left
    std::int32_t left = -1;
    std::int32_t right = -1;
  };

  // `samples` may contain duplicates (bootstrap draws). Candidate features
  // are drawn without replacement; the search continues past max_features
  // until a node finds a usable split or runs out of features. Equal-score
  // splits are resolved by the wider gap between the straddled values.
  static DecisionTree fit(const Matrix& features, const TargetSet& targets,
                          std::vector<std::size_t> samples, int max_features,
                          int min_samples_leaf, std::uint64_t seed);

  std::span<const double> leaf_distribution(const double* x) const;
  std::size_t leaf_index(const double* x) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<double>& values() const { return values_; }
  int value_width() const { return value_width_; }

  DecisionTree() = default;
  DecisionTree(std::vector<Node> nodes, std::vector<double> values, int value_width);

 private:
  std::vector<Node> nodes_;
  std::vector<double> values_;  // nodes_.size() x value_width_
  int value_width_ = 0;
};

class RandomForest {
 public:
  static RandomForest fit(const Matrix& features, const TargetSet& targets,
                          const ForestParams& params);
  // N x value_width: tree-averaged leaf distributions.
  Matrix predict(const Matrix& features) const;

  const std::vector<DecisionTree>& trees() const { return trees_; }
  const std::vector<int>& classes() const { return classes_; }

  RandomForest() = default;
  RandomForest(std::vector<DecisionTree> trees, std::vector<int> classes)
      : trees_(std::move(trees)), classes_(std::move(classes)) {}

 private:
  std::vector<DecisionTree> trees_;
  std::vector<int> classes_;
};

struct TrainedModel {
  ClassifierMode mode = ClassifierMode::kMultilabel;
  LabelVocabulary vocabulary;
  ForestParams params;
  Eigen::Index feature_dim = 0;
  // One forest, or one per label in binary-relevance mode.
  std::vector<RandomForest> forests;
};

// Single-label: one L-class forest; requires exactly one positive per row.
// Multilabel: one forest of L binary heads. Binary relevance: L binary
// forests seeded by derive_seed(params.seed, label).
TrainedModel train(const Matrix& features, const LabelMatrix& labels, ClassifierMode mode,
                   const LabelVocabulary& vocabulary, const ForestParams& params);

struct InstanceKey {
  std::string clip_id;
  int window_index = 0;
  bool operator==(const InstanceKey&) const = default;
};

struct PredictionMatrix {
  std::vector<InstanceKey> keys;
  Matrix values;  // rows x |vocabulary|, each in [0, 1]
  LabelVocabulary vocabulary;
};

// N x L per-label probabilities.
Matrix predict_proba(const TrainedModel& model, const Matrix& features);
PredictionMatrix predict_proba(const TrainedModel& model, const Matrix& features,
                               std::vector<InstanceKey> keys);

// Model file: magic "RFMD", u32 version, params, vocabulary, and per-tree
// node arrays (feature, threshold, children) with leaf distributions.
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);
std::string encode_model(const TrainedModel& model);
TrainedModel decode_model(const std::string& bytes, const std::string& source);

}  // namespace birdfl
