#pragma once

// Contrastive candidate scorer: a linear model over four similarity features
// of a candidate against its prompt and the beam prefix, normalized per step
// with a log-softmax.

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "beamlat/diffusion.hpp"
#include "beamlat/seed.hpp"

namespace beamlat {

class World;

inline constexpr std::size_t kFeatureCount = 4;
using Features = std::array<double, kFeatureCount>;

// f1 prompt cosine, f2 mean prefix cosine, f3 previous-sample cosine,
// f4 max prefix cosine. Prefix terms are 0 for an empty prefix.
Features featurize(std::span<const double> sample, const Condition& condition,
                   std::span<const std::span<const double>> prior_samples);

struct ScoreModel {
  static const std::vector<std::string>& canonical_features();

  std::vector<std::string> feature_spec = canonical_features();
  Features weights{};
  double bias = 0.0;

  static ScoreModel default_model();
  // phi = f1: pure prompt similarity.
  static ScoreModel prompt_only();

  void validate() const;
  static ScoreModel from_json(const nlohmann::json& j);
  static ScoreModel load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

double score_phi(const Features& features, const ScoreModel& model);
double score_phi(std::span<const double> sample, const Condition& condition,
                 std::span<const std::span<const double>> prior_samples, const ScoreModel& model);

struct ScoreTable {
  int step_index = 0;
  std::vector<double> phi;
  std::vector<double> log_softmax;
};

ScoreTable log_softmax_step(std::span<const double> phis, int step_index = 0);

struct CorpusStep {
  Condition condition;
  std::vector<double> sample;
};
using CorpusSequence = std::vector<CorpusStep>;
using Corpus = std::vector<CorpusSequence>;

// [[{"token": "...", "sample": [...]}, ...], ...]; tokens resolved in `world`.
Corpus corpus_from_json(const nlohmann::json& j, const World& world);
Corpus load_corpus(const std::filesystem::path& path, const World& world);

struct Negative {
  std::size_t sequence = 0;
  std::size_t step = 0;
  std::vector<double> sample;
};

// `count` samples taken at step `step` (or the nearest existing step) of
// distinct sequences other than `target`, sampled without replacement.
std::vector<Negative> make_negatives(const Corpus& corpus, std::size_t target, std::size_t step,
                                     std::size_t count, Seed seed);

// Candidate features for one training step; index 0 is the positive.
struct ClassifierExample {
  std::vector<Features> candidates;
};

std::vector<ClassifierExample> build_classifier_examples(const Corpus& corpus,
                                                         std::size_t negatives_per_step, Seed seed);

// Mean cross-entropy of the positives; gradient over (weights..., bias) when
// `grad` has kFeatureCount + 1 entries.
double classifier_loss(const ScoreModel& model, std::span<const ClassifierExample> examples,
                       std::span<double> grad = {});

struct ClassifierTrainOptions {
  std::size_t negatives_per_step = 3;
  int epochs = 200;
  double learning_rate = 0.5;
  Seed seed = 0;
};

struct TrainedClassifier {
  ScoreModel model;
  std::vector<double> epoch_losses;
};

// Full-batch gradient descent from zero weights.
TrainedClassifier train_classifier(const Corpus& corpus, const ClassifierTrainOptions& options);

}  // namespace beamlat
