#include "beamlat/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "beamlat/error.hpp"
#include "beamlat/kernels.hpp"
#include "beamlat/world.hpp"

namespace beamlat {

using nlohmann::json;

Features featurize(std::span<const double> sample, const Condition& condition,
                   std::span<const std::span<const double>> prior_samples) {
  if (sample.size() != condition.embedding.size())
    throw Error(ErrorKind::dimension_mismatch, "sample and condition embedding lengths differ");
  Features f{};
  f[0] = kernels::cosine(sample, condition.embedding);
  if (prior_samples.empty()) return f;
  double sum = 0.0;
  double best = -1.0;
  for (const auto& prior : prior_samples) {
    if (prior.size() != sample.size())
      throw Error(ErrorKind::dimension_mismatch, "context sample has the wrong length");
    const double c = kernels::cosine(sample, prior);
    sum += c;
    best = std::max(best, c);
  }
  f[1] = sum / static_cast<double>(prior_samples.size());
  f[2] = kernels::cosine(sample, prior_samples.back());
  f[3] = best;
  return f;
}

const std::vector<std::string>& ScoreModel::canonical_features() {
  static const std::vector<std::string> names{"prompt_cosine", "context_mean_cosine",
                                              "previous_cosine", "context_max_cosine"};
  return names;
}

ScoreModel ScoreModel::default_model() {
  ScoreModel m;
  m.weights = {4.0, 2.0, 1.0, 1.0};
  return m;
}

ScoreModel ScoreModel::prompt_only() {
  ScoreModel m;
  m.weights = {1.0, 0.0, 0.0, 0.0};
  return m;
}

void ScoreModel::validate() const {
  if (feature_spec != canonical_features())
    throw Error(ErrorKind::dimension_mismatch, "score model feature spec does not match featurize()");
  for (double w : weights)
    if (!std::isfinite(w)) throw Error(ErrorKind::invalid_range, "score model weight is not finite");
  if (!std::isfinite(bias)) throw Error(ErrorKind::invalid_range, "score model bias is not finite");
}

ScoreModel ScoreModel::from_json(const json& j) {
  ScoreModel m;
  m.feature_spec = j.at("feature_spec").get<std::vector<std::string>>();
  const auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() != kFeatureCount)
    throw Error(ErrorKind::dimension_mismatch, "score model needs 4 weights");
  std::copy(w.begin(), w.end(), m.weights.begin());
  m.bias = j.at("bias").get<double>();
  m.validate();
  return m;
}

ScoreModel ScoreModel::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open score model " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, "malformed score model " + path.string() + ": " + e.what());
  }
}

json ScoreModel::to_json() const {
  return {{"feature_spec", feature_spec},
          {"weights", std::vector<double>(weights.begin(), weights.end())},
          {"bias", bias}};
}

double score_phi(const Features& features, const ScoreModel& model) {
  double out = model.bias;
  for (std::size_t i = 0; i < kFeatureCount; ++i) out += model.weights[i] * features[i];
  return out;
}

double score_phi(std::span<const double> sample, const Condition& condition,
                 std::span<const std::span<const double>> prior_samples, const ScoreModel& model) {
  return score_phi(featurize(sample, condition, prior_samples), model);
}

ScoreTable log_softmax_step(std::span<const double> phis, int step_index) {
  if (phis.empty()) throw Error(ErrorKind::empty_candidates, "no candidates to normalize");
  for (double p : phis)
    if (!std::isfinite(p)) throw Error(ErrorKind::invalid_range, "non-finite candidate score");
  ScoreTable table;
  table.step_index = step_index;
  table.phi.assign(phis.begin(), phis.end());
  const double peak = *std::max_element(phis.begin(), phis.end());
  double total = 0.0;
  for (double p : phis) total += std::exp(p - peak);
  const double log_norm = peak + std::log(total);
  table.log_softmax.reserve(phis.size());
  for (double p : phis) table.log_softmax.push_back(p - log_norm);
  return table;
}

Corpus corpus_from_json(const json& j, const World& world) {
  Corpus corpus;
  for (const auto& seq : j) {
    CorpusSequence out;
    for (const auto& step : seq) {
      CorpusStep s{world.condition(step.at("token").get<std::string>()),
                   step.at("sample").get<std::vector<double>>()};
      if (s.sample.size() != world.dim())
        throw Error(ErrorKind::dimension_mismatch, "corpus sample has the wrong length");
      out.push_back(std::move(s));
    }
    corpus.push_back(std::move(out));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const World& world) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open corpus " + path.string());
  try {
    return corpus_from_json(json::parse(in), world);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, "malformed corpus " + path.string() + ": " + e.what());
  }
}

std::vector<Negative> make_negatives(const Corpus& corpus, std::size_t target, std::size_t step,
                                     std::size_t count, Seed seed) {
  if (corpus.size() < 2) throw Error(ErrorKind::insufficient_corpus, "need at least 2 sequences");
  if (target >= corpus.size()) throw Error(ErrorKind::invalid_range, "target sequence out of range");
  std::vector<std::size_t> donors;
  for (std::size_t s = 0; s < corpus.size(); ++s)
    if (s != target && !corpus[s].empty()) donors.push_back(s);
  if (count > donors.size())
    throw Error(ErrorKind::insufficient_corpus,
                "asked for " + std::to_string(count) + " negatives from " +
                    std::to_string(donors.size()) + " other sequences");

  Rng rng(derive_seed(seed, {0x4e4547ULL, target, step}));
  // Partial Fisher-Yates: first `count` entries become the sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, donors.size() - 1);
    std::swap(donors[i], donors[pick(rng)]);
  }
  std::vector<Negative> out;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& seq = corpus[donors[i]];
    const std::size_t at = std::min(step, seq.size() - 1);
    out.push_back(Negative{donors[i], at, seq[at].sample});
  }
  return out;
}

std::vector<ClassifierExample> build_classifier_examples(const Corpus& corpus,
                                                         std::size_t negatives_per_step, Seed seed) {
  if (negatives_per_step < 1)
    throw Error(ErrorKind::invalid_range, "each training step needs at least one negative");
  std::vector<ClassifierExample> examples;
  std::vector<std::span<const double>> prefix;
  for (std::size_t t = 0; t < corpus.size(); ++t) {
    prefix.clear();
    for (std::size_t l = 0; l < corpus[t].size(); ++l) {
      const auto& step = corpus[t][l];
      ClassifierExample ex;
      ex.candidates.push_back(featurize(step.sample, step.condition, prefix));
      for (const auto& neg : make_negatives(corpus, t, l, negatives_per_step, seed))
        ex.candidates.push_back(featurize(neg.sample, step.condition, prefix));
      examples.push_back(std::move(ex));
      prefix.emplace_back(step.sample);
    }
  }
  return examples;
}

double classifier_loss(const ScoreModel& model, std::span<const ClassifierExample> examples,
                       std::span<double> grad) {
  const bool want_grad = !grad.empty();
  if (want_grad) {
    if (grad.size() != kFeatureCount + 1)
      throw Error(ErrorKind::dimension_mismatch, "classifier gradient needs 5 entries");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  if (examples.empty()) return 0.0;
  const double scale = 1.0 / static_cast<double>(examples.size());
  std::vector<double> phis;
  double total = 0.0;
  for (const auto& ex : examples) {
    phis.clear();
    for (const auto& f : ex.candidates) phis.push_back(score_phi(f, model));
    const ScoreTable table = log_softmax_step(phis);
    total -= table.log_softmax[0];
    if (!want_grad) continue;
    for (std::size_t k = 0; k < ex.candidates.size(); ++k) {
      const double coeff = (std::exp(table.log_softmax[k]) - (k == 0 ? 1.0 : 0.0)) * scale;
      for (std::size_t i = 0; i < kFeatureCount; ++i) grad[i] += coeff * ex.candidates[k][i];
      grad[kFeatureCount] += coeff;
    }
  }
  return total * scale;
}

TrainedClassifier train_classifier(const Corpus& corpus, const ClassifierTrainOptions& options) {
  if (options.epochs < 0) throw Error(ErrorKind::invalid_range, "epochs must be >= 0");
  if (!(options.learning_rate > 0.0) || !std::isfinite(options.learning_rate))
    throw Error(ErrorKind::invalid_range, "learning rate must be finite and > 0");
  const auto examples = build_classifier_examples(corpus, options.negatives_per_step, options.seed);
  TrainedClassifier result;
  std::array<double, kFeatureCount + 1> grad{};
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const double loss = classifier_loss(result.model, examples, grad);
    if (!std::isfinite(loss))
      throw Error(ErrorKind::divergence, "classifier loss became non-finite at epoch " +
                                             std::to_string(epoch));
    result.epoch_losses.push_back(loss);
    for (std::size_t i = 0; i < kFeatureCount; ++i)
      result.model.weights[i] -= options.learning_rate * grad[i];
    result.model.bias -= options.learning_rate * grad[kFeatureCount];
    const bool finite = std::isfinite(result.model.bias) &&
                        std::all_of(result.model.weights.begin(), result.model.weights.end(),
                                    [](double w) { return std::isfinite(w); });
    if (!finite)
      throw Error(ErrorKind::divergence, "classifier weights became non-finite at epoch " +
                                             std::to_string(epoch));
  }
  return result;
}

}  // namespace beamlat
