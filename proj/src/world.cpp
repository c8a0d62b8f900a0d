#include "beamlat/world.hpp"

#include <cmath>
#include <fstream>
#include <map>

#include "beamlat/error.hpp"
#include "beamlat/kernels.hpp"

namespace beamlat {

using nlohmann::json;

World::World(std::size_t dim, int steps, std::vector<VocabularyEntry> vocabulary,
             double beta_start, double beta_end)
    : dim_(dim),
      steps_(steps),
      beta_start_(beta_start),
      beta_end_(beta_end),
      vocabulary_(std::move(vocabulary)) {
  if (dim_ == 0) throw Error(ErrorKind::invalid_range, "world dimension must be positive");
  NoiseSchedule::linear(steps_, beta_start_, beta_end_);
  std::map<std::string, int> seen;
  for (const auto& v : vocabulary_) {
    if (++seen[v.condition.token] > 1)
      throw Error(ErrorKind::invalid_range, "duplicate token '" + v.condition.token + "'");
    if (v.condition.embedding.size() != dim_)
      throw Error(ErrorKind::dimension_mismatch,
                  "embedding of '" + v.condition.token + "' has the wrong length");
    for (double e : v.condition.embedding)
      if (!std::isfinite(e))
        throw Error(ErrorKind::invalid_range, "embedding of '" + v.condition.token + "' is not finite");
    v.mixture.validate();
    if (v.mixture.dim() != dim_)
      throw Error(ErrorKind::dimension_mismatch,
                  "mixture of '" + v.condition.token + "' has the wrong dimension");
  }
}

World World::from_json(const json& j) {
  const auto dim = j.at("d").get<std::size_t>();
  const int steps = j.value("T", 100);
  std::vector<VocabularyEntry> vocab;
  for (const auto& v : j.at("vocabulary")) {
    VocabularyEntry entry;
    entry.condition.token = v.at("token").get<std::string>();
    entry.condition.embedding = v.at("embedding").get<std::vector<double>>();
    entry.condition.text = v.value("text", entry.condition.token);
    for (const auto& c : v.at("mixture")) {
      entry.mixture.components.push_back(MixtureComponent{c.at("weight").get<double>(),
                                                          c.at("mean").get<std::vector<double>>(),
                                                          c.at("var").get<std::vector<double>>()});
    }
    vocab.push_back(std::move(entry));
  }
  return World(dim, steps, std::move(vocab), j.value("beta_start", default_beta_start),
               j.value("beta_end", default_beta_end));
}

World World::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open world file " + path.string());
  try {
    return from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, "malformed world file " + path.string() + ": " + e.what());
  }
}

json World::to_json() const {
  json vocab = json::array();
  for (const auto& v : vocabulary_) {
    json mixture = json::array();
    for (const auto& c : v.mixture.components)
      mixture.push_back({{"weight", c.weight}, {"mean", c.mean}, {"var", c.var}});
    vocab.push_back({{"token", v.condition.token},
                     {"text", v.condition.text},
                     {"embedding", v.condition.embedding},
                     {"mixture", std::move(mixture)}});
  }
  return {{"d", dim_},
          {"T", steps_},
          {"beta_start", beta_start_},
          {"beta_end", beta_end_},
          {"vocabulary", std::move(vocab)}};
}

bool World::has_token(const std::string& token) const {
  for (const auto& v : vocabulary_)
    if (v.condition.token == token) return true;
  return false;
}

const VocabularyEntry& World::entry(const std::string& token) const {
  for (const auto& v : vocabulary_)
    if (v.condition.token == token) return v;
  throw Error(ErrorKind::invalid_range, "token '" + token + "' is not in the vocabulary");
}

NoiseSchedule World::schedule() const {
  return NoiseSchedule::linear(steps_, beta_start_, beta_end_);
}

std::shared_ptr<const Denoiser> World::exact_denoiser() const {
  std::map<std::string, MixtureModel> mixtures;
  for (const auto& v : vocabulary_) mixtures.emplace(v.condition.token, v.mixture);
  return std::make_shared<ExactMixtureDenoiser>(std::move(mixtures));
}

namespace {

std::vector<double> unit(std::vector<double> v) {
  const double n = kernels::norm(v);
  if (n > 0.0)
    for (double& x : v) x /= n;
  return v;
}

}  // namespace

World make_synthetic_world(std::size_t dim, std::size_t tokens, std::size_t components, Seed seed,
                           int steps, double spread, double var) {
  Rng rng(seed);
  std::uniform_real_distribution<double> weight_draw(0.5, 1.5);
  std::vector<VocabularyEntry> vocab;
  for (std::size_t t = 0; t < tokens; ++t) {
    VocabularyEntry entry;
    entry.condition.token = "t" + std::to_string(t);
    entry.condition.text = "step " + std::to_string(t);
    entry.condition.embedding = unit(gaussian_vector(rng, dim));
    double total = 0.0;
    for (std::size_t c = 0; c < components; ++c) {
      std::vector<double> dir = gaussian_vector(rng, dim);
      for (std::size_t i = 0; i < dim; ++i) dir[i] = entry.condition.embedding[i] + 0.6 * dir[i];
      dir = unit(std::move(dir));
      for (double& x : dir) x *= spread;
      const double w = weight_draw(rng);
      total += w;
      entry.mixture.components.push_back(MixtureComponent{w, dir, std::vector<double>(dim, var)});
    }
    for (auto& c : entry.mixture.components) c.weight /= total;
    // Absorb rounding so the weights sum to 1 as closely as doubles allow.
    double acc = 0.0;
    for (std::size_t c = 0; c + 1 < components; ++c) acc += entry.mixture.components[c].weight;
    entry.mixture.components.back().weight = 1.0 - acc;
    vocab.push_back(std::move(entry));
  }
  return World(dim, steps, std::move(vocab));
}

}  // namespace beamlat
