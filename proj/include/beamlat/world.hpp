#pragma once

// The toy generative world: a prompt vocabulary where each token carries an
// embedding (the text-encoder stand-in) and a Gaussian mixture over samples.
//
// File format:
//   {"d": 16, "T": 100, "beta_start": 1e-3, "beta_end": 0.2,
//    "vocabulary": [{"token": "a", "text": "...", "embedding": [...],
//                    "mixture": [{"weight": 1, "mean": [...], "var": [...]}]}]}
// beta_start/beta_end/text are optional.

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "beamlat/diffusion.hpp"

namespace beamlat {

struct VocabularyEntry {
  Condition condition;
  MixtureModel mixture;
};

class World {
 public:
  // Linear beta range rescaled for T = 100 so that alpha_bar_T is close to 0.
  static constexpr double default_beta_start = 1e-3;
  static constexpr double default_beta_end = 0.2;

  World(std::size_t dim, int steps, std::vector<VocabularyEntry> vocabulary,
        double beta_start = default_beta_start, double beta_end = default_beta_end);

  static World from_json(const nlohmann::json& j);
  static World load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  std::size_t dim() const noexcept { return dim_; }
  int steps() const noexcept { return steps_; }
  double beta_start() const noexcept { return beta_start_; }
  double beta_end() const noexcept { return beta_end_; }
  const std::vector<VocabularyEntry>& vocabulary() const noexcept { return vocabulary_; }

  bool has_token(const std::string& token) const;
  const VocabularyEntry& entry(const std::string& token) const;
  const Condition& condition(const std::string& token) const { return entry(token).condition; }

  NoiseSchedule schedule() const;
  std::shared_ptr<const Denoiser> exact_denoiser() const;

 private:
  std::size_t dim_;
  int steps_;
  double beta_start_;
  double beta_end_;
  std::vector<VocabularyEntry> vocabulary_;
};

// Vocabulary of `tokens` unit embeddings in `dim` dimensions, each token a
// `components`-way mixture around points near its embedding. Used by tests and
// the demo configs.
World make_synthetic_world(std::size_t dim, std::size_t tokens, std::size_t components, Seed seed,
                           int steps = 100, double spread = 2.0, double var = 0.05);

}  // namespace beamlat
