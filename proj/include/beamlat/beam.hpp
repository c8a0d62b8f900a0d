#pragma once

// Beam search over sequences of denoising runs.
//
// Step 1 runs r fresh seeds. Every later step extends each live beam with one
// candidate per entry of that beam's latent pool (reused early latents from
// its last m steps plus fresh seeds). A candidate's step score is the
// log-softmax of its phi among its parent's candidates; a beam's score is the
// running sum. From step prune_start on, only the w best beams survive.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "beamlat/beam_id.hpp"
#include "beamlat/diffusion.hpp"
#include "beamlat/latent_store.hpp"
#include "beamlat/scorer.hpp"

namespace beamlat {

class World;

struct SequenceStep {
  std::string text;
  std::string token;
  Condition condition;
};

struct SequenceSpec {
  std::string id;
  std::string goal_text;
  std::vector<double> goal_embedding;
  std::vector<SequenceStep> steps;

  std::size_t length() const noexcept { return steps.size(); }

  // {"id", "goal", "goal_token"?, "steps": [{"text", "token"}]}. Without a
  // goal token the goal embedding is the normalized mean of the step tokens.
  static SequenceSpec from_json(const nlohmann::json& j, const World& world);
  nlohmann::json to_json() const;
};

// Step j >= 2 embedding becomes normalize((1 - blend) e(s_j) + blend mean(e(s_1..j-1))).
// blend = 0 returns the spec untouched.
SequenceSpec contextualize_prompts(const SequenceSpec& spec, double blend);

struct BeamConfig {
  int w = 4;
  int m = 2;
  int r = 4;
  std::vector<int> latent_indices{0, 1, 2, 3};
  int prune_start = 3;
  int n_random_mid = 1;
  Seed master_seed = 0;
  // Normalize each step over every candidate of the step (scored under the
  // parent's context) instead of only the parent's own candidates.
  bool global_normalization = false;

  void validate() const;
  // Stored latents needed per run: max(latent_indices) + 1.
  int n_store() const;
  static BeamConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct Backend {
  std::shared_ptr<const Denoiser> denoiser;
  NoiseSchedule schedule;
  // Candidate runs of one step are spread over this many threads; results do
  // not depend on it.
  int workers = 1;

  TrajectoryRecord generate(const Condition& condition, const DenoiseStart& start,
                            int n_store) const {
    return run_denoise(condition, start, schedule, *denoiser, n_store);
  }
};

Backend make_backend(const World& world, int workers = 1);

Seed initial_seed(Seed master, int k) noexcept;

struct BeamEntry {
  std::vector<double> sample;
  LatentRef source;
  double phi = 0.0;
  double step_score = 0.0;
};

struct Beam {
  BeamId id;
  std::vector<BeamEntry> entries;
  double cumulative_score = 0.0;
  LatentCache cache;

  std::vector<std::span<const double>> prefix() const;
  std::vector<std::vector<double>> samples() const;
  std::vector<LatentRef> path() const;
};

struct CandidateLog {
  std::string beam_id;
  std::string parent_id;
  LatentRef latent_ref;
  double phi = 0.0;
  double log_softmax = 0.0;
  double cumulative = 0.0;
};

struct StepLog {
  int step = 1;
  long denoiser_calls = 0;
  std::vector<CandidateLog> candidates;
  std::vector<std::string> retained;
};

struct RunLog {
  std::string method = "beam";
  std::string sequence_id;
  nlohmann::json config;
  std::vector<StepLog> steps;
  std::vector<LatentRef> chosen_path;
  std::string best_beam;
  double best_score = 0.0;
  std::vector<std::vector<double>> best_samples;

  long denoiser_calls() const;
  nlohmann::json to_json() const;
  static RunLog from_json(const nlohmann::json& j);
};

nlohmann::json to_json(const LatentRef& ref);
LatentRef latent_ref_from_json(const nlohmann::json& j);

struct Expansion {
  std::vector<Beam> candidates;
  StepLog log;
};

Expansion init_beams(const SequenceSpec& spec, const BeamConfig& config, const Backend& backend,
                     const ScoreModel& model);

Expansion expand_step(const std::vector<Beam>& beams, int j, const SequenceSpec& spec,
                      const BeamConfig& config, const Backend& backend, const ScoreModel& model);

// Sorted by score desc then id asc; truncated to w when j >= prune_start.
std::vector<Beam> prune(std::vector<Beam> candidates, int j, const BeamConfig& config);

struct DecodeResult {
  Beam best;
  RunLog log;
};

DecodeResult decode_sequence(const SequenceSpec& spec, const BeamConfig& config,
                             const Backend& backend, const ScoreModel& model);

struct OracleResult {
  BeamId best_id;
  std::vector<LatentRef> path;
  double score = 0.0;
  std::vector<std::vector<double>> samples;
  long leaves = 0;
};

// Number of complete sequences in the unpruned expansion tree.
long expansion_tree_leaves(const BeamConfig& config, int length);

// Brute-force argmax of the beam score over the unpruned tree.
OracleResult exhaustive_oracle(const SequenceSpec& spec, const BeamConfig& config,
                               const Backend& backend, const ScoreModel& model,
                               long max_leaves = 10000);

// Provenance records for the steps 2..L of a finished beam.
std::vector<ChoiceRecord> choice_records(const std::vector<LatentRef>& path, int steps_back,
                                         const std::vector<int>& latent_indices, int n_random);

}  // namespace beamlat
