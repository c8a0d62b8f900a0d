#pragma once

// Experiment runner: decodes every (sequence, method) job, then writes run
// logs, metrics, win table, provenance, complexity audit, renders and a
// manifest into one run directory. Reruns with the same seed reproduce every
// JSON and CSV byte for byte.
//
// Config file:
//   {"world": "world.json" | {...world...} | {"synthetic": {"d", "tokens", "components", "seed", "T"?}},
//    "sequences": [ {...sequence...} ] | "sequences.json",
//    "methods": [{"id", "method": "beam" | "greedy" | "nucleus",
//                 "config": {...beam config...}, "p"?, "scorer"?: "default" | "prompt_only" | path | {...}}],
//    "output": "runs/demo", "master_seed": 7, "render": "heatmap" | "scatter" | "none",
//    "contextualize": 0.0, "workers": 1}
// Relative paths resolve against the config file's directory. BEAMLAT_SEED,
// when set, replaces master_seed.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "beamlat/beam.hpp"
#include "beamlat/metrics.hpp"
#include "beamlat/render.hpp"
#include "beamlat/world.hpp"

namespace beamlat {

struct MethodSpec {
  std::string id;
  std::string method = "beam";
  BeamConfig config;
  double p = 0.9;
  ScoreModel scorer = ScoreModel::default_model();

  nlohmann::json to_json() const;
};

struct ExperimentConfig {
  World world{1, 1, {}};
  std::vector<SequenceSpec> sequences;
  std::vector<MethodSpec> methods;
  std::filesystem::path output_dir = "runs";
  Seed master_seed = 0;
  std::optional<RenderMode> render;
  double contextualize = 0.0;
  int workers = 1;
  ClipThresholds thresholds;

  static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
  static ExperimentConfig load(const std::filesystem::path& path);
};

// BEAMLAT_SEED when set and numeric, else `fallback`.
Seed seed_from_env(Seed fallback);

// Filename-safe ids only: [A-Za-z0-9_.-], not starting with '.'.
bool safe_id(const std::string& id);

DecodeResult run_method(const MethodSpec& method, const SequenceSpec& spec, const Backend& backend);

std::string job_name(const std::string& method, const std::string& sequence_id);
std::string asset_name(const std::string& method, const std::string& sequence_id, int step);

struct ExperimentResult {
  std::filesystem::path dir;
  nlohmann::json manifest;
  std::vector<MetricsReport> reports;
  long failed_jobs = 0;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// Total logged denoiser runs per method id, from a manifest.
std::vector<std::pair<std::string, long>> method_costs(const nlohmann::json& manifest);

// Recomputes metrics / audits for an existing run directory from its saved
// world, sequences and run logs.
std::vector<MetricsReport> recompute_metrics(const std::filesystem::path& run_dir);
std::vector<AuditReport> audit_run_dir(const std::filesystem::path& run_dir);

nlohmann::json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

struct AblationRow {
  std::string label;
  int m = 1;
  long denoiser_calls = 0;
  double best_score = 0.0;
  MetricsReport metrics;
};

struct AblationReport {
  std::string sequence_id;
  std::vector<AblationRow> rows;

  const AblationRow* find(const std::string& label) const;
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Runs the beam engine once per steps-back value; 0 stands for "all prior
// steps" (m = L - 1).
AblationReport latent_history_ablation(const World& world, const SequenceSpec& spec, const BeamConfig& base,
                                       const std::vector<int>& steps_back, const ScoreModel& model,
                                       int workers = 1);

}  // namespace beamlat
