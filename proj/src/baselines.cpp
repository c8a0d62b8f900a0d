#include "beamlat/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "beamlat/error.hpp"

namespace beamlat {

NucleusSet nucleus_set(std::span<const double> probabilities, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorKind::invalid_range, "nucleus p must lie in (0, 1]");
  if (probabilities.empty()) throw Error(ErrorKind::empty_candidates, "no candidates to sample from");
  std::vector<std::size_t> order(probabilities.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return probabilities[a] > probabilities[b]; });
  NucleusSet set;
  double mass = 0.0;
  for (std::size_t idx : order) {
    set.members.push_back(idx);
    mass += probabilities[idx];
    if (mass >= p) break;
  }
  for (std::size_t idx : set.members) set.probabilities.push_back(probabilities[idx] / mass);
  return set;
}

BeamConfig greedy_equivalent(const BeamConfig& config) {
  BeamConfig out = config;
  out.w = 1;
  out.m = 1;
  out.prune_start = 2;
  out.global_normalization = false;
  return out;
}

Seed nucleus_step_seed(Seed master, int j) noexcept {
  return derive_seed(master, {0x4e5543ULL, static_cast<std::uint64_t>(j)});
}

namespace {

using Chooser = std::function<std::size_t(const Expansion&, int)>;

DecodeResult decode_single_path(const SequenceSpec& spec, const BeamConfig& config,
                                const Backend& backend, const char* method, const Chooser& choose) {
  BeamConfig cfg = config;
  cfg.m = 1;
  cfg.w = 1;
  const ScoreModel model = ScoreModel::prompt_only();

  RunLog log;
  log.method = method;
  log.sequence_id = spec.id;
  log.config = cfg.to_json();

  std::vector<Beam> current;
  for (int j = 1; j <= static_cast<int>(spec.steps.size()); ++j) {
    Expansion exp = j == 1 ? init_beams(spec, cfg, backend, model)
                           : expand_step(current, j, spec, cfg, backend, model);
    const std::size_t pick = choose(exp, j);
    exp.log.retained = {exp.candidates[pick].id.to_string()};
    current = {std::move(exp.candidates[pick])};
    log.steps.push_back(std::move(exp.log));
  }

  DecodeResult result{std::move(current.front()), std::move(log)};
  result.log.chosen_path = result.best.path();
  result.log.best_beam = result.best.id.to_string();
  result.log.best_score = result.best.cumulative_score;
  result.log.best_samples = result.best.samples();
  return result;
}

}  // namespace

DecodeResult greedy_decode(const SequenceSpec& spec, const BeamConfig& config, const Backend& backend) {
  return decode_single_path(spec, config, backend, "greedy", [](const Expansion& exp, int) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < exp.candidates.size(); ++i)
      if (exp.candidates[i].entries.back().phi > exp.candidates[best].entries.back().phi) best = i;
    return best;
  });
}

DecodeResult nucleus_decode(const SequenceSpec& spec, const BeamConfig& config, double p,
                            const Backend& backend) {
  if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorKind::invalid_range, "nucleus p must lie in (0, 1]");
  DecodeResult result =
      decode_single_path(spec, config, backend, "nucleus", [&](const Expansion& exp, int j) {
        std::vector<double> probs;
        for (const auto& c : exp.candidates) probs.push_back(std::exp(c.entries.back().step_score));
        const NucleusSet set = nucleus_set(probs, p);
        Rng rng(nucleus_step_seed(config.master_seed, j));
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        double acc = 0.0;
        for (std::size_t i = 0; i < set.members.size(); ++i) {
          acc += set.probabilities[i];
          if (u < acc) return set.members[i];
        }
        return set.members.back();
      });
  result.log.config["p"] = p;
  return result;
}

}  // namespace beamlat
