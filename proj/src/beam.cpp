#include "beamlat/beam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "beamlat/error.hpp"
#include "beamlat/kernels.hpp"
#include "beamlat/world.hpp"
#include "parallel.hpp"

namespace beamlat {

using nlohmann::json;

namespace {

std::vector<double> normalized(std::vector<double> v) {
  const double n = kernels::norm(v);
  if (n > 0.0)
    for (double& x : v) x /= n;
  return v;
}

}  // namespace

SequenceSpec SequenceSpec::from_json(const json& j, const World& world) {
  SequenceSpec spec;
  spec.id = j.value("id", std::string("seq"));
  spec.goal_text = j.value("goal", std::string());
  for (const auto& s : j.at("steps")) {
    SequenceStep step;
    step.token = s.at("token").get<std::string>();
    step.condition = world.condition(step.token);
    step.text = s.value("text", step.condition.text);
    step.condition.text = step.text;
    spec.steps.push_back(std::move(step));
  }
  if (spec.steps.empty()) throw Error(ErrorKind::invalid_range, "sequence '" + spec.id + "' has no steps");
  if (j.contains("goal_token")) {
    spec.goal_embedding = normalized(world.condition(j.at("goal_token").get<std::string>()).embedding);
  } else {
    std::vector<double> mean(world.dim(), 0.0);
    for (const auto& s : spec.steps) kernels::axpy(1.0, s.condition.embedding, mean);
    spec.goal_embedding = normalized(std::move(mean));
  }
  return spec;
}

json SequenceSpec::to_json() const {
  json steps_json = json::array();
  for (const auto& s : steps) steps_json.push_back({{"text", s.text}, {"token", s.token}});
  return {{"id", id}, {"goal", goal_text}, {"steps", std::move(steps_json)}};
}

SequenceSpec contextualize_prompts(const SequenceSpec& spec, double blend) {
  if (!(blend >= 0.0 && blend <= 1.0))
    throw Error(ErrorKind::invalid_range, "blend must lie in [0, 1]");
  SequenceSpec out = spec;
  if (blend == 0.0) return out;
  const std::size_t d = spec.steps.front().condition.embedding.size();
  std::vector<double> running(d, 0.0);
  for (std::size_t j = 0; j < spec.steps.size(); ++j) {
    const auto& own = spec.steps[j].condition.embedding;
    if (j > 0) {
      std::vector<double> mixed(d);
      const double inv = 1.0 / static_cast<double>(j);
      for (std::size_t i = 0; i < d; ++i) mixed[i] = (1.0 - blend) * own[i] + blend * running[i] * inv;
      out.steps[j].condition.embedding = normalized(std::move(mixed));
    }
    kernels::axpy(1.0, own, running);
  }
  return out;
}

void BeamConfig::validate() const {
  if (w < 1 || m < 1 || r < 1) throw Error(ErrorKind::invalid_range, "w, m and r must be >= 1");
  if (prune_start < 2) throw Error(ErrorKind::invalid_range, "prune_start must be >= 2");
  if (n_random_mid < 0) throw Error(ErrorKind::invalid_range, "n_random_mid must be >= 0");
  if (latent_indices.empty()) throw Error(ErrorKind::invalid_range, "latent index set is empty");
  std::set<int> seen;
  for (int i : latent_indices)
    if (i < 0 || !seen.insert(i).second)
      throw Error(ErrorKind::invalid_range, "latent indices must be distinct and >= 0");
}

int BeamConfig::n_store() const {
  return latent_indices.empty() ? 0 : *std::max_element(latent_indices.begin(), latent_indices.end()) + 1;
}

BeamConfig BeamConfig::from_json(const json& j) {
  BeamConfig c;
  c.w = j.value("w", c.w);
  c.m = j.value("m", c.m);
  c.r = j.value("r", c.r);
  c.latent_indices = j.value("latent_indices", c.latent_indices);
  c.prune_start = j.value("prune_start", c.prune_start);
  c.n_random_mid = j.value("n_random_mid", c.n_random_mid);
  c.master_seed = j.value("master_seed", c.master_seed);
  c.global_normalization = j.value("global_normalization", c.global_normalization);
  c.validate();
  return c;
}

json BeamConfig::to_json() const {
  return {{"w", w},
          {"m", m},
          {"r", r},
          {"latent_indices", latent_indices},
          {"prune_start", prune_start},
          {"n_random_mid", n_random_mid},
          {"master_seed", master_seed},
          {"global_normalization", global_normalization}};
}

Backend make_backend(const World& world, int workers) {
  return Backend{world.exact_denoiser(), world.schedule(), workers};
}

Seed initial_seed(Seed master, int k) noexcept {
  return derive_seed(master, {1, static_cast<std::uint64_t>(k)});
}

std::vector<std::span<const double>> Beam::prefix() const {
  std::vector<std::span<const double>> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.emplace_back(e.sample);
  return out;
}

std::vector<std::vector<double>> Beam::samples() const {
  std::vector<std::vector<double>> out;
  for (const auto& e : entries) out.push_back(e.sample);
  return out;
}

std::vector<LatentRef> Beam::path() const {
  std::vector<LatentRef> out;
  for (const auto& e : entries) out.push_back(e.source);
  return out;
}

json to_json(const LatentRef& ref) {
  json latent = ref.is_random() ? json("random") : json(ref.latent_index);
  return {{"step", ref.step_index}, {"beam", ref.beam_id}, {"latent", latent}, {"seed", ref.donor_seed}};
}

LatentRef latent_ref_from_json(const json& j) {
  LatentRef ref;
  ref.step_index = j.at("step").get<int>();
  ref.beam_id = j.at("beam").get<std::string>();
  const auto& latent = j.at("latent");
  ref.latent_index = latent.is_string() ? kRandomSeed : latent.get<int>();
  ref.donor_seed = j.at("seed").get<Seed>();
  return ref;
}

long RunLog::denoiser_calls() const {
  long total = 0;
  for (const auto& s : steps) total += s.denoiser_calls;
  return total;
}

json RunLog::to_json() const {
  json per_step = json::array();
  for (const auto& s : steps) {
    json candidates = json::array();
    for (const auto& c : s.candidates) {
      candidates.push_back({{"beam_id", c.beam_id},
                            {"parent_id", c.parent_id},
                            {"latent_ref", beamlat::to_json(c.latent_ref)},
                            {"phi", c.phi},
                            {"log_softmax", c.log_softmax},
                            {"cumulative", c.cumulative}});
    }
    per_step.push_back({{"step", s.step},
                        {"denoiser_calls", s.denoiser_calls},
                        {"candidates", std::move(candidates)},
                        {"retained", s.retained}});
  }
  json path = json::array();
  for (const auto& ref : chosen_path) path.push_back(beamlat::to_json(ref));
  return {{"method", method},
          {"sequence_id", sequence_id},
          {"config", config},
          {"per_step", std::move(per_step)},
          {"denoiser_calls", denoiser_calls()},
          {"chosen_path", std::move(path)},
          {"best", {{"beam_id", best_beam}, {"score", best_score}, {"samples", best_samples}}}};
}

RunLog RunLog::from_json(const json& j) {
  try {
    RunLog log;
    log.method = j.at("method").get<std::string>();
    log.sequence_id = j.value("sequence_id", std::string());
    log.config = j.at("config");
    for (const auto& s : j.at("per_step")) {
      StepLog step;
      step.step = s.at("step").get<int>();
      step.denoiser_calls = s.at("denoiser_calls").get<long>();
      for (const auto& c : s.at("candidates")) {
        step.candidates.push_back(CandidateLog{c.at("beam_id").get<std::string>(),
                                               c.at("parent_id").get<std::string>(),
                                               latent_ref_from_json(c.at("latent_ref")),
                                               c.at("phi").get<double>(),
                                               c.at("log_softmax").get<double>(),
                                               c.at("cumulative").get<double>()});
      }
      step.retained = s.at("retained").get<std::vector<std::string>>();
      log.steps.push_back(std::move(step));
    }
    for (const auto& ref : j.at("chosen_path")) log.chosen_path.push_back(latent_ref_from_json(ref));
    const auto& best = j.at("best");
    log.best_beam = best.at("beam_id").get<std::string>();
    log.best_score = best.at("score").get<double>();
    log.best_samples = best.at("samples").get<std::vector<std::vector<double>>>();
    return log;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::malformed_log, e.what());
  }
}

Expansion init_beams(const SequenceSpec& spec, const BeamConfig& config, const Backend& backend,
                     const ScoreModel& model) {
  config.validate();
  if (spec.steps.empty()) throw Error(ErrorKind::invalid_range, "sequence has no steps");
  const Condition& cond = spec.steps.front().condition;
  const int n_store = config.n_store();
  std::vector<TrajectoryRecord> records(static_cast<std::size_t>(config.r));
  detail::parallel_for(records.size(), backend.workers, [&](std::size_t k) {
    records[k] = backend.generate(cond, FreshNoise{initial_seed(config.master_seed, static_cast<int>(k))},
                                  n_store);
  });

  std::vector<double> phis;
  for (const auto& rec : records) phis.push_back(score_phi(rec.final_sample, cond, {}, model));
  const ScoreTable table = log_softmax_step(phis, 1);

  Expansion out;
  out.log.step = 1;
  out.log.denoiser_calls = config.r;
  for (std::size_t k = 0; k < records.size(); ++k) {
    Beam beam{BeamId{{static_cast<int>(k)}}, {}, 0.0, LatentCache(config.m)};
    const LatentRef source{1, beam.id.to_string(), kRandomSeed, records[k].seed};
    beam.entries.push_back(BeamEntry{records[k].final_sample, source, phis[k], table.log_softmax[k]});
    beam.cumulative_score = table.log_softmax[k];
    beam.cache.record_trajectory(beam.id, 1, records[k], config.latent_indices);
    out.log.candidates.push_back(
        CandidateLog{beam.id.to_string(), "", source, phis[k], table.log_softmax[k], beam.cumulative_score});
    out.candidates.push_back(std::move(beam));
  }
  return out;
}

Expansion expand_step(const std::vector<Beam>& beams, int j, const SequenceSpec& spec,
                      const BeamConfig& config, const Backend& backend, const ScoreModel& model) {
  if (j < 2 || j > static_cast<int>(spec.steps.size()))
    throw Error(ErrorKind::invalid_range, "expand_step needs 2 <= j <= L");
  const Condition& cond = spec.steps[static_cast<std::size_t>(j - 1)].condition;
  const int n_store = config.n_store();

  std::vector<LatentPool> pools;
  struct Job {
    std::size_t parent;
    std::size_t entry;
  };
  std::vector<Job> jobs;
  for (std::size_t b = 0; b < beams.size(); ++b) {
    if (beams[b].entries.size() != static_cast<std::size_t>(j - 1))
      throw Error(ErrorKind::invalid_range, "beam " + beams[b].id.to_string() + " is not at step " +
                                                std::to_string(j - 1));
    pools.push_back(gather_latent_pool(beams[b].cache, beams[b].id, j, config.m,
                                       config.latent_indices, config.n_random_mid,
                                       config.master_seed));
    if (pools.back().entries.empty())
      throw Error(ErrorKind::empty_candidates, "empty latent pool for " + beams[b].id.to_string());
    for (std::size_t e = 0; e < pools.back().entries.size(); ++e) jobs.push_back(Job{b, e});
  }

  std::vector<TrajectoryRecord> records(jobs.size());
  detail::parallel_for(jobs.size(), backend.workers, [&](std::size_t i) {
    records[i] = backend.generate(cond, pools[jobs[i].parent].entries[jobs[i].entry].start, n_store);
  });

  Expansion out;
  out.log.step = j;
  out.log.denoiser_calls = static_cast<long>(jobs.size());
  std::size_t first_job = 0;
  for (std::size_t b = 0; b < beams.size(); ++b) {
    const Beam& parent = beams[b];
    const auto prefix = parent.prefix();
    const std::size_t count = pools[b].entries.size();
    std::vector<double> phis(count);
    for (std::size_t e = 0; e < count; ++e)
      phis[e] = score_phi(records[first_job + e].final_sample, cond, prefix, model);

    std::vector<double> log_probs;
    if (config.global_normalization) {
      std::vector<double> all(records.size());
      for (std::size_t i = 0; i < records.size(); ++i)
        all[i] = score_phi(records[i].final_sample, cond, prefix, model);
      const ScoreTable table = log_softmax_step(all, j);
      log_probs.assign(table.log_softmax.begin() + static_cast<long>(first_job),
                       table.log_softmax.begin() + static_cast<long>(first_job + count));
    } else {
      log_probs = log_softmax_step(phis, j).log_softmax;
    }

    for (std::size_t e = 0; e < count; ++e) {
      const TrajectoryRecord& rec = records[first_job + e];
      Beam child = parent;
      child.id = parent.id.child(static_cast<int>(e));
      child.entries.push_back(BeamEntry{rec.final_sample, pools[b].entries[e].ref, phis[e], log_probs[e]});
      child.cumulative_score = parent.cumulative_score + log_probs[e];
      child.cache.record_trajectory(child.id, j, rec, config.latent_indices);
      out.log.candidates.push_back(CandidateLog{child.id.to_string(), parent.id.to_string(),
                                                pools[b].entries[e].ref, phis[e], log_probs[e],
                                                child.cumulative_score});
      out.candidates.push_back(std::move(child));
    }
    first_job += count;
  }
  return out;
}

std::vector<Beam> prune(std::vector<Beam> candidates, int j, const BeamConfig& config) {
  std::stable_sort(candidates.begin(), candidates.end(), [](const Beam& a, const Beam& b) {
    if (a.cumulative_score != b.cumulative_score) return a.cumulative_score > b.cumulative_score;
    return a.id < b.id;
  });
  if (j >= config.prune_start && candidates.size() > static_cast<std::size_t>(config.w))
    candidates.resize(static_cast<std::size_t>(config.w));
  return candidates;
}

DecodeResult decode_sequence(const SequenceSpec& spec, const BeamConfig& config,
                             const Backend& backend, const ScoreModel& model) {
  model.validate();
  RunLog log;
  log.method = "beam";
  log.sequence_id = spec.id;
  log.config = config.to_json();

  auto record_step = [&](Expansion& exp, const std::vector<Beam>& kept) {
    for (const auto& b : kept) exp.log.retained.push_back(b.id.to_string());
    log.steps.push_back(std::move(exp.log));
  };

  Expansion exp = init_beams(spec, config, backend, model);
  std::vector<Beam> beams = prune(std::move(exp.candidates), 1, config);
  record_step(exp, beams);
  for (int j = 2; j <= static_cast<int>(spec.steps.size()); ++j) {
    exp = expand_step(beams, j, spec, config, backend, model);
    beams = prune(std::move(exp.candidates), j, config);
    record_step(exp, beams);
  }

  DecodeResult result{std::move(beams.front()), std::move(log)};
  result.log.chosen_path = result.best.path();
  result.log.best_beam = result.best.id.to_string();
  result.log.best_score = result.best.cumulative_score;
  result.log.best_samples = result.best.samples();
  return result;
}

long expansion_tree_leaves(const BeamConfig& config, int length) {
  constexpr long cap = std::numeric_limits<long>::max() / 1024;
  long leaves = config.r;
  const long indices = static_cast<long>(config.latent_indices.size());
  for (int j = 2; j <= length; ++j) {
    const long pool = std::min(config.m, j - 1) * indices + config.n_random_mid;
    leaves = leaves > cap / std::max(1L, pool) ? cap : leaves * pool;
  }
  return leaves;
}

namespace {

// Oracle-side tree node: everything is rebuilt from the raw trajectory
// records, without LatentCache or gather_latent_pool.
struct OracleNode {
  BeamId id;
  std::vector<std::vector<double>> samples;
  std::vector<LatentRef> path;
  std::vector<double> step_scores;
  double score = 0.0;
  // step -> (seed, every stored latent of that step's run)
  std::map<int, std::pair<Seed, std::vector<LatentState>>> latents;
};

std::vector<double> oracle_log_softmax(const std::vector<double>& phis) {
  double peak = phis.front();
  for (double p : phis) peak = std::max(peak, p);
  double total = 0.0;
  for (double p : phis) total += std::exp(p - peak);
  const double log_norm = peak + std::log(total);
  std::vector<double> out;
  for (double p : phis) out.push_back(p - log_norm);
  return out;
}

}  // namespace

OracleResult exhaustive_oracle(const SequenceSpec& spec, const BeamConfig& config,
                               const Backend& backend, const ScoreModel& model, long max_leaves) {
  config.validate();
  const int L = static_cast<int>(spec.steps.size());
  const long leaves = expansion_tree_leaves(config, L);
  if (leaves > max_leaves)
    throw Error(ErrorKind::bound_exceeded, "expansion tree has " + std::to_string(leaves) +
                                               " leaves (bound " + std::to_string(max_leaves) + ")");
  const int n_store = config.n_store();
  std::vector<int> indices = config.latent_indices;
  std::sort(indices.begin(), indices.end());

  // Level 1.
  std::vector<OracleNode> level;
  {
    const Condition& cond = spec.steps[0].condition;
    std::vector<TrajectoryRecord> recs(static_cast<std::size_t>(config.r));
    detail::parallel_for(recs.size(), backend.workers, [&](std::size_t k) {
      recs[k] = backend.generate(cond, FreshNoise{initial_seed(config.master_seed, static_cast<int>(k))}, n_store);
    });
    std::vector<double> phis;
    for (const auto& rec : recs) phis.push_back(score_phi(featurize(rec.final_sample, cond, {}), model));
    const auto lp = oracle_log_softmax(phis);
    for (std::size_t k = 0; k < recs.size(); ++k) {
      OracleNode node;
      node.id = BeamId{{static_cast<int>(k)}};
      node.samples.push_back(recs[k].final_sample);
      node.path.push_back(LatentRef{1, node.id.to_string(), kRandomSeed, recs[k].seed});
      node.step_scores.push_back(lp[k]);
      node.score = lp[k];
      node.latents[1] = {recs[k].seed, recs[k].stored_latents};
      level.push_back(std::move(node));
    }
  }

  for (int j = 2; j <= L; ++j) {
    const Condition& cond = spec.steps[static_cast<std::size_t>(j - 1)].condition;
    struct Pending {
      std::size_t parent;
      LatentRef ref;
      DenoiseStart start;
    };
    std::vector<Pending> pending;
    std::vector<std::size_t> first_child(level.size() + 1, 0);
    for (std::size_t p = 0; p < level.size(); ++p) {
      first_child[p] = pending.size();
      const OracleNode& node = level[p];
      for (int donor = std::max(1, j - config.m); donor < j; ++donor) {
        const auto& [seed, stored] = node.latents.at(donor);
        const std::string donor_id = node.id.prefix(static_cast<std::size_t>(donor)).to_string();
        for (int idx : indices) {
          if (idx >= static_cast<int>(stored.size()))
            throw Error(ErrorKind::missing_latent, "oracle: latent " + std::to_string(idx) + " not stored");
          pending.push_back(Pending{p, LatentRef{donor, donor_id, idx, seed},
                                    DonorLatent{stored[static_cast<std::size_t>(idx)], seed}});
        }
      }
      for (int k = 0; k < config.n_random_mid; ++k) {
        const Seed seed = random_entry_seed(config.master_seed, j, node.id, k);
        pending.push_back(Pending{p, LatentRef{j, node.id.to_string(), kRandomSeed, seed}, FreshNoise{seed}});
      }
    }
    first_child[level.size()] = pending.size();

    std::vector<TrajectoryRecord> recs(pending.size());
    detail::parallel_for(recs.size(), backend.workers, [&](std::size_t i) {
      recs[i] = backend.generate(cond, pending[i].start, n_store);
    });

    std::vector<OracleNode> next;
    for (std::size_t p = 0; p < level.size(); ++p) {
      const OracleNode& node = level[p];
      std::vector<std::span<const double>> prefix(node.samples.begin(), node.samples.end());
      const std::size_t lo = first_child[p];
      const std::size_t hi = first_child[p + 1];
      std::vector<double> phis;
      for (std::size_t i = lo; i < hi; ++i)
        phis.push_back(score_phi(featurize(recs[i].final_sample, cond, prefix), model));
      std::vector<double> lp;
      if (config.global_normalization) {
        std::vector<double> all;
        for (const auto& rec : recs) all.push_back(score_phi(featurize(rec.final_sample, cond, prefix), model));
        const auto full = oracle_log_softmax(all);
        lp.assign(full.begin() + static_cast<long>(lo), full.begin() + static_cast<long>(hi));
      } else {
        lp = oracle_log_softmax(phis);
      }
      for (std::size_t i = lo; i < hi; ++i) {
        OracleNode child;
        child.id = node.id.child(static_cast<int>(i - lo));
        child.samples = node.samples;
        child.samples.push_back(recs[i].final_sample);
        child.path = node.path;
        child.path.push_back(pending[i].ref);
        child.step_scores = node.step_scores;
        child.step_scores.push_back(lp[i - lo]);
        child.score = node.score + lp[i - lo];
        for (const auto& [step, data] : node.latents)
          if (step > j - config.m) child.latents.emplace(step, data);
        child.latents[j] = {recs[i].seed, recs[i].stored_latents};
        next.push_back(std::move(child));
      }
    }
    level = std::move(next);
  }

  const OracleNode* best = nullptr;
  for (const auto& node : level) {
    if (!best || node.score > best->score || (node.score == best->score && node.id < best->id))
      best = &node;
  }
  return OracleResult{best->id, best->path, best->score, best->samples, static_cast<long>(level.size())};
}

std::vector<ChoiceRecord> choice_records(const std::vector<LatentRef>& path, int steps_back,
                                         const std::vector<int>& latent_indices, int n_random) {
  std::vector<ChoiceRecord> out;
  for (std::size_t j = 1; j < path.size(); ++j)
    out.push_back(ChoiceRecord{static_cast<int>(j) + 1, path[j], steps_back, latent_indices, n_random});
  return out;
}

}  // namespace beamlat
