// Acceptance gate: one [PASS]/[FAIL] line per primary criterion.
//
//   acceptance [--strict]
//
// Exit status is 0 once every check has run; with --strict it is 1 if any
// check failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "beamlat/baselines.hpp"
#include "beamlat/experiment.hpp"
#include "beamlat/metrics.hpp"
#include "beamlat/mlp_denoiser.hpp"
#include "beamlat/tournament.hpp"
#include "beamlat/world.hpp"
#include "test_support.hpp"

#ifndef BEAMLAT_CLI_PATH
#define BEAMLAT_CLI_PATH "beamlat"
#endif

using namespace beamlat;
using beamlat::testing::random_spec;
using beamlat::testing::relative_error;
using beamlat::testing::slurp;
using beamlat::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* pattern, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, pattern, args...);
  return buf;
}

const World& small_world() {
  static const World world = make_synthetic_world(4, 3, 2, 21, 20);
  return world;
}

Outcome oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  const auto backend = make_backend(small_world());
  const auto model = ScoreModel::default_model();
  int agree = 0;
  const int instances = 60;
  for (int s = 0; s < instances; ++s) {
    Rng rng(derive_seed(0xACCE, {1, static_cast<std::uint64_t>(s)}));
    const int length = 1 + static_cast<int>(rng() % 3);
    const auto spec = random_spec(small_world(), length, rng());
    BeamConfig c;
    c.r = 1 + static_cast<int>(rng() % 2);
    c.m = 1 + static_cast<int>(rng() % 2);
    c.latent_indices = rng() % 2 ? std::vector<int>{static_cast<int>(rng() % 4)} : std::vector<int>{0, 2};
    c.n_random_mid = static_cast<int>(rng() % 2);
    c.prune_start = 2;
    c.master_seed = rng();
    c.w = static_cast<int>(expansion_tree_leaves(c, length));
    const auto got = decode_sequence(spec, c, backend, model);
    const auto want = exhaustive_oracle(spec, c, backend, model);
    if (got.best.path() == want.path && std::abs(got.best.cumulative_score - want.score) <= 1e-9) ++agree;
  }
  const double secs = seconds_since(start);
  return {agree == instances && secs < 60.0, fmt("%d/%d instances match, %.2f s", agree, instances, secs)};
}

Outcome complexity_law() {
  BeamConfig c;
  c.master_seed = 4;
  const auto spec = random_spec(small_world(), 4, 4);
  const auto result = decode_sequence(spec, c, make_backend(small_world()), ScoreModel::default_model());
  const AuditReport audit = complexity_audit(result.log);
  const std::vector<long> stated{c.r, c.r * 9L, c.r * 81L, c.w * 9L};
  std::string logged, expected;
  bool literal = result.log.steps.size() == stated.size();
  for (std::size_t j = 0; j < result.log.steps.size(); ++j) {
    logged += (j ? "," : "") + std::to_string(result.log.steps[j].denoiser_calls);
    expected += (j ? "," : "") + std::to_string(stated[j]);
    if (j < stated.size() && result.log.steps[j].denoiser_calls != stated[j]) literal = false;
  }
  return {literal && audit.passed(),
          "logged " + logged + " vs stated " + expected + "; audit against the pool law " +
              (audit.passed() ? "passes" : "fails")};
}

Outcome exact_backend_fidelity() {
  const auto start = std::chrono::steady_clock::now();
  VocabularyEntry two;
  two.condition = Condition{"u", {1.0, 0.0}, "u"};
  two.mixture = MixtureModel{{MixtureComponent{0.3, {-2.0, 1.0}, {0.1, 0.1}},
                              MixtureComponent{0.7, {2.0, -1.0}, {0.2, 0.05}}}};
  const World world(2, 100, {two});
  const auto denoiser = world.exact_denoiser();
  const auto schedule = world.schedule();
  const int n = 10000;
  std::array<long, 2> counts{};
  std::array<std::array<double, 2>, 2> sums{};
  for (int i = 0; i < n; ++i) {
    const auto rec = run_denoise(two.condition, FreshNoise{derive_seed(0xF1DE, {static_cast<std::uint64_t>(i)})},
                                 schedule, *denoiser, 0);
    const auto& x = rec.final_sample;
    // Components are far apart: assign to the nearer mean.
    const double d0 = std::hypot(x[0] + 2.0, x[1] - 1.0);
    const double d1 = std::hypot(x[0] - 2.0, x[1] + 1.0);
    const int k = d0 < d1 ? 0 : 1;
    ++counts[k];
    sums[k][0] += x[0];
    sums[k][1] += x[1];
  }
  double weight_err = 0.0, mean_err = 0.0;
  for (int k = 0; k < 2; ++k) {
    const auto& comp = two.mixture.components[k];
    weight_err = std::max(weight_err, std::abs(static_cast<double>(counts[k]) / n - comp.weight));
    for (int i = 0; i < 2; ++i)
      mean_err = std::max(mean_err, std::abs(sums[k][i] / std::max(counts[k], 1L) - comp.mean[i]));
  }

  VocabularyEntry point;
  point.condition = Condition{"p", {1.0, 0.0}, "p"};
  point.mixture = MixtureModel{{MixtureComponent{1.0, {0.4, -1.3}, {1e-14, 1e-14}}}};
  const World pw(2, 100, {point});
  double point_err = 0.0;
  for (int i = 0; i < 20; ++i) {
    const auto rec = run_denoise(point.condition, FreshNoise{static_cast<Seed>(i)}, pw.schedule(), *pw.exact_denoiser(), 0);
    point_err = std::max({point_err, std::abs(rec.final_sample[0] - 0.4), std::abs(rec.final_sample[1] + 1.3)});
  }
  const double secs = seconds_since(start);
  return {weight_err <= 0.03 && mean_err <= 0.05 && point_err <= 1e-6 && secs < 30.0,
          fmt("weight error %.4f, mean error %.4f, point-mass error %.2e, %.2f s", weight_err, mean_err, point_err,
              secs)};
}

double denoiser_gradient_error() {
  const std::size_t d = 3;
  Rng rng(2024);
  double worst = 0.0;
  for (int point = 0; point < 10; ++point) {
    auto model = MlpDenoiser::initialize(d, 6, 100 + point, 0.3 * point);
    auto params = model.parameters();
    for (double& p : params) p += 0.3 * std::normal_distribution<double>()(rng);
    std::vector<DenoiserExample> batch;
    for (int k = 0; k < 4; ++k)
      batch.push_back(
          DenoiserExample{gaussian_vector(rng, d), 0.1 + 0.2 * k, gaussian_vector(rng, d), gaussian_vector(rng, d)});
    std::vector<double> grad(params.size());
    model.loss(batch, grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double keep = params[i];
      params[i] = keep + h;
      const double up = model.loss(batch);
      params[i] = keep - h;
      const double down = model.loss(batch);
      params[i] = keep;
      worst = std::max(worst, relative_error(grad[i], (up - down) / (2 * h)));
    }
  }
  return worst;
}

Corpus scorer_corpus(const World& world) {
  Rng rng(31);
  Corpus corpus;
  const auto& vocab = world.vocabulary();
  for (int s = 0; s < 6; ++s) {
    CorpusSequence seq;
    for (int j = 0; j < 3; ++j) {
      const auto& entry = vocab[(s + j) % vocab.size()];
      auto x = entry.condition.embedding;
      for (double& v : x) v += 0.4 * std::normal_distribution<double>()(rng);
      seq.push_back(CorpusStep{entry.condition, x});
    }
    corpus.push_back(std::move(seq));
  }
  return corpus;
}

Outcome gradient_checks() {
  const double mlp = denoiser_gradient_error();
  const World world = make_synthetic_world(6, 4, 1, 3, 20);
  const auto examples = build_classifier_examples(scorer_corpus(world), 3, 8);
  Rng rng(12);
  std::normal_distribution<double> g(0.0, 1.5);
  double worst = 0.0, bias_gap = 0.0;
  for (int point = 0; point < 10; ++point) {
    ScoreModel m;
    for (double& w : m.weights) w = g(rng);
    m.bias = g(rng);
    std::array<double, kFeatureCount + 1> grad{};
    classifier_loss(m, examples, grad);
    const double h = 1e-6;
    for (std::size_t i = 0; i <= kFeatureCount; ++i) {
      double& p = i < kFeatureCount ? m.weights[i] : m.bias;
      const double keep = p;
      p = keep + h;
      const double up = classifier_loss(m, examples);
      p = keep - h;
      const double down = classifier_loss(m, examples);
      p = keep;
      const double fd = (up - down) / (2 * h);
      // The bias shifts every candidate equally, so both sides are ~0 and
      // only their absolute gap is meaningful.
      if (i < kFeatureCount)
        worst = std::max(worst, relative_error(grad[i], fd));
      else
        bias_gap = std::max(bias_gap, std::abs(grad[i] - fd));
    }
  }
  return {mlp < 1e-4 && worst < 1e-4 && bias_gap < 1e-8,
          fmt("denoiser max rel error %.2e, scorer weights %.2e, scorer bias abs gap %.1e", mlp, worst, bias_gap)};
}

Outcome softmax_invariants() {
  const auto backend = make_backend(small_world());
  double norm_err = 0.0, sum_err = 0.0, shift_err = 0.0;
  bool ranking_same = true;
  Rng rng(77);
  for (int s = 0; s < 20; ++s) {
    BeamConfig c;
    c.w = 1 + static_cast<int>(rng() % 4);
    c.r = 1 + static_cast<int>(rng() % 4);
    c.master_seed = rng();
    const auto spec = random_spec(small_world(), 2 + static_cast<int>(rng() % 3), rng());
    ScoreModel model = ScoreModel::default_model();
    const auto base = decode_sequence(spec, c, backend, model);
    model.bias = 3.7;
    const auto shifted = decode_sequence(spec, c, backend, model);
    for (std::size_t j = 0; j < base.log.steps.size(); ++j) {
      if (base.log.steps[j].retained != shifted.log.steps[j].retained) ranking_same = false;
      std::map<std::string, double> mass;
      std::map<std::string, double> cumulative;
      for (const auto& cand : base.log.steps[j].candidates) {
        mass[cand.parent_id] += std::exp(cand.log_softmax);
        cumulative[cand.beam_id] = cand.cumulative;
      }
      for (const auto& [parent, m] : mass) norm_err = std::max(norm_err, std::abs(m - 1.0));
      for (std::size_t k = 0; k < base.log.steps[j].candidates.size(); ++k)
        shift_err = std::max(shift_err, std::abs(base.log.steps[j].candidates[k].log_softmax -
                                                 shifted.log.steps[j].candidates[k].log_softmax));
    }
    if (base.best.path() != shifted.best.path()) ranking_same = false;
    double sum = 0.0;
    for (const auto& e : base.best.entries) sum += e.step_score;
    sum_err = std::max(sum_err, std::abs(sum - base.best.cumulative_score));
    // Every logged candidate: cumulative = parent cumulative + its step score.
    std::map<std::string, double> prev;
    for (const auto& step : base.log.steps) {
      std::map<std::string, double> now;
      for (const auto& cand : step.candidates) {
        const double parent = step.step == 1 ? 0.0 : prev.at(cand.parent_id);
        sum_err = std::max(sum_err, std::abs(parent + cand.log_softmax - cand.cumulative));
        now[cand.beam_id] = cand.cumulative;
      }
      prev = std::move(now);
    }
  }
  return {norm_err <= 1e-9 && sum_err <= 1e-9 && shift_err <= 1e-9 && ranking_same,
          fmt("normalization error %.1e, additivity error %.1e, shift error %.1e, ranking %s", norm_err, sum_err,
              shift_err, ranking_same ? "unchanged" : "changed")};
}

Outcome baseline_equivalences() {
  const auto backend = make_backend(small_world());
  Rng rng(8);
  int greedy_match = 0, nucleus_match = 0, single_seed = 0, single_seed_match = 0;
  const int instances = 20;
  for (int i = 0; i < instances; ++i) {
    BeamConfig c;
    c.r = 1 + static_cast<int>(rng() % 4);
    c.latent_indices = rng() % 2 ? std::vector<int>{0, 1, 2, 3} : std::vector<int>{1, 3};
    c.n_random_mid = static_cast<int>(rng() % 2);
    c.master_seed = rng();
    const auto spec = random_spec(small_world(), 1 + static_cast<int>(rng() % 4), rng());
    const auto greedy = greedy_decode(spec, c, backend);
    const auto beam = decode_sequence(spec, greedy_equivalent(c), backend, ScoreModel::prompt_only());
    const bool same = greedy.best.path() == beam.best.path();
    greedy_match += same;
    if (c.r == 1) {
      ++single_seed;
      single_seed_match += same;
    }
    nucleus_match += nucleus_decode(spec, c, 1e-6, backend).best.path() == greedy.best.path();
  }
  return {greedy_match == instances && nucleus_match == instances,
          fmt("greedy = width-1 beam on %d/%d (r = 1: %d/%d); nucleus p=1e-6 = greedy on %d/%d", greedy_match,
              instances, single_seed_match, single_seed, nucleus_match, instances)};
}

Outcome metric_rules() {
  const Embedder embed(4);
  const World world = make_synthetic_world(4, 3, 1, 2, 20);
  const auto spec = random_spec(world, 3, 5);
  const std::vector<std::vector<double>> same(3, std::vector<double>{1.0, 2.0, -0.5, 0.3});
  const auto identical = evaluate_sequence("m", same, spec, embed);
  const bool clip_i_zero = identical.clip_i.raw > 0.9 && identical.clip_i.clipped == 0.0;

  // Images orthogonal to their step text (cosine 0 < 0.1) contribute 0.
  SequenceSpec text;
  text.id = "t";
  for (int j = 0; j < 2; ++j) text.steps.push_back(SequenceStep{"a", "a", Condition{"a", {1.0, 0.0, 0.0, 0.0}, "a"}});
  text.goal_embedding = {1.0, 0.0, 0.0, 0.0};
  const std::vector<std::vector<double>> images{{0.05, 1.0, 0.0, 0.0}, {1.0, 0.0, 0.0, 0.0}};
  const auto ct = clip_t_analog(images, text, embed);
  const bool floor_ok = ct.per_step[0] > 0.0 && ct.per_step[0] < 0.1 && ct.clipped == 0.5 * ct.per_step[1];

  bool products = true;
  Rng rng(6);
  for (int s = 0; s < 20; ++s) {
    std::vector<std::vector<double>> xs;
    for (int j = 0; j < 3; ++j) xs.push_back(gaussian_vector(rng, 4));
    const auto r = evaluate_sequence("m", xs, spec, embed);
    products = products && r.clip_star == r.clip_i.clipped * r.clip_t.clipped &&
               r.dino_star == r.dino_i.clipped * r.clip_t.clipped;
  }
  const double k_pos = fleiss_kappa(RatingsMatrix{{{2, 0}, {0, 2}}});
  const double k_neg = fleiss_kappa(RatingsMatrix{{{1, 1}, {1, 1}}});
  return {clip_i_zero && floor_ok && products && k_pos == 1.0 && k_neg == -1.0,
          fmt("identical CLIP-I %.3f -> %.1f; CLIP-T %.3f floored; star products %s; kappa %.1f and %.1f",
              identical.clip_i.raw, identical.clip_i.clipped, ct.per_step[0], products ? "exact" : "inexact", k_pos,
              k_neg)};
}

json determinism_config() {
  return {{"world", {{"synthetic", {{"d", 16}, {"tokens", 4}, {"components", 2}, {"seed", 9}, {"T", 50}}}}},
          {"sequences",
           {{{"id", "a"}, {"goal", "g"}, {"steps", {{{"token", "t0"}}, {{"token", "t1"}}, {{"token", "t2"}}, {{"token", "t3"}}}}},
            {{"id", "b"}, {"goal", "g"}, {"steps", {{{"token", "t3"}}, {{"token", "t1"}}, {{"token", "t1"}}}}}}},
          {"methods",
           {{{"id", "beam"}, {"method", "beam"}, {"config", json::object()}},
            {{"id", "greedy"}, {"method", "greedy"}, {"config", json::object()}},
            {{"id", "nucleus"}, {"method", "nucleus"}, {"config", json::object()}, {"p", 0.9}}}},
          {"output", "run"},
          {"master_seed", 1},
          {"workers", 4}};
}

Outcome determinism() {
  TempDir tmp("acceptance_det");
  std::array<fs::path, 2> runs;
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = tmp / ("copy" + std::to_string(i));
    fs::create_directories(dir);
    std::ofstream(dir / "experiment.json") << determinism_config().dump(2);
    const std::string cmd = "BEAMLAT_SEED=20261015 \"" + std::string(BEAMLAT_CLI_PATH) + "\" run \"" +
                            (dir / "experiment.json").string() + "\" > /dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "beamlat run exited with an error"};
    runs[i] = dir / "run";
  }
  int files = 0, equal = 0;
  std::vector<fs::path> compared{"metrics.csv"};
  for (const auto& e : fs::directory_iterator(runs[0] / "runs")) compared.push_back(fs::relative(e.path(), runs[0]));
  for (const auto& rel : compared) {
    ++files;
    equal += fs::exists(runs[1] / rel) && slurp(runs[0] / rel) == slurp(runs[1] / rel);
  }
  const bool seeded = read_json(runs[0] / "manifest.json").at("master_seed") == 20261015;
  return {files > 1 && equal == files && seeded,
          fmt("%d/%d run logs and metrics CSV byte-identical; seed override %s", equal, files,
              seeded ? "applied" : "ignored")};
}

Outcome tournament_logic() {
  Rng rng(24);
  std::vector<Contender> contenders;
  for (int i = 0; i < 24; ++i)
    contenders.push_back(Contender{"cfg" + std::to_string(i), 100 + static_cast<long>(rng() % 5000)});
  const auto cheapest = std::min_element(contenders.begin(), contenders.end(),
                                         [](const auto& a, const auto& b) { return a.cost < b.cost; });
  TempDir tmp("acceptance_tournament");
  const TournamentJournal journal(tmp / "journal.jsonl");
  Tournament live = journal.open(contenders, 1);
  int verdicts = 0;
  bool replay_ok = true;
  while (auto p = live.next_pairing()) {
    const VerdictRecord rec{p->id, Verdict::both_bad, "judge"};
    journal.append(rec);
    live.record_verdict(rec.pairing_id, rec.verdict, rec.rater);
    // Simulated crash after every verdict: a fresh process replays the journal.
    ++verdicts;
    replay_ok = replay_ok && journal.open(contenders, 1).to_json() == live.to_json();
  }
  const bool champion = live.champion() == cheapest->id;
  return {champion && verdicts == 23 && replay_ok,
          fmt("champion %s (cheapest %s), %d verdicts, replay %s", live.champion().value_or("-").c_str(),
              cheapest->id.c_str(), verdicts, replay_ok ? "identical" : "differs")};
}

Outcome ablation_harness() {
  const World world = make_synthetic_world(8, 4, 2, 13, 30);
  const auto spec = random_spec(world, 5, 3, "ablate");
  BeamConfig base;
  base.master_seed = 3;
  const auto report = latent_history_ablation(world, spec, base, {1, 2, 0}, ScoreModel::default_model());
  const auto* m2 = report.find("m=2");
  const auto* all = report.find("m=all");
  if (report.rows.size() != 3 || !m2 || !all) return {false, "ablation did not complete all three settings"};
  const bool emitted = !report.to_csv().empty() && report.to_json().at("rows").size() == 3;
  return {emitted && m2->denoiser_calls < all->denoiser_calls,
          fmt("denoiser calls m=1 %ld, m=2 %ld, m=all %ld", report.rows[0].denoiser_calls, m2->denoiser_calls,
              all->denoiser_calls)};
}

}  // namespace

int main(int argc, char** argv) {
  const bool strict = argc > 1 && std::string(argv[1]) == "--strict";
  const std::vector<std::pair<std::string, std::function<Outcome()>>> checks{
      {"oracle equivalence", oracle_equivalence},
      {"complexity law", complexity_law},
      {"exact-backend fidelity", exact_backend_fidelity},
      {"gradient checks", gradient_checks},
      {"softmax and score invariants", softmax_invariants},
      {"baseline equivalences", baseline_equivalences},
      {"metric rules", metric_rules},
      {"determinism", determinism},
      {"tournament logic", tournament_logic},
      {"latent-history ablation", ablation_harness},
  };
  int failed = 0;
  for (const auto& [name, check] : checks) {
    Outcome out;
    try {
      out = check();
    } catch (const std::exception& e) {
      out = {false, std::string("threw: ") + e.what()};
    }
    failed += !out.pass;
    std::cout << (out.pass ? "[PASS] " : "[FAIL] ") << name << ": " << out.detail << std::endl;
  }
  std::cout << checks.size() - failed << "/" << checks.size() << " passed" << std::endl;
  return strict && failed ? 1 : 0;
}
