#include <csignal>
#include <cstdio>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "beamlat/error.hpp"
#include "beamlat/experiment.hpp"
#include "beamlat/metrics.hpp"
#include "beamlat/scorer.hpp"
#include "beamlat/service.hpp"
#include "beamlat/tournament.hpp"
#include "beamlat/world.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace beamlat;

namespace {

AnnotationService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_run(const std::string& config_path) {
  const ExperimentConfig config = ExperimentConfig::load(config_path);
  const ExperimentResult result = run_experiment(config);
  std::printf("%zu jobs, %ld failed -> %s\n", result.manifest.at("jobs").size(), result.failed_jobs,
              (result.dir / "manifest.json").string().c_str());
  for (const auto& job : result.manifest.at("jobs")) {
    if (job.at("status") == "error")
      std::fprintf(stderr, "  %s/%s: %s\n", job.at("method").get<std::string>().c_str(),
                   job.at("sequence_id").get<std::string>().c_str(), job.at("error").get<std::string>().c_str());
  }
  return 0;
}

int cmd_metrics(const std::string& run_dir, const std::string& out) {
  const auto reports = recompute_metrics(run_dir);
  const std::string csv = metrics_csv(reports);
  if (out.empty())
    std::cout << csv;
  else
    write_text(out, csv);
  return 0;
}

int cmd_audit(const std::string& run_dir) {
  bool ok = true;
  bool header = true;
  for (const auto& report : audit_run_dir(run_dir)) {
    std::cout << report.to_csv(header);
    header = false;
    ok = ok && report.passed();
  }
  std::fprintf(stderr, "audit %s\n", ok ? "passed" : "FAILED");
  return ok ? 0 : 1;
}

int cmd_train(const std::string& corpus_path, const std::string& world_path, const ClassifierTrainOptions& options,
              const std::string& out) {
  const World world = World::load(world_path);
  const Corpus corpus = load_corpus(corpus_path, world);
  const TrainedClassifier trained = train_classifier(corpus, options);
  if (!trained.epoch_losses.empty())
    std::fprintf(stderr, "loss %.6f -> %.6f over %zu epochs\n", trained.epoch_losses.front(),
                 trained.epoch_losses.back(), trained.epoch_losses.size());
  const std::string text = trained.model.to_json().dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_text(out, text);
  return 0;
}

int cmd_tournament(const std::string& config_path, bool serve, const std::string& host, int port,
                   const std::string& judge, int raters, std::string journal, const std::string& ui) {
  const ExperimentConfig config = ExperimentConfig::load(config_path);
  const ExperimentResult result = run_experiment(config);
  if (journal.empty()) journal = (result.dir / "tournament.jsonl").string();

  if (!judge.empty()) {
    const Verdict verdict = parse_verdict(judge);
    std::vector<Contender> contenders;
    for (const auto& [id, cost] : method_costs(result.manifest)) contenders.push_back(Contender{id, cost});
    const TournamentJournal log(journal);
    Tournament t = log.open(contenders, raters);
    while (const auto pairing = t.next_pairing()) {
      for (int k = 1; k <= raters && t.next_pairing(); ++k) {
        const VerdictRecord record{pairing->id, verdict, "judge-" + std::to_string(k)};
        t.record_verdict(record.pairing_id, record.verdict, record.rater);
        log.append(record);
      }
    }
    std::cout << t.to_json().dump(2) << "\n";
    return 0;
  }
  if (!serve) {
    std::cout << result.manifest.at("methods").dump(2) << "\n";
    return 0;
  }

  ServiceOptions options;
  options.run_dir = result.dir;
  options.journal = journal;
  options.raters_per_pairing = raters;
  if (!ui.empty()) options.ui_dir = ui;
  AnnotationService service(options);
  const int bound = service.bind(host, port);
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::fprintf(stderr, "serving on http://%s:%d (journal %s)\n", host.c_str(), bound, journal.c_str());
  service.listen();
  g_service = nullptr;
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& sequence_id, const std::string& out) {
  const ExperimentConfig config = ExperimentConfig::load(config_path);
  const MethodSpec* base = nullptr;
  for (const auto& m : config.methods)
    if (m.method == "beam") {
      base = &m;
      break;
    }
  if (!base) throw Error(ErrorKind::invalid_range, "ablation needs a beam method in the config");
  const SequenceSpec* spec = config.sequences.empty() ? nullptr : &config.sequences.front();
  for (const auto& s : config.sequences)
    if (s.id == sequence_id) spec = &s;
  if (!spec) throw Error(ErrorKind::empty_set, "config lists no sequences");
  const AblationReport report = latent_history_ablation(
      config.world, contextualize_prompts(*spec, config.contextualize), base->config, {1, 2, 0}, base->scorer,
      config.workers);
  if (out.empty()) {
    std::cout << report.to_csv();
  } else {
    write_text(out, report.to_csv());
    write_text(fs::path(out).replace_extension(".json"), report.to_json().dump(2) + "\n");
  }
  return 0;
}

int cmd_kappa(const std::string& path) {
  const double kappa = fleiss_kappa(RatingsMatrix::from_json(read_json(path)));
  std::printf("%.6f\n", kappa);
  return 0;
}

int cmd_world(std::size_t dim, std::size_t tokens, std::size_t components, Seed seed, int steps,
              const std::string& out) {
  const World world = make_synthetic_world(dim, tokens, components, seed, steps);
  const std::string text = world.to_json().dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_text(out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"beamlat: beam search over sequences of diffusion runs"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run = app.add_subcommand("run", "decode every (sequence, method) job and write a run directory");
  run->add_option("config", config_path, "experiment config JSON")->required()->check(CLI::ExistingFile);

  std::string run_dir;
  std::string out;
  auto* metrics = app.add_subcommand("metrics", "recompute the metrics CSV of a run directory");
  metrics->add_option("run-dir", run_dir)->required()->check(CLI::ExistingDirectory);
  metrics->add_option("-o,--out", out, "write CSV here instead of stdout");

  auto* audit = app.add_subcommand("audit", "check logged denoiser calls against the complexity law");
  audit->add_option("run-dir", run_dir)->required()->check(CLI::ExistingDirectory);

  std::string corpus_path;
  std::string world_path;
  ClassifierTrainOptions train_options;
  auto* train = app.add_subcommand("train-scorer", "fit the contrastive scorer on a sequence corpus");
  train->add_option("corpus", corpus_path)->required()->check(CLI::ExistingFile);
  train->add_option("--world", world_path, "world JSON resolving the corpus tokens")->required()->check(CLI::ExistingFile);
  train->add_option("--negatives", train_options.negatives_per_step);
  train->add_option("--epochs", train_options.epochs);
  train->add_option("--lr", train_options.learning_rate);
  train->add_option("--seed", train_options.seed);
  train->add_option("-o,--out", out);

  bool serve = false;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string judge;
  int raters = 1;
  std::string journal;
  std::string ui;
  auto* tournament = app.add_subcommand("tournament", "pairwise elimination over the config's methods");
  tournament->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  tournament->add_flag("--serve", serve, "serve the annotation API");
  tournament->add_option("--host", host);
  tournament->add_option("--port", port);
  tournament->add_option("--judge", judge, "scripted judge: FIRST, SECOND, BOTH_GOOD or BOTH_BAD");
  tournament->add_option("--raters", raters, "verdicts needed per pairing")->check(CLI::PositiveNumber);
  tournament->add_option("--journal", journal, "journal path (default <run-dir>/tournament.jsonl)");
  tournament->add_option("--ui", ui, "static UI directory served at /")->check(CLI::ExistingDirectory);

  std::string sequence_id;
  auto* ablate = app.add_subcommand("ablate", "compare steps back m = 1, 2, all with the first beam method");
  ablate->add_option("config", config_path)->required()->check(CLI::ExistingFile);
  ablate->add_option("--sequence", sequence_id, "sequence id (default: first)");
  ablate->add_option("-o,--out", out, "CSV path; a JSON report is written next to it");

  std::string ratings_path;
  auto* kappa = app.add_subcommand("kappa", "Fleiss' kappa of a ratings JSON {items, n}");
  kappa->add_option("ratings", ratings_path)->required()->check(CLI::ExistingFile);

  std::size_t dim = 16;
  std::size_t tokens = 6;
  std::size_t components = 2;
  Seed world_seed = 0;
  int steps = 100;
  auto* world = app.add_subcommand("world", "write a synthetic world JSON");
  world->add_option("--dim", dim);
  world->add_option("--tokens", tokens);
  world->add_option("--components", components);
  world->add_option("--seed", world_seed);
  world->add_option("--steps", steps);
  world->add_option("-o,--out", out);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path);
    if (*metrics) return cmd_metrics(run_dir, out);
    if (*audit) return cmd_audit(run_dir);
    if (*train) return cmd_train(corpus_path, world_path, train_options, out);
    if (*tournament) return cmd_tournament(config_path, serve, host, port, judge, raters, journal, ui);
    if (*ablate) return cmd_ablate(config_path, sequence_id, out);
    if (*kappa) return cmd_kappa(ratings_path);
    if (*world) return cmd_world(dim, tokens, components, world_seed, steps, out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "beamlat: %s\n", e.what());
    return 2;
  }
  return 0;
}
