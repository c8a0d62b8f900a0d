#include "beamlat/experiment.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "beamlat/baselines.hpp"
#include "beamlat/csv.hpp"
#include "beamlat/error.hpp"
#include "parallel.hpp"

namespace beamlat {

using nlohmann::json;
namespace fs = std::filesystem;

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, "malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

Seed seed_from_env(Seed fallback) {
  const char* env = std::getenv("BEAMLAT_SEED");
  if (!env || !*env) return fallback;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 0);
  if (*end != '\0') throw Error(ErrorKind::invalid_range, std::string("BEAMLAT_SEED is not an integer: ") + env);
  return static_cast<Seed>(v);
}

bool safe_id(const std::string& id) {
  if (id.empty() || id.front() == '.') return false;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

std::string job_name(const std::string& method, const std::string& sequence_id) {
  return method + "__" + sequence_id;
}

std::string asset_name(const std::string& method, const std::string& sequence_id, int step) {
  return job_name(method, sequence_id) + "__" + std::to_string(step);
}

json MethodSpec::to_json() const {
  json out = {{"id", id}, {"method", method}, {"config", config.to_json()}};
  if (method == "nucleus") out["p"] = p;
  if (method == "beam") out["scorer"] = scorer.to_json();
  return out;
}

namespace {

World load_world(const json& source, const fs::path& base) {
  if (source.is_string()) return World::load(base / source.get<std::string>());
  if (source.contains("synthetic")) {
    const json& s = source.at("synthetic");
    return make_synthetic_world(s.at("d").get<std::size_t>(), s.at("tokens").get<std::size_t>(),
                                s.value("components", std::size_t{2}), s.value("seed", Seed{0}),
                                s.value("T", 100));
  }
  return World::from_json(source);
}

ScoreModel load_scorer(const json& source, const fs::path& base) {
  if (source.is_object()) return ScoreModel::from_json(source);
  const std::string name = source.get<std::string>();
  if (name == "default") return ScoreModel::default_model();
  if (name == "prompt_only") return ScoreModel::prompt_only();
  return ScoreModel::load(base / name);
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j, const fs::path& base) {
  try {
    ExperimentConfig c;
    c.world = load_world(j.at("world"), base);
    c.master_seed = seed_from_env(j.value("master_seed", Seed{0}));
    c.contextualize = j.value("contextualize", 0.0);
    c.workers = j.value("workers", 1);
    c.output_dir = base / j.value("output", std::string("runs"));
    const std::string render = j.value("render", std::string("none"));
    if (render != "none") {
      c.render = parse_render_mode(render);
      check_render_mode(c.world.dim(), *c.render);
    }
    if (j.contains("thresholds")) {
      const json& t = j.at("thresholds");
      c.thresholds.clip_i = t.value("clip_i", c.thresholds.clip_i);
      c.thresholds.dino_i = t.value("dino_i", c.thresholds.dino_i);
      c.thresholds.clip_t = t.value("clip_t", c.thresholds.clip_t);
    }

    const json sequences = j.at("sequences").is_string() ? read_json(base / j.at("sequences").get<std::string>())
                                                         : j.at("sequences");
    std::set<std::string> seq_ids;
    for (const auto& s : sequences) {
      SequenceSpec spec = SequenceSpec::from_json(s, c.world);
      if (!safe_id(spec.id) || !seq_ids.insert(spec.id).second)
        throw Error(ErrorKind::invalid_range, "sequence id '" + spec.id + "' is unsafe or repeated");
      c.sequences.push_back(std::move(spec));
    }

    std::set<std::string> method_ids;
    for (const auto& m : j.at("methods")) {
      MethodSpec spec;
      spec.method = m.value("method", std::string("beam"));
      spec.id = m.value("id", spec.method);
      if (spec.method != "beam" && spec.method != "greedy" && spec.method != "nucleus")
        throw Error(ErrorKind::invalid_range, "unknown method '" + spec.method + "'");
      if (!safe_id(spec.id) || !method_ids.insert(spec.id).second)
        throw Error(ErrorKind::invalid_range, "method id '" + spec.id + "' is unsafe or repeated");
      spec.config = BeamConfig::from_json(m.value("config", json::object()));
      spec.config.master_seed = c.master_seed;
      spec.p = m.value("p", spec.p);
      if (m.contains("scorer")) spec.scorer = load_scorer(m.at("scorer"), base);
      c.methods.push_back(std::move(spec));
    }
    if (c.methods.empty()) throw Error(ErrorKind::empty_set, "experiment lists no methods");
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, std::string("malformed experiment config: ") + e.what());
  }
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  return from_json(read_json(path), path.parent_path());
}

DecodeResult run_method(const MethodSpec& method, const SequenceSpec& spec, const Backend& backend) {
  if (method.method == "greedy") return greedy_decode(spec, method.config, backend);
  if (method.method == "nucleus") return nucleus_decode(spec, method.config, method.p, backend);
  return decode_sequence(spec, method.config, backend, method.scorer);
}

namespace {

struct JobOutcome {
  std::optional<DecodeResult> result;
  std::string error;
};

json sequences_json(const std::vector<SequenceSpec>& sequences) {
  json out = json::array();
  for (const auto& s : sequences) out.push_back(s.to_json());
  return out;
}

std::vector<std::string> step_tokens(const SequenceSpec& spec) {
  std::vector<std::string> out;
  for (const auto& s : spec.steps) out.push_back(s.token);
  return out;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const fs::path dir = config.output_dir;
  fs::create_directories(dir / "runs");
  const Backend backend = make_backend(config.world, 1);
  const Embedder embed(config.world.dim());

  std::vector<SequenceSpec> decoded;
  for (const auto& s : config.sequences) decoded.push_back(contextualize_prompts(s, config.contextualize));

  // Jobs are ordered sequence-major; each writes its own slot.
  const std::size_t n_seq = config.sequences.size();
  const std::size_t n_jobs = n_seq * config.methods.size();
  std::vector<JobOutcome> outcomes(n_jobs);
  detail::parallel_for(n_jobs, config.workers, [&](std::size_t i) {
    const auto& method = config.methods[i % config.methods.size()];
    const auto& spec = decoded[i / config.methods.size()];
    try {
      outcomes[i].result = run_method(method, spec, backend);
    } catch (const std::exception& e) {
      outcomes[i].error = e.what();
    }
  });

  ExperimentResult result;
  result.dir = dir;
  write_text(dir / "world.json", config.world.to_json().dump(2) + "\n");
  write_text(dir / "sequences.json", sequences_json(config.sequences).dump(2) + "\n");

  json jobs = json::array();
  std::map<std::string, long> cost;
  std::map<std::string, std::vector<ChoiceRecord>> choices;
  std::string audit_csv = "method,sequence_id,step,expected,logged,status\n";
  std::vector<MethodReports> by_method;
  for (const auto& m : config.methods) by_method.push_back(MethodReports{m.id, {}});
  std::vector<bool> sequence_complete(n_seq, true);

  for (std::size_t i = 0; i < n_jobs; ++i) {
    const std::size_t mi = i % config.methods.size();
    const std::size_t si = i / config.methods.size();
    const MethodSpec& method = config.methods[mi];
    const SequenceSpec& spec = config.sequences[si];
    const std::string name = job_name(method.id, spec.id);
    json job = {{"method", method.id}, {"sequence_id", spec.id}};
    cost.try_emplace(method.id, 0);
    const JobOutcome& outcome = outcomes[i];
    if (!outcome.result) {
      job["status"] = "error";
      job["error"] = outcome.error;
      sequence_complete[si] = false;
      ++result.failed_jobs;
      jobs.push_back(std::move(job));
      continue;
    }
    RunLog log = outcome.result->log;
    log.method = method.method;
    const fs::path log_path = fs::path("runs") / (name + ".json");
    json log_json = log.to_json();
    log_json["method_id"] = method.id;
    write_text(dir / log_path, log_json.dump(2) + "\n");

    cost[method.id] += log.denoiser_calls();
    const int steps_back = method.method == "beam" ? method.config.m : 1;
    for (const auto& rec : choice_records(log.chosen_path, steps_back, method.config.latent_indices,
                                          method.config.n_random_mid))
      choices[method.id].push_back(rec);

    const AuditReport audit = complexity_audit(log);
    audit_csv += AuditReport{method.id, spec.id, audit.rows}.to_csv(false);

    MetricsReport report = evaluate_sequence(method.id, log.best_samples, spec, embed, config.thresholds);
    result.reports.push_back(report);
    by_method[mi].reports.push_back(report);

    json assets = json::array();
    if (config.render) {
      const auto tokens = step_tokens(spec);
      for (std::size_t s = 0; s < log.best_samples.size(); ++s) {
        const std::string asset = asset_name(method.id, spec.id, static_cast<int>(s) + 1) + ".svg";
        write_text(dir / "assets" / asset, render_frame(log.best_samples[s], config.world, *config.render, tokens[s]));
        assets.push_back("assets/" + asset);
      }
      write_text(dir / "assets" / (name + ".svg"),
                 render_sequence(log.best_samples, config.world, *config.render, tokens));
      job["sequence_asset"] = "assets/" + name + ".svg";
    }
    job["status"] = "ok";
    job["run_log"] = log_path.generic_string();
    job["denoiser_calls"] = log.denoiser_calls();
    job["best_beam"] = log.best_beam;
    job["best_score"] = log.best_score;
    job["audit"] = audit.passed() ? "pass" : "fail";
    job["assets"] = std::move(assets);
    jobs.push_back(std::move(job));
  }

  write_text(dir / "metrics.csv", metrics_csv(result.reports));
  json outputs = {{"metrics", "metrics.csv"}, {"audit", "audit.csv"}};
  write_text(dir / "audit.csv", audit_csv);

  // Wins only over sequences every method finished.
  std::vector<MethodReports> complete;
  for (const auto& m : by_method) {
    MethodReports kept{m.method, {}};
    for (const auto& r : m.reports) {
      for (std::size_t si = 0; si < n_seq; ++si)
        if (config.sequences[si].id == r.sequence_id && sequence_complete[si]) kept.reports.push_back(r);
    }
    complete.push_back(std::move(kept));
  }
  if (!complete.empty() && !complete.front().reports.empty()) {
    write_text(dir / "wins.csv", combined_and_wins(complete).to_csv());
    outputs["wins"] = "wins.csv";
  }

  json provenance = json::object();
  for (const auto& m : config.methods) {
    const auto it = choices.find(m.id);
    if (it == choices.end() || it->second.empty()) continue;
    const std::string file = "provenance_" + m.id + ".csv";
    write_text(dir / file, provenance_stats(it->second).to_csv());
    provenance[m.id] = file;
  }
  outputs["provenance"] = std::move(provenance);

  json methods = json::array();
  for (const auto& m : config.methods) {
    json entry = m.to_json();
    entry["cost"] = cost[m.id];
    methods.push_back(std::move(entry));
  }
  json seqs = json::array();
  for (const auto& s : config.sequences) {
    json steps = json::array();
    for (const auto& st : s.steps) steps.push_back(st.text);
    seqs.push_back({{"id", s.id}, {"goal", s.goal_text}, {"steps", std::move(steps)}});
  }

  result.manifest = {{"master_seed", config.master_seed},
                     {"world", {{"d", config.world.dim()}, {"T", config.world.steps()}, {"file", "world.json"}}},
                     {"render", config.render ? to_string(*config.render) : "none"},
                     {"contextualize", config.contextualize},
                     {"sequences", std::move(seqs)},
                     {"methods", std::move(methods)},
                     {"jobs", std::move(jobs)},
                     {"outputs", std::move(outputs)}};
  write_text(dir / "manifest.json", result.manifest.dump(2) + "\n");
  return result;
}

std::vector<std::pair<std::string, long>> method_costs(const json& manifest) {
  std::vector<std::pair<std::string, long>> out;
  for (const auto& m : manifest.at("methods")) out.emplace_back(m.at("id").get<std::string>(), m.at("cost").get<long>());
  return out;
}

namespace {

struct SavedRun {
  World world{1, 1, {}};
  std::map<std::string, SequenceSpec> sequences;
  json manifest;
};

SavedRun load_saved_run(const fs::path& run_dir) {
  SavedRun run;
  run.manifest = read_json(run_dir / "manifest.json");
  run.world = World::from_json(read_json(run_dir / "world.json"));
  for (const auto& s : read_json(run_dir / "sequences.json")) {
    SequenceSpec spec = SequenceSpec::from_json(s, run.world);
    run.sequences.emplace(spec.id, std::move(spec));
  }
  return run;
}

}  // namespace

std::vector<MetricsReport> recompute_metrics(const fs::path& run_dir) {
  const SavedRun run = load_saved_run(run_dir);
  const Embedder embed(run.world.dim());
  std::vector<MetricsReport> out;
  for (const auto& job : run.manifest.at("jobs")) {
    if (job.at("status") != "ok") continue;
    const RunLog log = RunLog::from_json(read_json(run_dir / job.at("run_log").get<std::string>()));
    out.push_back(evaluate_sequence(job.at("method").get<std::string>(), log.best_samples,
                                    run.sequences.at(job.at("sequence_id").get<std::string>()), embed));
  }
  return out;
}

std::vector<AuditReport> audit_run_dir(const fs::path& run_dir) {
  const json manifest = read_json(run_dir / "manifest.json");
  std::vector<AuditReport> out;
  for (const auto& job : manifest.at("jobs")) {
    if (job.at("status") != "ok") continue;
    AuditReport report = complexity_audit(RunLog::from_json(read_json(run_dir / job.at("run_log").get<std::string>())));
    report.method = job.at("method").get<std::string>();
    out.push_back(std::move(report));
  }
  return out;
}

const AblationRow* AblationReport::find(const std::string& label) const {
  for (const auto& r : rows)
    if (r.label == label) return &r;
  return nullptr;
}

std::string AblationReport::to_csv() const {
  std::string out = "sequence_id,setting,m,denoiser_calls,best_score,clip_i,dino_i,clip_t,clip_star,dino_star,"
                    "goal_faithfulness,step_faithfulness,cross_image_consistency\n";
  for (const auto& r : rows) {
    const auto& mr = r.metrics;
    out += sequence_id + "," + r.label + "," + std::to_string(r.m) + "," + std::to_string(r.denoiser_calls) + "," +
           csv_number(r.best_score) + "," + csv_number(mr.clip_i.clipped) + "," + csv_number(mr.dino_i.clipped) +
           "," + csv_number(mr.clip_t.clipped) + "," + csv_number(mr.clip_star) + "," + csv_number(mr.dino_star) +
           "," + csv_number(mr.faith.goal) + "," + csv_number(mr.faith.step) + "," + csv_number(mr.faith.cross) +
           "\n";
  }
  return out;
}

json AblationReport::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    rows_json.push_back({{"setting", r.label},
                         {"m", r.m},
                         {"denoiser_calls", r.denoiser_calls},
                         {"best_score", r.best_score},
                         {"clip_star", r.metrics.clip_star},
                         {"dino_star", r.metrics.dino_star},
                         {"goal_faithfulness", r.metrics.faith.goal},
                         {"cross_image_consistency", r.metrics.faith.cross}});
  }
  return {{"sequence_id", sequence_id}, {"rows", std::move(rows_json)}};
}

AblationReport latent_history_ablation(const World& world, const SequenceSpec& spec, const BeamConfig& base,
                                       const std::vector<int>& steps_back, const ScoreModel& model, int workers) {
  if (steps_back.empty()) throw Error(ErrorKind::empty_set, "no steps-back settings to compare");
  const Backend backend = make_backend(world, workers);
  const Embedder embed(world.dim());
  const int all = std::max(1, static_cast<int>(spec.steps.size()) - 1);
  AblationReport report;
  report.sequence_id = spec.id;
  for (int m : steps_back) {
    if (m < 0) throw Error(ErrorKind::invalid_range, "steps back must be >= 0 (0 = all)");
    BeamConfig config = base;
    config.m = m == 0 ? all : m;
    const DecodeResult result = decode_sequence(spec, config, backend, model);
    AblationRow row;
    row.label = m == 0 ? "m=all" : "m=" + std::to_string(m);
    row.m = config.m;
    row.denoiser_calls = result.log.denoiser_calls();
    row.best_score = result.log.best_score;
    row.metrics = evaluate_sequence(row.label, result.log.best_samples, spec, embed);
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace beamlat
