#include "beamlat/service.hpp"

#include <fstream>
#include <mutex>
#include <sstream>

#include "httplib.h"

#include "beamlat/error.hpp"
#include "beamlat/experiment.hpp"

namespace beamlat {

using nlohmann::json;
namespace fs = std::filesystem;

struct AnnotationService::Impl {
  ServiceOptions options;
  json manifest;
  TournamentJournal journal;
  Tournament tournament;
  mutable std::mutex mutex;
  httplib::Server server;

  Impl(ServiceOptions opts, json m, std::vector<Contender> contenders)
      : options(std::move(opts)),
        manifest(std::move(m)),
        journal(options.journal),
        tournament(journal.open(contenders, options.raters_per_pairing)) {}

  json sequence_for_round(std::size_t round) const {
    const json& seqs = manifest.at("sequences");
    if (seqs.empty()) return json::object();
    return seqs.at((round - 1) % seqs.size());
  }

  json side(const std::string& config_id, const json& sequence) const {
    json assets = json::array();
    const std::string seq_id = sequence.value("id", std::string());
    const std::size_t steps = sequence.value("steps", json::array()).size();
    for (std::size_t j = 1; j <= steps; ++j)
      assets.push_back("/assets/" + asset_name(config_id, seq_id, static_cast<int>(j)) + ".svg");
    return {{"config_id", config_id}, {"sequence_id", seq_id}, {"sequence_assets", std::move(assets)}};
  }

  json pairing_locked() const {
    const auto open = tournament.next_pairing();
    if (!open) return {{"champion", *tournament.champion()}, {"remaining", 0}};
    const json sequence = sequence_for_round(open->round);
    return {{"pairing_id", open->id},
            {"left", side(open->left, sequence)},
            {"right", side(open->right, sequence)},
            {"step_texts", sequence.value("steps", json::array())},
            {"goal", sequence.value("goal", std::string())},
            {"remaining", tournament.remaining_pairings()},
            {"verdicts_needed", tournament.raters_per_pairing() - static_cast<int>(tournament.open_verdicts().size())}};
  }

  json agreement_locked() const {
    const auto kappa = tournament.agreement();
    return {{"kappa", kappa ? json(*kappa) : json(nullptr)},
            {"items", tournament.raters_per_pairing() >= 2 ? tournament.results().size() : 0},
            {"raters_per_pairing", tournament.raters_per_pairing()}};
  }
};

namespace {

std::vector<Contender> contenders_from(const json& manifest) {
  std::vector<Contender> out;
  for (const auto& [id, cost] : method_costs(manifest)) out.push_back(Contender{id, cost});
  return out;
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

}  // namespace

AnnotationService::AnnotationService(ServiceOptions options) {
  json manifest = read_json(options.run_dir / "manifest.json");
  auto contenders = contenders_from(manifest);
  impl_ = std::make_unique<Impl>(std::move(options), std::move(manifest), std::move(contenders));

  auto& server = impl_->server;
  server.Get("/api/tournament", [this](const httplib::Request&, httplib::Response& res) { send_json(res, state()); });
  server.Get("/api/pairing", [this](const httplib::Request&, httplib::Response& res) { send_json(res, pairing()); });
  server.Get("/api/agreement",
             [this](const httplib::Request&, httplib::Response& res) { send_json(res, agreement()); });
  server.Post("/api/verdict", [this](const httplib::Request& req, httplib::Response& res) {
    json reply;
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception& e) {
      send_json(res, {{"error", std::string("malformed body: ") + e.what()}}, 400);
      return;
    }
    const int status = submit(body, reply);
    send_json(res, reply, status);
  });
  server.Get(R"(/assets/([A-Za-z0-9_\-]+(?:\.[A-Za-z0-9_\-]+)*)\.svg)",
             [this](const httplib::Request& req, httplib::Response& res) {
               const std::string id = req.matches[1];
               if (!safe_id(id)) {
                 send_json(res, {{"error", "bad asset id"}}, 400);
                 return;
               }
               std::ifstream in(impl_->options.run_dir / "assets" / (id + ".svg"), std::ios::binary);
               if (!in) {
                 send_json(res, {{"error", "no asset " + id}}, 404);
                 return;
               }
               std::ostringstream body;
               body << in.rdbuf();
               res.set_content(body.str(), "image/svg+xml");
             });
  if (impl_->options.ui_dir) server.set_mount_point("/", impl_->options.ui_dir->string());
}

AnnotationService::~AnnotationService() { stop(); }

int AnnotationService::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port) + " (port in use?)");
  return bound;
}

void AnnotationService::listen() { impl_->server.listen_after_bind(); }

void AnnotationService::stop() {
  if (impl_) impl_->server.stop();
}

json AnnotationService::state() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->tournament.to_json();
}

json AnnotationService::pairing() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->pairing_locked();
}

json AnnotationService::agreement() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->agreement_locked();
}

int AnnotationService::submit(const json& body, json& reply) {
  std::string pairing_id;
  std::string rater;
  Verdict verdict;
  try {
    pairing_id = body.at("pairing_id").get<std::string>();
    verdict = parse_verdict(body.at("verdict").get<std::string>());
    rater = body.value("rater", std::string("anonymous"));
  } catch (const std::exception& e) {
    reply = {{"error", e.what()}};
    return 400;
  }

  std::lock_guard lock(impl_->mutex);
  Tournament next = impl_->tournament;
  try {
    next.record_verdict(pairing_id, verdict, rater);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::stale_pairing) throw;
    reply = impl_->tournament.to_json();
    reply["error"] = e.what();
    return 409;
  }
  impl_->journal.append(VerdictRecord{pairing_id, verdict, rater});
  impl_->tournament = std::move(next);
  reply = impl_->tournament.to_json();
  return 200;
}

}  // namespace beamlat
