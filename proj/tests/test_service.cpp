#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <thread>

#include "httplib.h"

#include "beamlat/experiment.hpp"
#include "beamlat/service.hpp"
#include "test_support.hpp"

using namespace beamlat;
using beamlat::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path make_run(const TempDir& tmp) {
  const json j = {
      {"world", {{"synthetic", {{"d", 16}, {"tokens", 3}, {"components", 2}, {"seed", 5}, {"T", 20}}}}},
      {"sequences", {{{"id", "s0"}, {"goal", "g"}, {"steps", {{{"token", "t0"}}, {{"token", "t1"}}}}}}},
      {"methods",
       {{{"id", "wide"}, {"method", "beam"}, {"config", {{"w", 2}, {"r", 2}}}},
        {{"id", "narrow"}, {"method", "beam"}, {"config", {{"w", 1}, {"r", 1}}}},
        {{"id", "greedy"}, {"method", "greedy"}, {"config", {{"r", 1}}}}}},
      {"output", "run"},
      {"master_seed", 4},
      {"render", "heatmap"}};
  return run_experiment(ExperimentConfig::from_json(j, tmp.path())).dir;
}

// Runs a service on a free port for the lifetime of the object.
struct Running {
  AnnotationService service;
  int port;
  std::thread thread;

  explicit Running(ServiceOptions options) : service(std::move(options)), port(service.bind("127.0.0.1", 0)) {
    thread = std::thread([this] { service.listen(); });
  }
  ~Running() {
    service.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_connection_timeout(5);
    return c;
  }
};

json get_json(httplib::Client& c, const std::string& path) {
  const auto res = c.Get(path);
  REQUIRE(res);
  REQUIRE(res->status == 200);
  return json::parse(res->body);
}

httplib::Result post_verdict(httplib::Client& c, const std::string& id, const std::string& verdict,
                             const std::string& rater) {
  const json body = {{"pairing_id", id}, {"verdict", verdict}, {"rater", rater}};
  return c.Post("/api/verdict", body.dump(), "application/json");
}

}  // namespace

TEST_CASE("pairing payload, verdicts and stale submissions") {
  TempDir tmp("svc");
  const fs::path run = make_run(tmp);
  Running server(ServiceOptions{run, tmp / "journal.jsonl", 1, std::nullopt});
  auto c = server.client();

  const json p = get_json(c, "/api/pairing");
  CHECK(p.at("pairing_id") == "p1");
  CHECK(p.at("remaining") == 2);
  CHECK(p.at("step_texts").size() == 2);
  const json& left = p.at("left");
  CHECK(left.at("sequence_id") == "s0");
  REQUIRE(left.at("sequence_assets").size() == 2);
  CHECK(p.at("left").at("config_id") != p.at("right").at("config_id"));

  const std::string asset = left.at("sequence_assets")[0];
  const auto svg = c.Get(asset);
  REQUIRE(svg);
  CHECK(svg->status == 200);
  CHECK(svg->get_header_value("Content-Type") == "image/svg+xml");
  CHECK(svg->body.rfind("<svg", 0) == 0);
  const auto missing = c.Get("/assets/nothing__here.svg");
  REQUIRE(missing);
  CHECK(missing->status == 404);

  const auto ok = post_verdict(c, "p1", "FIRST", "alice");
  REQUIRE(ok);
  CHECK(ok->status == 200);
  const auto stale = post_verdict(c, "p1", "SECOND", "alice");
  REQUIRE(stale);
  CHECK(stale->status == 409);
  const auto bad = post_verdict(c, "p2", "MAYBE", "alice");
  REQUIRE(bad);
  CHECK(bad->status == 400);
  const auto junk = c.Post("/api/verdict", "{", "application/json");
  REQUIRE(junk);
  CHECK(junk->status == 400);

  CHECK(get_json(c, "/api/pairing").at("pairing_id") == "p2");
}

TEST_CASE("restart replays the journal") {
  TempDir tmp("svc_restart");
  const fs::path run = make_run(tmp);
  const ServiceOptions options{run, tmp / "journal.jsonl", 1, std::nullopt};
  json before;
  {
    Running server(options);
    auto c = server.client();
    REQUIRE(post_verdict(c, "p1", "BOTH_BAD", "r")->status == 200);
    before = get_json(c, "/api/tournament");
  }
  Running again(options);
  auto c = again.client();
  CHECK(get_json(c, "/api/tournament") == before);
  REQUIRE(post_verdict(c, "p2", "SECOND", "r")->status == 200);
  const json done = get_json(c, "/api/pairing");
  CHECK(done.contains("champion"));
  CHECK(done.at("remaining") == 0);
}

TEST_CASE("two raters in full agreement") {
  TempDir tmp("svc_kappa");
  const fs::path run = make_run(tmp);
  Running server(ServiceOptions{run, tmp / "journal.jsonl", 2, std::nullopt});
  auto c = server.client();
  const char* verdicts[] = {"FIRST", "BOTH_GOOD"};
  for (const char* v : verdicts) {
    const std::string id = get_json(c, "/api/pairing").at("pairing_id");
    REQUIRE(post_verdict(c, id, v, "a")->status == 200);
    REQUIRE(post_verdict(c, id, v, "b")->status == 200);
  }
  const json a = get_json(c, "/api/agreement");
  CHECK(a.at("kappa") == doctest::Approx(1.0));
  CHECK(a.at("items") == 2);
  CHECK(a.at("raters_per_pairing") == 2);
}

TEST_CASE("agreement is null with one rater") {
  TempDir tmp("svc_one");
  const fs::path run = make_run(tmp);
  Running server(ServiceOptions{run, tmp / "journal.jsonl", 1, std::nullopt});
  auto c = server.client();
  CHECK(get_json(c, "/api/agreement").at("kappa").is_null());
}
