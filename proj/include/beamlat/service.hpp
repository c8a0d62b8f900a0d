#pragma once

// HTTP API for the pairwise annotation tournament.
//
//   GET  /api/tournament   full state
//   GET  /api/pairing      {pairing_id, left/right: {config_id, sequence_assets[]}, step_texts[], remaining}
//                          or {champion} once finished
//   POST /api/verdict      {pairing_id, verdict, rater} -> state; 409 on a stale pairing
//   GET  /assets/<id>.svg  rendered frame or sequence
//   GET  /api/agreement    {kappa (null below 2 raters), items, raters_per_pairing}
//
// Every accepted verdict is appended to the journal before it is applied.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"

#include "beamlat/tournament.hpp"

namespace beamlat {

struct ServiceOptions {
  std::filesystem::path run_dir;
  std::filesystem::path journal;
  int raters_per_pairing = 1;
  std::optional<std::filesystem::path> ui_dir;
};

class AnnotationService {
 public:
  // Loads the run manifest and opens (or replays) the journal.
  explicit AnnotationService(ServiceOptions options);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  // Binds to host:port (port 0 picks a free port); throws io on failure.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void listen();
  void stop();

  nlohmann::json state() const;
  nlohmann::json pairing() const;
  nlohmann::json agreement() const;
  // Returns the HTTP status: 200, 400 or 409.
  int submit(const nlohmann::json& body, nlohmann::json& reply);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace beamlat
