#pragma once

#include <stdexcept>
#include <string>

namespace beamlat {

enum class ErrorKind {
  invalid_range,
  dimension_mismatch,
  schedule_position,
  numerical_underflow,
  backend_failure,
  divergence,
  missing_latent,
  empty_history,
  empty_candidates,
  insufficient_corpus,
  bound_exceeded,
  single_image,
  empty_set,
  degenerate,
  malformed_log,
  mode_mismatch,
  stale_pairing,
  journal_corruption,
  io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace beamlat
