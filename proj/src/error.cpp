#include "beamlat/error.hpp"

namespace beamlat {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_range: return "invalid-range";
    case ErrorKind::dimension_mismatch: return "dimension-mismatch";
    case ErrorKind::schedule_position: return "schedule-position";
    case ErrorKind::numerical_underflow: return "numerical-underflow";
    case ErrorKind::backend_failure: return "backend-failure";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::missing_latent: return "missing-latent";
    case ErrorKind::empty_history: return "empty-history";
    case ErrorKind::empty_candidates: return "empty-candidates";
    case ErrorKind::insufficient_corpus: return "insufficient-corpus";
    case ErrorKind::bound_exceeded: return "bound-exceeded";
    case ErrorKind::single_image: return "single-image";
    case ErrorKind::empty_set: return "empty-set";
    case ErrorKind::degenerate: return "degenerate";
    case ErrorKind::malformed_log: return "malformed-log";
    case ErrorKind::mode_mismatch: return "mode-mismatch";
    case ErrorKind::stale_pairing: return "stale-pairing";
    case ErrorKind::journal_corruption: return "journal-corruption";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace beamlat
