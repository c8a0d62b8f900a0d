#pragma once

// Per-beam cache of early denoising latents and the latent pool gathered from
// it when a beam is extended.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "beamlat/beam_id.hpp"
#include "beamlat/diffusion.hpp"

namespace beamlat {

inline constexpr int kRandomSeed = -1;

struct LatentRef {
  // Donor step for reused latents; the consuming step for fresh seeds.
  int step_index = 1;
  std::string beam_id;
  // Position in the donor's stored latents, or kRandomSeed.
  int latent_index = kRandomSeed;
  Seed donor_seed = 0;

  bool is_random() const noexcept { return latent_index == kRandomSeed; }
  friend bool operator==(const LatentRef&, const LatentRef&) = default;
};

struct PoolEntry {
  LatentRef ref;
  DenoiseStart start;
};

struct LatentPool {
  std::vector<PoolEntry> entries;
  std::size_t size() const noexcept { return entries.size(); }
};

// Latents kept for one beam. Copies share the underlying step records, so
// extending a beam copies only pointers.
class LatentCache {
 public:
  explicit LatentCache(int retain_steps = 1) : retain_steps_(retain_steps < 1 ? 1 : retain_steps) {}

  // Attaches the latents at `latent_indices` (positions in the record's stored
  // latents) to step `step_index` of this beam. Steps older than the
  // retention window are dropped.
  std::vector<LatentRef> record_trajectory(const BeamId& beam, int step_index,
                                           const TrajectoryRecord& record,
                                           std::span<const int> latent_indices);

  bool has_step(int step_index) const;
  std::vector<int> steps() const;
  int retain_steps() const noexcept { return retain_steps_; }

  struct StepLatents {
    int step_index;
    std::string beam_id;
    Seed seed;
    std::vector<int> latent_indices;
    std::vector<LatentState> latents;
  };
  const StepLatents* step(int step_index) const;

 private:
  int retain_steps_;
  std::vector<std::shared_ptr<const StepLatents>> steps_;
};

// Pool for step j of `beam`: latents at `latent_indices` from each of the last
// min(m, j-1) steps, ordered by donor step then index, followed by n_random
// fresh seeds derived from (master, j, beam, k).
LatentPool gather_latent_pool(const LatentCache& cache, const BeamId& beam, int j, int m,
                              std::span<const int> latent_indices, int n_random, Seed master);

Seed random_entry_seed(Seed master, int j, const BeamId& beam, int k) noexcept;

// One chosen latent on a finalized path, with the pool layout it was chosen
// from.
struct ChoiceRecord {
  int target_step = 2;
  LatentRef chosen;
  int steps_back = 1;
  std::vector<int> latent_indices;
  int n_random = 0;
};

struct ProvenanceRow {
  std::string category;
  long selections = 0;
  long opportunities = 0;
  double rate_pct = 0.0;
};

struct ProvenanceTable {
  std::vector<ProvenanceRow> rows;

  const ProvenanceRow* find(const std::string& category) const;
  std::string to_csv() const;
};

// Selections / opportunities per donor step ("step:k"), donor offset
// ("offset:o"), latent index ("latent:i") and "random".
ProvenanceTable provenance_stats(std::span<const ChoiceRecord> log);

}  // namespace beamlat
