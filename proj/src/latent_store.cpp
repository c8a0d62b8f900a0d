#include "beamlat/latent_store.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "beamlat/csv.hpp"
#include "beamlat/error.hpp"

namespace beamlat {

std::vector<LatentRef> LatentCache::record_trajectory(const BeamId& beam, int step_index,
                                                      const TrajectoryRecord& record,
                                                      std::span<const int> latent_indices) {
  if (latent_indices.empty()) return {};
  if (step_index < 1) throw Error(ErrorKind::invalid_range, "step index must be >= 1");
  auto entry = std::make_shared<StepLatents>();
  entry->step_index = step_index;
  entry->beam_id = beam.to_string();
  entry->seed = record.seed;
  std::vector<LatentRef> refs;
  for (int index : latent_indices) {
    if (index < 0 || index >= static_cast<int>(record.stored_latents.size())) {
      std::ostringstream msg;
      msg << "latent index " << index << " not recorded (step " << step_index << " stored "
          << record.stored_latents.size() << ")";
      throw Error(ErrorKind::missing_latent, msg.str());
    }
    entry->latent_indices.push_back(index);
    entry->latents.push_back(record.stored_latents[static_cast<std::size_t>(index)]);
    refs.push_back(LatentRef{step_index, entry->beam_id, index, record.seed});
  }

  std::erase_if(steps_, [&](const auto& s) {
    return s->step_index == step_index || s->step_index <= step_index - retain_steps_;
  });
  steps_.push_back(std::move(entry));
  std::sort(steps_.begin(), steps_.end(),
            [](const auto& a, const auto& b) { return a->step_index < b->step_index; });
  return refs;
}

const LatentCache::StepLatents* LatentCache::step(int step_index) const {
  for (const auto& s : steps_)
    if (s->step_index == step_index) return s.get();
  return nullptr;
}

bool LatentCache::has_step(int step_index) const { return step(step_index) != nullptr; }

std::vector<int> LatentCache::steps() const {
  std::vector<int> out;
  for (const auto& s : steps_) out.push_back(s->step_index);
  return out;
}

Seed random_entry_seed(Seed master, int j, const BeamId& beam, int k) noexcept {
  return derive_seed(master, {0x52414e44ULL, static_cast<std::uint64_t>(j), beam.key(),
                              static_cast<std::uint64_t>(k)});
}

LatentPool gather_latent_pool(const LatentCache& cache, const BeamId& beam, int j, int m,
                              std::span<const int> latent_indices, int n_random, Seed master) {
  if (j < 2) throw Error(ErrorKind::empty_history, "step 1 has no prior latents");
  if (m < 1) throw Error(ErrorKind::invalid_range, "steps back must be >= 1");
  std::vector<int> indices(latent_indices.begin(), latent_indices.end());
  std::sort(indices.begin(), indices.end());

  LatentPool pool;
  for (int donor = std::max(1, j - m); donor <= j - 1; ++donor) {
    const auto* step = cache.step(donor);
    if (!step)
      throw Error(ErrorKind::missing_latent,
                  "beam " + beam.to_string() + " holds no latents for step " + std::to_string(donor));
    for (int index : indices) {
      const auto it = std::find(step->latent_indices.begin(), step->latent_indices.end(), index);
      if (it == step->latent_indices.end())
        throw Error(ErrorKind::missing_latent, "step " + std::to_string(donor) +
                                                   " did not keep latent " + std::to_string(index));
      const auto& latent = step->latents[static_cast<std::size_t>(it - step->latent_indices.begin())];
      pool.entries.push_back(PoolEntry{LatentRef{donor, step->beam_id, index, step->seed},
                                       DonorLatent{latent, step->seed}});
    }
  }
  const std::string id = beam.to_string();
  for (int k = 0; k < n_random; ++k) {
    const Seed seed = random_entry_seed(master, j, beam, k);
    pool.entries.push_back(PoolEntry{LatentRef{j, id, kRandomSeed, seed}, FreshNoise{seed}});
  }
  return pool;
}

const ProvenanceRow* ProvenanceTable::find(const std::string& category) const {
  for (const auto& r : rows)
    if (r.category == category) return &r;
  return nullptr;
}

std::string ProvenanceTable::to_csv() const {
  std::string out = "category,selections,opportunities,rate_pct\n";
  for (const auto& r : rows) {
    out += r.category + "," + std::to_string(r.selections) + "," + std::to_string(r.opportunities) +
           "," + csv_number(r.rate_pct) + "\n";
  }
  return out;
}

ProvenanceTable provenance_stats(std::span<const ChoiceRecord> log) {
  struct Count {
    long selections = 0;
    long opportunities = 0;
  };
  std::map<int, Count> by_step;
  std::map<int, Count> by_offset;
  std::map<int, Count> by_index;
  Count random;
  bool random_seen = false;

  for (const auto& rec : log) {
    const int j = rec.target_step;
    const int first = std::max(1, j - std::max(1, rec.steps_back));
    const bool has_donors = first <= j - 1;
    for (int donor = first; donor <= j - 1; ++donor) {
      ++by_step[donor].opportunities;
      ++by_offset[j - donor].opportunities;
    }
    const std::set<int> indices(rec.latent_indices.begin(), rec.latent_indices.end());
    if (has_donors)
      for (int index : indices) ++by_index[index].opportunities;
    if (rec.n_random > 0) {
      ++random.opportunities;
      random_seen = true;
    }

    if (rec.chosen.is_random()) {
      ++random.selections;
      random_seen = true;
    } else {
      ++by_step[rec.chosen.step_index].selections;
      ++by_offset[j - rec.chosen.step_index].selections;
      ++by_index[rec.chosen.latent_index].selections;
    }
  }

  ProvenanceTable table;
  auto emit = [&](const std::string& name, const Count& c) {
    const double rate = c.opportunities > 0 ? 100.0 * static_cast<double>(c.selections) /
                                                  static_cast<double>(c.opportunities)
                                            : 0.0;
    table.rows.push_back(ProvenanceRow{name, c.selections, c.opportunities, rate});
  };
  for (const auto& [k, c] : by_step) emit("step:" + std::to_string(k), c);
  for (const auto& [o, c] : by_offset) emit("offset:" + std::to_string(o), c);
  for (const auto& [i, c] : by_index) emit("latent:" + std::to_string(i), c);
  if (random_seen || !log.empty()) emit("random", random);
  return table;
}

}  // namespace beamlat
