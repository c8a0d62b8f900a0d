#pragma once

// Single-path decoders over the beam engine's candidate machinery. Both use
// the previous step's latents only (m = 1) and rank candidates by prompt
// cosine, i.e. the prompt-only score model.

#include <span>
#include <vector>

#include "beamlat/beam.hpp"

namespace beamlat {

// Candidates kept by top-p: the smallest prefix of the probabilities sorted
// descending (ties by index) whose mass reaches p, renormalized.
struct NucleusSet {
  std::vector<std::size_t> members;
  std::vector<double> probabilities;
};

NucleusSet nucleus_set(std::span<const double> probabilities, double p);

// The width-1 beam configuration greedy decoding corresponds to.
BeamConfig greedy_equivalent(const BeamConfig& config);

// Per step: argmax prompt cosine, lowest candidate id on ties.
DecodeResult greedy_decode(const SequenceSpec& spec, const BeamConfig& config, const Backend& backend);

// Per step: one draw from the renormalized nucleus of softmax(prompt cosine),
// seeded from (master, j).
DecodeResult nucleus_decode(const SequenceSpec& spec, const BeamConfig& config, double p,
                            const Backend& backend);

Seed nucleus_step_seed(Seed master, int j) noexcept;

}  // namespace beamlat
