#pragma once

// Forward/reverse diffusion over d-dimensional latent vectors.
//
// Indexing: a schedule of T iterations stores alpha_bar[0..T] with
// alpha_bar[0] = 1 (data end) and alpha_bar[T] the noise end. A latent that
// has completed `iteration` reverse iterations (0 = fresh noise) sits at
// timestep T - iteration. The decoder is the identity, so a final latent is
// the generated sample.

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "beamlat/seed.hpp"

namespace beamlat {

class NoiseSchedule {
 public:
  // Linear beta schedule, beta_i interpolated over i = 1..T.
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);
  // Explicit alpha_bar[0..T]; must start at 1, strictly decrease, stay > 0.
  static NoiseSchedule from_alpha_bar(std::vector<double> alpha_bar);

  int steps() const noexcept { return static_cast<int>(alpha_bar_.size()) - 1; }
  double alpha_bar(int timestep) const;
  double level_at_iteration(int iteration) const { return alpha_bar(steps() - iteration); }
  std::span<const double> alpha_bars() const noexcept { return alpha_bar_; }

 private:
  explicit NoiseSchedule(std::vector<double> a) : alpha_bar_(std::move(a)) {}
  std::vector<double> alpha_bar_;
};

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end);

struct LatentState {
  std::vector<double> vector;
  int iteration = 0;
  double noise_level = 1.0;
};

struct Condition {
  std::string token;
  std::vector<double> embedding;
  std::string text;
};

struct MixtureComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> var;
};

struct MixtureModel {
  std::vector<MixtureComponent> components;

  std::size_t dim() const noexcept {
    return components.empty() ? 0 : components.front().mean.size();
  }
  // Throws invalid_range / dimension_mismatch.
  void validate() const;
  std::vector<double> sample(Rng& rng, std::size_t* component = nullptr) const;
};

struct TrajectoryRecord {
  Condition condition;
  Seed seed = 0;
  int start_iteration = 0;
  // Outputs of the first n_store reverse iterations of this run, in order.
  std::vector<LatentState> stored_latents;
  std::vector<double> final_sample;
  int reverse_steps = 0;
};

// x_k = sqrt(ab_k) x0 + sqrt(1 - ab_k) eps, eps ~ N(0, I) from rng.
LatentState forward_noise(std::span<const double> x0, int timestep, const NoiseSchedule& schedule,
                          Rng& rng);
LatentState forward_noise_with(std::span<const double> x0, int timestep,
                               const NoiseSchedule& schedule, std::span<const double> eps);

// E[x0 | x_t] under a diagonal Gaussian mixture prior, responsibilities in log space.
std::vector<double> exact_posterior_mean(const LatentState& xt, const MixtureModel& mixture);

// Deterministic (eta = 0) update to the next, less noisy level.
LatentState reverse_step(const LatentState& xt, std::span<const double> x0_hat,
                         const NoiseSchedule& schedule);

class Denoiser {
 public:
  virtual ~Denoiser() = default;
  // Must be safe to call concurrently.
  virtual std::vector<double> predict_x0(const LatentState& xt, const Condition& condition) const = 0;
};

class ExactMixtureDenoiser final : public Denoiser {
 public:
  explicit ExactMixtureDenoiser(std::map<std::string, MixtureModel> mixtures);

  std::vector<double> predict_x0(const LatentState& xt, const Condition& condition) const override;

 private:
  std::map<std::string, MixtureModel> mixtures_;
};

struct FreshNoise {
  Seed seed = 0;
};

struct DonorLatent {
  LatentState latent;
  Seed donor_seed = 0;
};

using DenoiseStart = std::variant<FreshNoise, DonorLatent>;

LatentState fresh_noise(Seed seed, std::size_t dim, const NoiseSchedule& schedule);

// Runs reverse iterations from `start` to T under `condition`.
TrajectoryRecord run_denoise(const Condition& condition, const DenoiseStart& start,
                             const NoiseSchedule& schedule, const Denoiser& denoiser, int n_store);

}  // namespace beamlat
