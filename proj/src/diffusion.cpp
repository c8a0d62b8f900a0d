#include "beamlat/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "beamlat/error.hpp"
#include "beamlat/kernels.hpp"

namespace beamlat {

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1 || !(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    std::ostringstream msg;
    msg << "schedule requires T >= 1 and 0 < beta_start <= beta_end < 1 (got T=" << steps
        << ", beta_start=" << beta_start << ", beta_end=" << beta_end << ")";
    throw Error(ErrorKind::invalid_range, msg.str());
  }
  std::vector<double> alpha_bar(static_cast<std::size_t>(steps) + 1);
  alpha_bar[0] = 1.0;
  for (int i = 1; i <= steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i - 1) / (steps - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    alpha_bar[i] = alpha_bar[i - 1] * (1.0 - beta);
  }
  return NoiseSchedule(std::move(alpha_bar));
}

NoiseSchedule NoiseSchedule::from_alpha_bar(std::vector<double> alpha_bar) {
  if (alpha_bar.size() < 2 || alpha_bar[0] != 1.0 || !(alpha_bar.back() > 0.0))
    throw Error(ErrorKind::invalid_range, "alpha_bar must start at 1 and end above 0");
  for (std::size_t i = 1; i < alpha_bar.size(); ++i)
    if (!(alpha_bar[i] < alpha_bar[i - 1]))
      throw Error(ErrorKind::invalid_range, "alpha_bar must be strictly decreasing");
  return NoiseSchedule(std::move(alpha_bar));
}

double NoiseSchedule::alpha_bar(int timestep) const {
  if (timestep < 0 || timestep > steps())
    throw Error(ErrorKind::schedule_position, "timestep " + std::to_string(timestep) +
                                                  " outside [0, " + std::to_string(steps()) + "]");
  return alpha_bar_[static_cast<std::size_t>(timestep)];
}

NoiseSchedule build_schedule(int steps, double beta_start, double beta_end) {
  return NoiseSchedule::linear(steps, beta_start, beta_end);
}

void MixtureModel::validate() const {
  if (components.empty()) throw Error(ErrorKind::invalid_range, "mixture has no components");
  const std::size_t d = dim();
  double total = 0.0;
  for (const auto& c : components) {
    if (!(c.weight > 0.0) || !std::isfinite(c.weight))
      throw Error(ErrorKind::invalid_range, "mixture weights must be positive");
    if (c.mean.size() != d || c.var.size() != d)
      throw Error(ErrorKind::dimension_mismatch, "mixture component dimension differs");
    for (double v : c.var)
      if (!(v > 0.0) || !std::isfinite(v))
        throw Error(ErrorKind::invalid_range, "mixture variances must be positive");
    total += c.weight;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw Error(ErrorKind::invalid_range, "mixture weights must sum to 1");
}

std::vector<double> MixtureModel::sample(Rng& rng, std::size_t* component) const {
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double u = uniform(rng);
  std::size_t pick = components.size() - 1;
  double acc = 0.0;
  for (std::size_t c = 0; c < components.size(); ++c) {
    acc += components[c].weight;
    if (u < acc) {
      pick = c;
      break;
    }
  }
  if (component) *component = pick;
  std::vector<double> out = gaussian_vector(rng, dim());
  const auto& comp = components[pick];
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = comp.mean[i] + std::sqrt(comp.var[i]) * out[i];
  return out;
}

LatentState forward_noise_with(std::span<const double> x0, int timestep,
                               const NoiseSchedule& schedule, std::span<const double> eps) {
  if (eps.size() != x0.size())
    throw Error(ErrorKind::dimension_mismatch, "noise and x0 lengths differ");
  const double ab = schedule.alpha_bar(timestep);
  const double signal = std::sqrt(ab);
  const double noise = std::sqrt(1.0 - ab);
  LatentState out{std::vector<double>(x0.size()), schedule.steps() - timestep, ab};
  for (std::size_t i = 0; i < x0.size(); ++i) out.vector[i] = signal * x0[i] + noise * eps[i];
  return out;
}

LatentState forward_noise(std::span<const double> x0, int timestep, const NoiseSchedule& schedule,
                          Rng& rng) {
  const std::vector<double> eps = gaussian_vector(rng, x0.size());
  return forward_noise_with(x0, timestep, schedule, eps);
}

std::vector<double> exact_posterior_mean(const LatentState& xt, const MixtureModel& mixture) {
  const std::size_t d = xt.vector.size();
  if (mixture.dim() != d)
    throw Error(ErrorKind::dimension_mismatch, "latent and mixture dimensions differ");
  const double ab = xt.noise_level;
  if (!(ab > 0.0 && ab <= 1.0))
    throw Error(ErrorKind::invalid_range, "noise level must lie in (0, 1]");
  const double s = std::sqrt(ab);

  const std::size_t n = mixture.components.size();
  std::vector<double> log_resp(n);
  std::vector<std::vector<double>> inv_marginal(n, std::vector<double>(d));
  for (std::size_t c = 0; c < n; ++c) {
    const auto& comp = mixture.components[c];
    double log_det = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double v = ab * comp.var[i] + (1.0 - ab);
      inv_marginal[c][i] = 1.0 / v;
      log_det += std::log(v);
    }
    const double quad = kernels::weighted_sq_dist(xt.vector, comp.mean, s, inv_marginal[c]);
    log_resp[c] = std::log(comp.weight) - 0.5 * (quad + log_det);
  }

  const double peak = *std::max_element(log_resp.begin(), log_resp.end());
  double total = 0.0;
  for (double& lr : log_resp) {
    lr = std::exp(lr - peak);
    total += lr;
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw Error(ErrorKind::numerical_underflow, "all mixture responsibilities vanished");

  std::vector<double> out(d, 0.0);
  std::vector<double> comp_mean(d);
  for (std::size_t c = 0; c < n; ++c) {
    const double r = log_resp[c] / total;
    if (r == 0.0) continue;
    const auto& comp = mixture.components[c];
    for (std::size_t i = 0; i < d; ++i) {
      const double gain = comp.var[i] * s * inv_marginal[c][i];
      comp_mean[i] = comp.mean[i] + gain * (xt.vector[i] - s * comp.mean[i]);
    }
    kernels::axpy(r, comp_mean, out);
  }
  return out;
}

LatentState reverse_step(const LatentState& xt, std::span<const double> x0_hat,
                         const NoiseSchedule& schedule) {
  const int T = schedule.steps();
  if (xt.iteration < 0 || xt.iteration >= T)
    throw Error(ErrorKind::schedule_position,
                "latent at iteration " + std::to_string(xt.iteration) + " cannot be advanced");
  if (x0_hat.size() != xt.vector.size())
    throw Error(ErrorKind::dimension_mismatch, "x0 estimate and latent lengths differ");
  const double ab = xt.noise_level;
  const double ab_next = schedule.level_at_iteration(xt.iteration + 1);
  const double s = std::sqrt(ab);
  const double inv_noise = 1.0 / std::sqrt(1.0 - ab);
  const double s_next = std::sqrt(ab_next);
  const double noise_next = std::sqrt(1.0 - ab_next);

  LatentState out{std::vector<double>(xt.vector.size()), xt.iteration + 1, ab_next};
  for (std::size_t i = 0; i < out.vector.size(); ++i) {
    const double eps_hat = (xt.vector[i] - s * x0_hat[i]) * inv_noise;
    out.vector[i] = s_next * x0_hat[i] + noise_next * eps_hat;
  }
  return out;
}

ExactMixtureDenoiser::ExactMixtureDenoiser(std::map<std::string, MixtureModel> mixtures)
    : mixtures_(std::move(mixtures)) {
  for (const auto& [token, mixture] : mixtures_) mixture.validate();
}

std::vector<double> ExactMixtureDenoiser::predict_x0(const LatentState& xt,
                                                     const Condition& condition) const {
  const auto it = mixtures_.find(condition.token);
  if (it == mixtures_.end())
    throw Error(ErrorKind::backend_failure, "no mixture for token '" + condition.token + "'");
  return exact_posterior_mean(xt, it->second);
}

LatentState fresh_noise(Seed seed, std::size_t dim, const NoiseSchedule& schedule) {
  return LatentState{gaussian_vector(seed, dim), 0, schedule.level_at_iteration(0)};
}

TrajectoryRecord run_denoise(const Condition& condition, const DenoiseStart& start,
                             const NoiseSchedule& schedule, const Denoiser& denoiser, int n_store) {
  TrajectoryRecord record;
  record.condition = condition;
  LatentState state;
  if (const auto* fresh = std::get_if<FreshNoise>(&start)) {
    record.seed = fresh->seed;
    state = fresh_noise(fresh->seed, condition.embedding.size(), schedule);
  } else {
    const auto& donor = std::get<DonorLatent>(start);
    record.seed = donor.donor_seed;
    state = donor.latent;
    if (state.iteration < 0 || state.iteration >= schedule.steps())
      throw Error(ErrorKind::schedule_position,
                  "donor latent iteration " + std::to_string(state.iteration) +
                      " outside [0, " + std::to_string(schedule.steps()) + ")");
    state.noise_level = schedule.level_at_iteration(state.iteration);
  }
  record.start_iteration = state.iteration;
  if (n_store > 0) record.stored_latents.reserve(static_cast<std::size_t>(n_store));

  const int T = schedule.steps();
  while (state.iteration < T) {
    std::vector<double> x0_hat;
    try {
      x0_hat = denoiser.predict_x0(state, condition);
    } catch (const std::exception& e) {
      std::ostringstream msg;
      msg << "denoiser failed (token=" << condition.token << ", seed=" << record.seed
          << ", start=" << record.start_iteration << ", iteration=" << state.iteration
          << "): " << e.what();
      throw Error(ErrorKind::backend_failure, msg.str());
    }
    state = reverse_step(state, x0_hat, schedule);
    ++record.reverse_steps;
    if (static_cast<int>(record.stored_latents.size()) < n_store)
      record.stored_latents.push_back(state);
  }
  record.final_sample = std::move(state.vector);
  return record;
}

}  // namespace beamlat
