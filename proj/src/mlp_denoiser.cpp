#include "beamlat/mlp_denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "beamlat/error.hpp"
#include "beamlat/kernels.hpp"

namespace beamlat {

namespace {

// log(a / (1 - a)) / 4: spreads the levels near a = 1 that a itself crowds
// together.
double noise_feature(double alpha_bar) { return 0.25 * std::log(alpha_bar / (1.0 - alpha_bar)); }

}  // namespace

MlpDenoiser::MlpDenoiser(std::size_t dim, std::size_t hidden)
    : dim_(dim), hidden_(hidden), params_(hidden * (2 * dim + 1) + hidden + dim * hidden + dim) {}

MlpDenoiser MlpDenoiser::initialize(std::size_t dim, std::size_t hidden, Seed seed,
                                    double data_scale, std::span<const double> data_mean) {
  if (dim == 0 || hidden == 0) throw Error(ErrorKind::invalid_range, "empty network shape");
  if (!(data_scale >= 0.0) || !std::isfinite(data_scale))
    throw Error(ErrorKind::invalid_range, "data scale must be finite and >= 0");
  MlpDenoiser net(dim, hidden);
  net.data_scale_ = data_scale;
  Rng rng(seed);
  const double bound1 = std::sqrt(6.0 / static_cast<double>(net.input_size() + hidden));
  const double bound2 = std::sqrt(6.0 / static_cast<double>(hidden + dim));
  std::uniform_real_distribution<double> u1(-bound1, bound1);
  std::uniform_real_distribution<double> u2(-bound2, bound2);
  for (std::size_t i = net.w1(); i < net.b1(); ++i) net.params_[i] = u1(rng);
  // Small output weights: the network starts near the linear posterior.
  for (std::size_t i = net.w2(); i < net.b2(); ++i) net.params_[i] = 0.1 * u2(rng);
  if (!data_mean.empty()) {
    if (data_mean.size() != dim) throw Error(ErrorKind::dimension_mismatch, "data mean has the wrong length");
    std::copy(data_mean.begin(), data_mean.end(), net.params_.begin() + static_cast<long>(net.b2()));
  }
  return net;
}

MlpDenoiser::Gains MlpDenoiser::gains(double alpha_bar) const {
  const double s2 = data_scale_ * data_scale_;
  const double denom = alpha_bar * s2 + 1.0 - alpha_bar;
  return {std::sqrt(alpha_bar) * s2 / denom, std::sqrt((1.0 - alpha_bar) / denom)};
}

void MlpDenoiser::fill_input(std::span<const double> latent, double alpha_bar,
                             std::span<const double> embedding, std::span<double> input) const {
  std::copy(latent.begin(), latent.end(), input.begin());
  input[dim_] = noise_feature(alpha_bar);
  std::copy(embedding.begin(), embedding.end(), input.begin() + static_cast<long>(dim_) + 1);
}

void MlpDenoiser::forward(std::span<const double> input, std::span<double> hidden_out,
                          std::span<double> out) const {
  const std::span<const double> p(params_);
  kernels::gemv(p.subspan(w1(), hidden_ * input_size()), input, p.subspan(b1(), hidden_),
                hidden_out);
  for (double& h : hidden_out) h = std::tanh(h);
  kernels::gemv(p.subspan(w2(), dim_ * hidden_), hidden_out, p.subspan(b2(), dim_), out);
}

std::vector<double> MlpDenoiser::predict_noise(std::span<const double> latent, double alpha_bar,
                                               std::span<const double> embedding) const {
  if (latent.size() != dim_ || embedding.size() != dim_)
    throw Error(ErrorKind::dimension_mismatch, "denoiser input has the wrong length");
  std::vector<double> input(input_size());
  fill_input(latent, alpha_bar, embedding, input);
  std::vector<double> hidden(hidden_);
  std::vector<double> out(dim_);
  forward(input, hidden, out);
  const auto [skip, gain] = gains(alpha_bar);
  const double s = std::sqrt(alpha_bar);
  const double n = std::sqrt(1.0 - alpha_bar);
  for (std::size_t i = 0; i < dim_; ++i) {
    const double x0 = skip * latent[i] + gain * out[i];
    out[i] = (latent[i] - s * x0) / n;
  }
  return out;
}

std::vector<double> MlpDenoiser::predict_x0(const LatentState& xt,
                                            const Condition& condition) const {
  const std::vector<double> eps = predict_noise(xt.vector, xt.noise_level, condition.embedding);
  const double s = std::sqrt(xt.noise_level);
  const double n = std::sqrt(1.0 - xt.noise_level);
  std::vector<double> x0(dim_);
  for (std::size_t i = 0; i < dim_; ++i) x0[i] = (xt.vector[i] - n * eps[i]) / s;
  return x0;
}

double MlpDenoiser::loss(std::span<const DenoiserExample> batch, std::span<double> grad) const {
  if (batch.empty()) return 0.0;
  const bool want_grad = !grad.empty();
  if (want_grad) {
    if (grad.size() != params_.size())
      throw Error(ErrorKind::dimension_mismatch, "gradient buffer has the wrong length");
    std::fill(grad.begin(), grad.end(), 0.0);
  }
  const double scale = 1.0 / static_cast<double>(batch.size() * dim_);
  std::vector<double> input(input_size());
  std::vector<double> hidden(hidden_);
  std::vector<double> out(dim_);
  std::vector<double> d_out(dim_);
  std::vector<double> d_hidden(hidden_);
  double total = 0.0;
  for (const auto& ex : batch) {
    if (ex.latent.size() != dim_ || ex.embedding.size() != dim_ || ex.noise.size() != dim_)
      throw Error(ErrorKind::dimension_mismatch, "training example has the wrong length");
    fill_input(ex.latent, ex.alpha_bar, ex.embedding, input);
    forward(input, hidden, out);
    const auto [skip, gain] = gains(ex.alpha_bar);
    const double s = std::sqrt(ex.alpha_bar);
    const double n = std::sqrt(1.0 - ex.alpha_bar);
    for (std::size_t i = 0; i < dim_; ++i) {
      const double x0 = skip * ex.latent[i] + gain * out[i];
      const double diff = (ex.latent[i] - s * x0) / n - ex.noise[i];
      total += diff * diff;
      // Chain through eps_hat = (z - s (skip z + gain F)) / n.
      d_out[i] = -2.0 * diff * scale * s * gain / n;
    }
    if (!want_grad) continue;

    // Output layer.
    for (std::size_t i = 0; i < dim_; ++i) {
      grad[b2() + i] += d_out[i];
      kernels::axpy(d_out[i], hidden, grad.subspan(w2() + i * hidden_, hidden_));
    }
    // Back through tanh.
    std::fill(d_hidden.begin(), d_hidden.end(), 0.0);
    for (std::size_t i = 0; i < dim_; ++i)
      kernels::axpy(d_out[i], std::span<const double>(params_).subspan(w2() + i * hidden_, hidden_),
                    d_hidden);
    for (std::size_t h = 0; h < hidden_; ++h) {
      const double da = d_hidden[h] * (1.0 - hidden[h] * hidden[h]);
      grad[b1() + h] += da;
      kernels::axpy(da, input, grad.subspan(w1() + h * input_size(), input_size()));
    }
  }
  return total * scale;
}

TrainedDenoiser train_toy_denoiser(std::span<const TrainingSample> dataset,
                                   const NoiseSchedule& schedule,
                                   const DenoiserTrainOptions& options) {
  if (dataset.empty()) throw Error(ErrorKind::invalid_range, "training set is empty");
  const std::size_t d = dataset.front().x0.size();
  for (const auto& s : dataset)
    if (s.x0.size() != d || s.condition.embedding.size() != d)
      throw Error(ErrorKind::dimension_mismatch, "training samples differ in dimension");

  // Spread of the data around its mean, used to precondition the output.
  std::vector<double> mean(d, 0.0);
  for (const auto& s : dataset) kernels::axpy(1.0, s.x0, mean);
  for (double& v : mean) v /= static_cast<double>(dataset.size());
  double spread = 0.0;
  for (const auto& s : dataset)
    for (std::size_t i = 0; i < d; ++i) spread += (s.x0[i] - mean[i]) * (s.x0[i] - mean[i]);
  const double data_scale = std::sqrt(spread / static_cast<double>(dataset.size() * d));

  TrainedDenoiser result{MlpDenoiser::initialize(d, options.hidden, options.seed, data_scale, mean), {}};
  auto params = result.model.parameters();
  std::vector<double> grad(params.size());
  std::vector<double> m1(params.size(), 0.0);
  std::vector<double> m2(params.size(), 0.0);
  constexpr double beta1 = 0.9;
  constexpr double beta2 = 0.999;
  constexpr double adam_eps = 1e-8;
  long step = 0;

  const std::size_t batch_size = std::max<std::size_t>(1, options.batch_size);
  std::vector<std::size_t> order(dataset.size());
  std::vector<DenoiserExample> batch;
  batch.reserve(batch_size);
  const int T = schedule.steps();
  const long total_steps =
      static_cast<long>(options.epochs) * static_cast<long>((dataset.size() + batch_size - 1) / batch_size);

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(options.seed, {0x5348ULL, static_cast<std::uint64_t>(epoch)}));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
      const std::size_t end = std::min(order.size(), begin + batch_size);
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) {
        const auto& sample = dataset[order[k]];
        Rng rng(derive_seed(options.seed, {static_cast<std::uint64_t>(epoch), k}));
        std::uniform_int_distribution<int> pick_t(1, T);
        const int t = pick_t(rng);
        DenoiserExample ex;
        ex.noise = gaussian_vector(rng, d);
        const LatentState xt = forward_noise_with(sample.x0, t, schedule, ex.noise);
        ex.latent = xt.vector;
        ex.alpha_bar = xt.noise_level;
        ex.embedding = sample.condition.embedding;
        batch.push_back(std::move(ex));
      }
      const double batch_loss = result.model.loss(batch, grad);
      if (!std::isfinite(batch_loss))
        throw Error(ErrorKind::divergence, "loss became non-finite at epoch " + std::to_string(epoch));
      epoch_loss += batch_loss * static_cast<double>(end - begin);

      ++step;
      // Cosine decay to 10% of the base rate.
      const double progress = static_cast<double>(step - 1) / static_cast<double>(std::max(1L, total_steps));
      const double lr = options.learning_rate * (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * progress)));
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (std::size_t i = 0; i < params.size(); ++i) {
        m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad[i];
        m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad[i] * grad[i];
        params[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + adam_eps);
      }
    }
    result.epoch_losses.push_back(epoch_loss / static_cast<double>(dataset.size()));
  }
  return result;
}

}  // namespace beamlat
