#pragma once

// Small trainable epsilon-predictor: one tanh hidden layer over
// [z_t, log-SNR, condition embedding], trained on the standard mean-squared
// noise-prediction loss. The raw output F is read as a correction to the
// linear posterior of data with spread data_scale:
//   x0_hat = c_skip z + c_out F,  eps_hat = (z - sqrt(a) x0_hat) / sqrt(1 - a)
// with c_skip = sqrt(a) s^2 / (a s^2 + 1 - a), c_out = sqrt((1 - a) / (a s^2 + 1 - a)).

#include <cstddef>
#include <span>
#include <vector>

#include "beamlat/diffusion.hpp"
#include "beamlat/seed.hpp"

namespace beamlat {

struct DenoiserExample {
  std::vector<double> latent;
  double alpha_bar = 1.0;
  std::vector<double> embedding;
  std::vector<double> noise;
};

class MlpDenoiser final : public Denoiser {
 public:
  // `data_mean`, when given, seeds the output bias so that F starts at the
  // data mean.
  static MlpDenoiser initialize(std::size_t dim, std::size_t hidden, Seed seed,
                                double data_scale = 1.0,
                                std::span<const double> data_mean = {});

  std::size_t dim() const noexcept { return dim_; }
  std::size_t hidden() const noexcept { return hidden_; }
  std::size_t input_size() const noexcept { return 2 * dim_ + 1; }
  double data_scale() const noexcept { return data_scale_; }

  std::span<const double> parameters() const noexcept { return params_; }
  std::span<double> parameters() noexcept { return params_; }

  std::vector<double> predict_noise(std::span<const double> latent, double alpha_bar,
                                    std::span<const double> embedding) const;
  std::vector<double> predict_x0(const LatentState& xt, const Condition& condition) const override;

  // Mean over examples and coordinates of (eps_hat - eps)^2. Gradient w.r.t.
  // parameters() is written into `grad` when non-empty (same length).
  double loss(std::span<const DenoiserExample> batch, std::span<double> grad = {}) const;

 private:
  MlpDenoiser(std::size_t dim, std::size_t hidden);

  // Offsets into params_.
  std::size_t w1() const noexcept { return 0; }
  std::size_t b1() const noexcept { return hidden_ * input_size(); }
  std::size_t w2() const noexcept { return b1() + hidden_; }
  std::size_t b2() const noexcept { return w2() + dim_ * hidden_; }

  struct Gains {
    double skip;
    double out;
  };
  Gains gains(double alpha_bar) const;
  // Raw output F; `input` must already hold the network inputs.
  void forward(std::span<const double> input, std::span<double> hidden_out,
               std::span<double> out) const;
  void fill_input(std::span<const double> latent, double alpha_bar,
                  std::span<const double> embedding, std::span<double> input) const;

  std::size_t dim_;
  std::size_t hidden_;
  double data_scale_ = 1.0;
  std::vector<double> params_;
};

struct TrainingSample {
  std::vector<double> x0;
  Condition condition;
};

struct DenoiserTrainOptions {
  int epochs = 100;
  double learning_rate = 1e-2;
  Seed seed = 0;
  std::size_t hidden = 32;
  std::size_t batch_size = 32;
};

struct TrainedDenoiser {
  MlpDenoiser model;
  std::vector<double> epoch_losses;
};

// Adam on minibatches; each example draws its own timestep and noise from a
// seed derived from (seed, epoch, position), so training is reproducible.
TrainedDenoiser train_toy_denoiser(std::span<const TrainingSample> dataset,
                                   const NoiseSchedule& schedule,
                                   const DenoiserTrainOptions& options);

}  // namespace beamlat
