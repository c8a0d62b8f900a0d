#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <cmath>
#include <numbers>

#include "beamlat/diffusion.hpp"
#include "beamlat/error.hpp"
#include "beamlat/mlp_denoiser.hpp"
#include "beamlat/world.hpp"
#include "test_support.hpp"

using namespace beamlat;
using beamlat::testing::relative_error;

namespace {

MixtureModel single(std::vector<double> mean, double var) {
  std::vector<double> v(mean.size(), var);
  return MixtureModel{{MixtureComponent{1.0, std::move(mean), std::move(v)}}};
}

MixtureModel two_component_1d() {
  return MixtureModel{{MixtureComponent{0.3, {-1.5}, {0.2}}, MixtureComponent{0.7, {2.0}, {0.5}}}};
}

// E[x0 | xt] by Simpson quadrature over x0 for a 1-d mixture prior and the
// forward kernel N(xt; sqrt(ab) x0, 1 - ab).
double quadrature_posterior_mean(double xt, double ab, const MixtureModel& m) {
  const double lo = -15.0, hi = 15.0;
  const int n = 200000;
  const double h = (hi - lo) / n;
  double num = 0.0, den = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + i * h;
    double prior = 0.0;
    for (const auto& c : m.components)
      prior += c.weight * std::exp(-0.5 * (x - c.mean[0]) * (x - c.mean[0]) / c.var[0]) /
               std::sqrt(2.0 * std::numbers::pi * c.var[0]);
    const double r = xt - std::sqrt(ab) * x;
    const double like = std::exp(-0.5 * r * r / (1.0 - ab));
    const double wgt = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    num += wgt * x * prior * like;
    den += wgt * prior * like;
  }
  return num / den;
}

class CountingDenoiser final : public Denoiser {
 public:
  explicit CountingDenoiser(const Denoiser& inner) : inner_(inner) {}
  std::vector<double> predict_x0(const LatentState& xt, const Condition& c) const override {
    ++calls;
    return inner_.predict_x0(xt, c);
  }
  mutable std::atomic<int> calls{0};

 private:
  const Denoiser& inner_;
};

class ThrowingDenoiser final : public Denoiser {
 public:
  std::vector<double> predict_x0(const LatentState&, const Condition&) const override {
    throw std::runtime_error("device lost");
  }
};

}  // namespace

TEST_SUITE("schedule") {
  TEST_CASE("alpha_bar starts at 1 and strictly decreases") {
    const auto s = build_schedule(100, 1e-4, 0.02);
    CHECK(s.alpha_bar(0) == 1.0);
    for (int t = 1; t <= 100; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
    CHECK(s.alpha_bar(100) > 0.0);
  }

  TEST_CASE("two steps of beta 0.1") {
    CHECK(build_schedule(2, 0.1, 0.1).alpha_bar(2) == doctest::Approx(0.9 * 0.9).epsilon(1e-15));
  }

  TEST_CASE("invalid ranges are rejected") {
    for (auto [T, b0, b1] : {std::tuple{0, 0.1, 0.2}, {10, 0.0, 0.1}, {10, 0.3, 0.2}, {10, 0.1, 1.0}}) {
      try {
        build_schedule(T, b0, b1);
        FAIL("accepted an invalid schedule");
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::invalid_range);
      }
    }
    CHECK_THROWS_AS(build_schedule(5, 0.01, 0.02).alpha_bar(6), Error);
  }
}

TEST_SUITE("forward") {
  TEST_CASE("timestep 0 is the identity and a fixed seed repeats") {
    const auto s = build_schedule(10, 1e-3, 0.2);
    const std::vector<double> x0{0.5, -1.0, 2.0};
    Rng r0(3);
    CHECK(forward_noise(x0, 0, s, r0).vector == x0);
    Rng r1(3), r2(3);
    CHECK(forward_noise(x0, 7, s, r1).vector == forward_noise(x0, 7, s, r2).vector);
  }

  TEST_CASE("noised zero has variance 1 - alpha_bar") {
    const auto s = NoiseSchedule::from_alpha_bar({1.0, 0.25});
    const std::vector<double> x0{0.0};
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      Rng rng(derive_seed(99, {static_cast<std::uint64_t>(i)}));
      const double v = forward_noise(x0, 1, s, rng).vector[0];
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    CHECK(sq / n - mean * mean == doctest::Approx(0.75).epsilon(0.02 / 0.75));
  }

  TEST_CASE("dimension mismatch in forward_noise_with") {
    const auto s = build_schedule(4, 0.1, 0.2);
    const std::vector<double> x0{1.0, 2.0};
    const std::vector<double> eps{1.0};
    CHECK_THROWS_AS(forward_noise_with(x0, 2, s, eps), Error);
  }
}

TEST_SUITE("posterior mean") {
  TEST_CASE("unit Gaussian prior: E[x0 | xt] = sqrt(ab) xt") {
    const LatentState xt{{1.0}, 0, 0.25};
    CHECK(exact_posterior_mean(xt, single({0.0}, 1.0))[0] == doctest::Approx(0.5).epsilon(1e-14));
  }

  TEST_CASE("near point mass returns its location") {
    const LatentState xt{{3.0, -7.0}, 0, 0.3};
    const auto out = exact_posterior_mean(xt, single({1.0, 2.0}, 1e-14));
    CHECK(out[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(out[1] == doctest::Approx(2.0).epsilon(1e-9));
  }

  TEST_CASE("symmetric pair at the origin") {
    const MixtureModel m{{MixtureComponent{0.5, {2.0, -1.0}, {0.3, 0.3}},
                          MixtureComponent{0.5, {-2.0, 1.0}, {0.3, 0.3}}}};
    const auto out = exact_posterior_mean(LatentState{{0.0, 0.0}, 0, 0.4}, m);
    CHECK(std::abs(out[0]) < 1e-12);
    CHECK(std::abs(out[1]) < 1e-12);
  }

  TEST_CASE("matches numerical integration in one dimension") {
    const auto m = two_component_1d();
    for (double ab : {0.05, 0.3, 0.8, 0.99}) {
      for (double xt : {-3.0, -0.4, 0.0, 0.9, 2.5}) {
        CAPTURE(ab);
        CAPTURE(xt);
        const double exact = exact_posterior_mean(LatentState{{xt}, 0, ab}, m)[0];
        CHECK(std::abs(exact - quadrature_posterior_mean(xt, ab, m)) < 1e-6);
      }
    }
  }

  TEST_CASE("far-out latents stay finite") {
    const auto out = exact_posterior_mean(LatentState{{1e6}, 0, 0.999}, two_component_1d());
    CHECK(std::isfinite(out[0]));
  }
}

TEST_SUITE("reverse step") {
  TEST_CASE("hand arithmetic") {
    const auto s = NoiseSchedule::from_alpha_bar({1.0, 0.5, 0.25});
    const LatentState xt{{1.0}, 0, 0.25};
    const std::vector<double> x0_hat{0.5};
    const auto next = reverse_step(xt, x0_hat, s);
    const double eps = 0.75 / std::sqrt(0.75);
    CHECK(next.vector[0] == doctest::Approx(std::sqrt(0.5) * 0.5 + std::sqrt(0.5) * eps).epsilon(1e-14));
    CHECK(next.vector[0] == doctest::Approx(0.9659).epsilon(1e-4));
    CHECK(next.iteration == 1);
    CHECK(next.noise_level == 0.5);
  }

  TEST_CASE("true x0 reproduces the forward process") {
    const auto s = build_schedule(20, 1e-3, 0.2);
    const std::vector<double> x0{0.3, -0.8};
    const std::vector<double> eps{1.1, 0.4};
    const auto xt = forward_noise_with(x0, 12, s, eps);
    const auto next = reverse_step(xt, x0, s);
    const auto expect = forward_noise_with(x0, 11, s, eps);
    CHECK(next.iteration == expect.iteration);
    for (int i = 0; i < 2; ++i) CHECK(next.vector[i] == doctest::Approx(expect.vector[i]).epsilon(1e-12));
  }

  TEST_CASE("last step returns x0_hat, and a finished latent cannot step") {
    const auto s = build_schedule(3, 0.1, 0.2);
    const auto last = reverse_step(LatentState{{2.0}, 2, s.level_at_iteration(2)}, std::vector<double>{0.7}, s);
    CHECK(last.vector[0] == doctest::Approx(0.7).epsilon(1e-15));
    try {
      reverse_step(last, std::vector<double>{0.7}, s);
      FAIL("stepped past the end");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::schedule_position);
    }
  }
}

TEST_SUITE("run_denoise") {
  const World world = make_synthetic_world(4, 3, 2, 11, 50);
  const Condition cond = world.condition("t1");

  TEST_CASE("storage off still produces a sample") {
    const auto rec = run_denoise(cond, FreshNoise{5}, world.schedule(), *world.exact_denoiser(), 0);
    CHECK(rec.stored_latents.empty());
    CHECK(rec.final_sample.size() == 4);
    CHECK(rec.reverse_steps == 50);
  }

  TEST_CASE("stored latents are the first iterations, in order") {
    const auto rec = run_denoise(cond, FreshNoise{5}, world.schedule(), *world.exact_denoiser(), 4);
    REQUIRE(rec.stored_latents.size() == 4);
    for (int i = 0; i < 4; ++i) {
      CHECK(rec.stored_latents[i].iteration == i + 1);
      CHECK(rec.stored_latents[i].noise_level == world.schedule().level_at_iteration(i + 1));
    }
  }

  TEST_CASE("bitwise determinism") {
    const auto a = run_denoise(cond, FreshNoise{42}, world.schedule(), *world.exact_denoiser(), 3);
    const auto b = run_denoise(cond, FreshNoise{42}, world.schedule(), *world.exact_denoiser(), 3);
    CHECK(a.final_sample == b.final_sample);
    CHECK(a.stored_latents[2].vector == b.stored_latents[2].vector);
  }

  TEST_CASE("donor resumption runs exactly T - t iterations") {
    const auto donor = run_denoise(cond, FreshNoise{8}, world.schedule(), *world.exact_denoiser(), 4);
    const auto exact = world.exact_denoiser();
    CountingDenoiser counter(*exact);
    for (int idx = 0; idx < 4; ++idx) {
      counter.calls = 0;
      const auto rec = run_denoise(world.condition("t2"), DonorLatent{donor.stored_latents[idx], donor.seed},
                                   world.schedule(), counter, 2);
      const int t = donor.stored_latents[idx].iteration;
      CHECK(counter.calls == 50 - t);
      CHECK(rec.reverse_steps == 50 - t);
      CHECK(rec.start_iteration == t);
      CHECK(rec.stored_latents.front().iteration == t + 1);
    }
  }

  TEST_CASE("near point mass target is reached") {
    VocabularyEntry e{Condition{"p", {1.0, 0.0}, "p"}, single({0.4, -1.3}, 1e-14)};
    const World w(2, 100, {e});
    const auto rec = run_denoise(w.condition("p"), FreshNoise{1}, w.schedule(), *w.exact_denoiser(), 0);
    CHECK(std::abs(rec.final_sample[0] - 0.4) < 1e-6);
    CHECK(std::abs(rec.final_sample[1] + 1.3) < 1e-6);
  }

  TEST_CASE("backend failures carry the run's provenance") {
    ThrowingDenoiser broken;
    try {
      run_denoise(cond, FreshNoise{77}, world.schedule(), broken, 1);
      FAIL("no error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::backend_failure);
      CHECK(std::string(e.what()).find("seed=77") != std::string::npos);
      CHECK(std::string(e.what()).find("device lost") != std::string::npos);
    }
  }

  TEST_CASE("donor latents past the end are rejected") {
    const LatentState done{{0, 0, 0, 0}, 50, 1.0};
    CHECK_THROWS_AS(run_denoise(cond, DonorLatent{done, 1}, world.schedule(), *world.exact_denoiser(), 0), Error);
  }
}

TEST_SUITE("toy denoiser") {
  std::vector<TrainingSample> point_mass_data(const std::vector<double>& mu, const Condition& c, int n) {
    return std::vector<TrainingSample>(static_cast<std::size_t>(n), TrainingSample{mu, c});
  }

  TEST_CASE("zero epochs returns the initialization") {
    const auto s = build_schedule(20, 1e-3, 0.2);
    const Condition c{"a", {1.0, 0.0}, "a"};
    DenoiserTrainOptions opt;
    opt.epochs = 0;
    opt.hidden = 8;
    opt.seed = 4;
    const auto trained = train_toy_denoiser(point_mass_data({1.0, 1.0}, c, 8), s, opt);
    // A point mass has zero spread and seeds the output bias with its location.
    const std::vector<double> mean{1.0, 1.0};
    const auto init = MlpDenoiser::initialize(2, 8, 4, 0.0, mean);
    CHECK(std::equal(trained.model.parameters().begin(), trained.model.parameters().end(),
                     init.parameters().begin(), init.parameters().end()));
    CHECK(trained.epoch_losses.empty());
  }

  TEST_CASE("analytic gradient matches central differences") {
    const std::size_t d = 3;
    Rng rng(2024);
    double worst = 0.0;
    for (int point = 0; point < 10; ++point) {
      auto model = MlpDenoiser::initialize(d, 6, 100 + point, 0.3 * point);
      auto params = model.parameters();
      for (double& p : params) p += 0.3 * std::normal_distribution<double>()(rng);
      std::vector<DenoiserExample> batch;
      for (int k = 0; k < 4; ++k)
        batch.push_back(DenoiserExample{gaussian_vector(rng, d), 0.1 + 0.2 * k, gaussian_vector(rng, d),
                                        gaussian_vector(rng, d)});
      std::vector<double> grad(params.size());
      model.loss(batch, grad);
      const double h = 1e-6;
      for (std::size_t i = 0; i < params.size(); ++i) {
        const double keep = params[i];
        params[i] = keep + h;
        const double up = model.loss(batch);
        params[i] = keep - h;
        const double down = model.loss(batch);
        params[i] = keep;
        worst = std::max(worst, relative_error(grad[i], (up - down) / (2 * h)));
      }
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("training lowers the loss, repeats exactly, and learns a point mass") {
    const auto s = build_schedule(50, 1e-3, 0.2);
    const Condition c{"a", {1.0, 0.0}, "a"};
    const std::vector<double> mu{1.5, -0.5};
    DenoiserTrainOptions opt;
    opt.epochs = 200;
    opt.seed = 9;
    opt.hidden = 16;
    const auto data = point_mass_data(mu, c, 64);
    const auto a = train_toy_denoiser(data, s, opt);
    const auto b = train_toy_denoiser(data, s, opt);
    CHECK(a.epoch_losses.back() <= a.epoch_losses.front());
    CHECK(a.epoch_losses == b.epoch_losses);

    // The exact posterior mean of a point mass is mu everywhere; check at the
    // noisiest level, where eps errors are amplified most.
    const int iteration = 0;
    CHECK(s.level_at_iteration(iteration) < 0.01);
    Rng rng(5);
    for (int k = 0; k < 20; ++k) {
      const auto xt = forward_noise(mu, s.steps() - iteration, s, rng);
      const auto x0 = a.model.predict_x0(xt, c);
      const auto oracle = exact_posterior_mean(xt, single(mu, 1e-14));
      for (int i = 0; i < 2; ++i) CHECK(std::abs(x0[i] - oracle[i]) < 0.1);
    }
  }

  TEST_CASE("empty dataset is rejected") {
    const auto s = build_schedule(5, 0.1, 0.2);
    CHECK_THROWS_AS(train_toy_denoiser(std::vector<TrainingSample>{}, s, DenoiserTrainOptions{}), Error);
  }
}
