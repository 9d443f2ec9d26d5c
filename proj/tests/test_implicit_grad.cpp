#include <doctest.h>

#include "deqsci/error.hpp"
#include "deqsci/implicit_grad.hpp"
#include "oracles.hpp"

using namespace deqsci;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

/// f(x) = theta * gap_project(x). Fixed point theta * x_mn with x_mn = Phi^T Q^-1 y.
class ScaledGapMap : public IterationMap {
 public:
  ScaledGapMap(double theta, SensingMask mask, Measurement y) : theta_(theta), mask_(std::move(mask)), y_(std::move(y)) {}
  VideoCube apply(const VideoCube &x) const override {
    VideoCube out = gap_project(mask_, y_, x);
    out.vec() *= theta_;
    return out;
  }
  VideoCube vjp_input(const VideoCube &, const VideoCube &v) const override {
    VideoCube out = v;
    out.vec() -= rowspace_project(mask_, v).vec();
    out.vec() *= theta_;
    return out;
  }
  std::size_t param_count() const override { return 1; }
  std::vector<double> vjp_params(const VideoCube &x, const VideoCube &v) const override {
    return {dot(v, gap_project(mask_, y_, x))};
  }

 private:
  double theta_;
  SensingMask mask_;
  Measurement y_;
};

class ScaledGapModel : public Model {
 public:
  explicit ScaledGapModel(double theta) : theta_(theta) {}
  std::string kind() const override { return "scaled_gap"; }
  std::unique_ptr<IterationMap> bind(const SensingMask &mask, const Measurement &y) const override {
    return std::make_unique<ScaledGapMap>(theta_, mask, y);
  }
  std::vector<double> params() const override { return {theta_}; }
  void set_params(const std::vector<double> &t) override { theta_ = t.at(0); }
  std::unique_ptr<Model> clone() const override { return std::make_unique<ScaledGapModel>(*this); }

 private:
  double theta_;
};

Sample random_sample(std::size_t h, std::size_t w, std::size_t b, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SensingMask m = oracle::random_mask(h, w, b, rng);
  VideoCube x = oracle::random_cube(h, w, b, rng);
  Measurement y = forward(m, x);
  return {std::move(m), std::move(y), std::move(x)};
}

/// Residual branch close to -x, so D = x + gamma r(x) is a contraction and
/// the forward solve reaches tight tolerances.
ConvDenoiserParams small_conv(std::size_t frames, std::uint64_t seed) {
  ConvDenoiserParams p = ConvDenoiserParams::make(frames, 4, 2, 3, 0.3, seed, ConvInit::Random, 0.1);
  for (std::size_t k = 0; k < frames; ++k) {
    p.layers.front().w(k, k, 1, 1) += 1.0;
    p.layers.back().w(k, k, 1, 1) -= 2.0;
  }
  return p;
}

GradientConfig tight() {
  GradientConfig cfg;
  cfg.forward.tol = 1e-12;
  cfg.forward.max_iter = 400;
  cfg.backward.solve.tol = 1e-12;
  cfg.backward.solve.max_iter = 400;
  return cfg;
}

VjpFn dense_vjp(const MatrixXd &J, std::size_t h, std::size_t w, std::size_t b) {
  return [J, h, w, b](const VideoCube &v) {
    VideoCube out(h, w, b);
    out.vec() = J.transpose() * v.vec();
    return out;
  };
}

}  // namespace

TEST_CASE("mse loss and gradient") {
  VideoCube a(1, 1, 2), c(1, 1, 2);
  a.data() = {1.0, 3.0};
  c.data() = {0.0, 1.0};
  CHECK(mse_loss(a, c) == doctest::Approx(2.5));
  CHECK(mse_loss_grad(a, c).data() == std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(mse_loss(a, VideoCube(1, 1, 3)), Error);
}

TEST_CASE("backward solve against closed forms") {
  std::mt19937_64 rng(1);
  const VideoCube g = oracle::random_cube(2, 2, 4, rng, -1.0, 1.0);
  FixedPointConfig cfg{.tol = 1e-12, .max_iter = 300};

  SUBCASE("J = 0 returns g") {
    const auto r = backward_fixed_point([](const VideoCube &v) { return v.zeros_like(); }, g, cfg);
    CHECK((r.x_hat.vec() - g.vec()).norm() <= 1e-14);
  }
  SUBCASE("J = 0.5 I returns 2 g") {
    const auto r = backward_fixed_point(
        [](const VideoCube &v) {
          VideoCube o = v;
          o.vec() *= 0.5;
          return o;
        },
        g, cfg);
    CHECK((r.x_hat.vec() - 2.0 * g.vec()).lpNorm<Eigen::Infinity>() <= 1e-8);
  }
  SUBCASE("dense 16-dim J with norm 0.8") {
    MatrixXd J = MatrixXd::Random(16, 16);
    J *= 0.8 / oracle::spectral_norm(J);
    const VjpFn vjp = dense_vjp(J, 2, 2, 4);
    const VectorXd ref = (MatrixXd::Identity(16, 16) - J.transpose()).lu().solve(g.vec());
    for (SolverKind s : {SolverKind::Anderson, SolverKind::Picard}) {
      const auto r = backward_fixed_point(vjp, g, cfg, s);
      CHECK(r.converged);
      CHECK((r.x_hat.vec() - ref).lpNorm<Eigen::Infinity>() <= 1e-8);
    }
    const VideoCube n100 = neumann_backward(vjp, g, 100);
    CHECK((n100.vec() - ref).lpNorm<Eigen::Infinity>() <= 1e-6);

    // Partial sums against the explicit series and the geometric tail bound.
    VectorXd term = g.vec(), sum = g.vec();
    for (int p = 1; p <= 5; ++p) {
      term = J.transpose() * term;
      sum += term;
    }
    CHECK((neumann_backward(vjp, g, 5).vec() - sum).norm() <= 1e-12);
    for (int P : {0, 3, 10, 30}) {
      const double err = (neumann_backward(vjp, g, P).vec() - ref).norm();
      CHECK(err <= std::pow(0.8, P + 1) / 0.2 * g.vec().norm() + 1e-12);
    }
  }
  CHECK(neumann_backward([](const VideoCube &v) { return v; }, g, 0).vec() == g.vec());
  CHECK_THROWS_AS(neumann_backward([](const VideoCube &v) { return v; }, g, -1), Error);
  VideoCube bad = g;
  bad.data()[0] = std::nan("");
  CHECK_THROWS_AS(backward_fixed_point([](const VideoCube &v) { return v; }, bad, cfg), Error);
}

TEST_CASE("scaled GAP model has a closed-form gradient") {
  const Sample s = random_sample(4, 4, 3, 2);
  const VideoCube x_mn = gap_project(s.mask, s.y, s.x_star.zeros_like());
  for (double theta : {0.3, 0.7, 0.95}) {
    const ScaledGapModel model(theta);
    const LossGradient lg = loss_gradient(model, s, tight());
    CHECK(lg.forward_converged);
    CHECK_FALSE(lg.approximate);
    const double expected = x_mn.vec().dot(theta * x_mn.vec() - s.x_star.vec());
    REQUIRE(lg.grad.size() == 1);
    CHECK(lg.grad[0] == doctest::Approx(expected).epsilon(1e-8));
    CHECK(lg.loss == doctest::Approx(0.5 * (theta * x_mn.vec() - s.x_star.vec()).squaredNorm()).epsilon(1e-10));
  }
  GradientConfig neumann = tight();
  neumann.backward.mode = BackwardConfig::Mode::Neumann;
  neumann.backward.neumann_terms = 200;
  const double a = loss_gradient(ScaledGapModel(0.7), s, neumann).grad[0];
  const double b = loss_gradient(ScaledGapModel(0.7), s, tight()).grad[0];
  CHECK(a == doctest::Approx(b).epsilon(1e-8));
}

TEST_CASE("zero loss gives a zero gradient") {
  // Target equal to the fixed point of the scaled model.
  Sample s = random_sample(3, 3, 2, 3);
  const VideoCube x_mn = gap_project(s.mask, s.y, s.x_star.zeros_like());
  s.x_star = x_mn;
  s.x_star.vec() *= 0.5;
  const LossGradient lg = loss_gradient(ScaledGapModel(0.5), s, tight());
  CHECK(lg.loss <= 1e-24);
  CHECK(std::abs(lg.grad[0]) <= 1e-12);
}

TEST_CASE("conv DE-GAP gradient passes finite differences") {
  const Sample s = random_sample(8, 8, 2, 4);
  const DeGapModel model(small_conv(2, 5));
  const GradCheckReport rep = finite_diff_gradcheck(model, s, tight(), 1e-5, 0, 1);
  CHECK(rep.forward_converged);
  CHECK(rep.rows.size() == model.params().size());
  CHECK(rep.max_rel_error <= 1e-3);

  const GradCheckReport some = finite_diff_gradcheck(model, s, tight(), 1e-5, 10, 2);
  CHECK(some.rows.size() == 10);
  CHECK(some.to_text().rfind("index,analytic,numeric,rel_error\n", 0) == 0);
  CHECK(some.to_text().find("max_rel_error=") != std::string::npos);

  // A huge step breaks the check without crashing.
  const GradCheckReport coarse = finite_diff_gradcheck(model, s, tight(), 1.0, 10, 2);
  CHECK(coarse.max_rel_error > 1e-3);
}

TEST_CASE("DE-RNN gradient passes finite differences") {
  const Sample s = random_sample(6, 6, 2, 6);
  RecurrentCellParams c = RecurrentCellParams::make(2, 3, 3, 0.3, 7, 0.2);
  c.skip = -1.0;
  const DeRnnModel model(c);
  const GradCheckReport rep = finite_diff_gradcheck(model, s, tight(), 1e-5, 30, 3);
  CHECK(rep.forward_converged);
  CHECK(rep.max_rel_error <= 1e-3);
}

TEST_CASE("training: zero learning rate keeps parameters") {
  std::vector<Sample> set = {random_sample(6, 6, 2, 10), random_sample(6, 6, 2, 11)};
  const DeGapModel model(small_conv(2, 12));
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 0.0;
  cfg.sn_iters = 0;
  const TrainResult r = train(model, set, {set[0]}, cfg);
  CHECK(r.model->params() == model.params());
  REQUIRE(r.log.size() == 3);
  CHECK(r.log[2].mean_loss == doctest::Approx(r.log[0].mean_loss).epsilon(1e-12));
  CHECK(r.log[2].val_psnr == doctest::Approx(r.log[0].val_psnr).epsilon(1e-12));
  CHECK(train_log_csv(r.log).rfind("epoch,mean_loss,val_psnr,skipped\n1,", 0) == 0);

  TrainConfig bad = cfg;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(train(model, set, {}, bad), Error);
  CHECK_THROWS_AS(train(model, {}, {}, cfg), Error);
}

TEST_CASE("training overfits a single sample and is deterministic") {
  const Sample s = random_sample(6, 6, 2, 20);
  const DeGapModel model(small_conv(2, 21));
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 0.02;
  cfg.momentum = 0.5;
  cfg.sn_iters = 0;
  cfg.gradient.forward.max_iter = 200;
  const double before = sample_loss(model, s, cfg.gradient);
  const TrainResult r = train(model, {s}, {}, cfg);
  const double after = sample_loss(*r.model, s, cfg.gradient);
  CHECK(after <= 0.1 * before);
  CHECK(std::isnan(r.log.back().val_psnr));

  cfg.epochs = 5;
  const TrainResult a = train(model, {s, random_sample(6, 6, 2, 22)}, {}, cfg);
  const TrainResult b = train(model, {s, random_sample(6, 6, 2, 22)}, {}, cfg);
  CHECK(a.model->params() == b.model->params());
}

TEST_CASE("one small SGD step decreases the loss") {
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Sample s = random_sample(4, 4, 2, 100 + seed);
    DeGapModel model(small_conv(2, 200 + seed));
    const GradientConfig cfg = tight();
    const LossGradient lg = loss_gradient(model, s, cfg);
    double gn = 0.0;
    for (double g : lg.grad) gn += g * g;
    sgd_step(model, lg.grad, 1e-3 / std::max(1.0, std::sqrt(gn)));
    if (sample_loss(model, s, cfg) <= lg.loss + 1e-12) ++decreased;
  }
  CHECK(decreased == 20);
}

TEST_CASE("training memory does not grow with the iteration count") {
  const Sample s = random_sample(6, 6, 2, 30);
  const DeGapModel model(small_conv(2, 31));
  std::size_t peaks[2];
  int idx = 0;
  for (int iters : {20, 200}) {
    GradientConfig cfg;
    cfg.forward.tol = 1e-300;
    cfg.forward.max_iter = iters;
    cfg.backward.solve.tol = 1e-300;
    cfg.backward.solve.max_iter = iters;
    CubeCounter::reset_peak();
    const std::size_t base = CubeCounter::live();
    const LossGradient lg = loss_gradient(model, s, cfg);
    CHECK(lg.approximate);
    peaks[idx++] = CubeCounter::peak() - base;
  }
  CHECK(peaks[0] == peaks[1]);
}
