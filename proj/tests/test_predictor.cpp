#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "instances.hpp"
#include "oracles.hpp"
#include "vbsgpr/kernel.hpp"
#include "vbsgpr/predict.hpp"

using namespace vbsgpr;
using testing_support::Instance;
using testing_support::make_instance;

namespace {

struct WarningCapture {
  std::vector<std::string> messages;
  std::function<void(const std::string&)> saved;
  WarningCapture() {
    saved = warning_handler();
    warning_handler() = [this](const std::string& m) { messages.push_back(m); };
  }
  ~WarningCapture() { warning_handler() = saved; }
};

// Two-moment summary of the hyperparameter mixture, by simulation: draw the
// lengthscales and amplitude, form the conditional mean and variance of the
// test function value given the inducing values, and pool them.
struct MixtureEstimate {
  double mean = 0, mean_se = 0;
  double var = 0, var_tol = 0;
};

MixtureEstimate mc_mixture_predict(const Instance& ins, const Eigen::VectorXd& x,
                                   Index draws, Rng& rng) {
  const Eigen::MatrixXd sigma_inv = ins.ind.sigma.fullPivLu().inverse();
  const Eigen::MatrixXd S = ins.state.S();
  const Eigen::MatrixXd& Z = ins.ind.rotated_inputs;
  const double zeta = ins.ind.prior_scale;
  const Index mI = ins.ind.count();
  const HyperVariational<double>& h = ins.state.hyper;

  std::vector<double> a_draws, u_draws;
  a_draws.reserve(static_cast<size_t>(draws));
  u_draws.reserve(static_cast<size_t>(draws));
  Eigen::VectorXd k(mI);
  for (Index t = 0; t < draws; ++t) {
    const oracle::HyperDraw hd =
        oracle::draw_hyper(h.nu, h.xi, h.alpha, h.beta, rng);
    for (Index i = 0; i < mI; ++i)
      k[i] = zeta * oracle::k_fs(hd, x, Z.row(i).transpose());
    const Eigen::VectorXd w = sigma_inv * k;
    const double a = w.dot(ins.state.m);
    const double v = hd.sf * hd.sf - k.dot(w) + w.dot(S * w);
    a_draws.push_back(a);
    u_draws.push_back(v + a * a);
  }
  const oracle::McEstimate ea = oracle::summarize(a_draws);
  const oracle::McEstimate eu = oracle::summarize(u_draws);
  MixtureEstimate out;
  out.mean = ea.mean;
  out.mean_se = ea.se;
  out.var = eu.mean - ea.mean * ea.mean;
  out.var_tol = eu.se + 2.0 * std::abs(ea.mean) * ea.se;
  return out;
}

}  // namespace

TEST_CASE("analytic predictive matches the hyperparameter mixture by simulation") {
  Rng rng(1801);
  const Index draws = 150000;
  struct Config {
    Index d;
    double zeta;
  };
  for (const Config c : {Config{1, 1.0}, Config{2, 1.0}, Config{2, 1.3}}) {
    Instance ins = make_instance(rng, Variant::DTC, c.d, 4, {5}, c.zeta, 0.4);
    const PredictContext<double> ctx = make_predict_context(ins.state, ins.ind);
    for (int rep = 0; rep < 2; ++rep) {
      Eigen::VectorXd x(c.d);
      for (Index k = 0; k < c.d; ++k) x[k] = 3.0 * rng.uniform() - 1.5;

      const PredictiveResult<double> got =
          predict_analytic(ins.state, ins.ind, ctx, x);
      const MixtureEstimate mc = mc_mixture_predict(ins, x, draws, rng);

      INFO("d ", c.d, " zeta ", c.zeta, " rep ", rep);
      CHECK(std::abs(got.mean - mc.mean) < 4.0 * mc.mean_se + 1e-12);
      CHECK(std::abs(got.variance - mc.var) < 4.0 * mc.var_tol + 1e-12);
      CHECK(got.variance > 0);
      CHECK(got.sample_count == 0);

      const PredictiveResult<double> direct =
          predict_analytic(ins.state, ins.ind, x);
      CHECK(direct.mean == got.mean);
      CHECK(direct.variance == got.variance);
    }
  }
}

TEST_CASE("one-sample in-block predictive equals a dense hand computation") {
  Rng rng(1900);
  Instance ins = make_instance(rng, Variant::PIC, 2, 3, {4, 5}, 1.3, 0.4);
  const Index b = 1;
  const BlockData<double>& block = ins.tb.data[b];
  const NoiseBlock<double>& cb = ins.tb.noise[b];
  const Index mI = 3, nb = block.X.rows(), d = 2;
  const Eigen::MatrixXd& Z = ins.ind.rotated_inputs;
  const double zeta = ins.ind.prior_scale;

  Eigen::VectorXd x(d);
  x << 0.4, -1.1;

  Rng draw_rng(777);
  const PredictiveResult<double> got =
      predict_pic(ins.state, ins.ind, block, cb, x, Index(1), draw_rng);

  // Replay the identical hyperparameter draw and redo the conditional with a
  // plain LU solve.
  Rng replay(777);
  KernelParams<double> kp;
  kp.inverted_lengthscales.resize(d);
  for (Index k = 0; k < d; ++k)
    kp.inverted_lengthscales[k] =
        replay.normal(ins.state.hyper.nu[k], ins.state.hyper.xi[k]);
  kp.signal_std = replay.normal(ins.state.hyper.alpha, ins.state.hyper.beta);

  Eigen::VectorXd k(mI + nb);
  for (Index i = 0; i < mI; ++i)
    k[i] = cov_fs(x, Z.row(i).transpose(), kp, zeta);
  for (Index j = 0; j < nb; ++j)
    k[mI + j] = cov_ff(x, block.X.row(j).transpose(), kp);

  Eigen::MatrixXd J(mI + nb, mI + nb);
  J.topLeftCorner(mI, mI) = ins.ind.sigma;
  for (Index i = 0; i < mI; ++i)
    for (Index j = 0; j < nb; ++j)
      J(i, mI + j) =
          cov_fs(block.X.row(j).transpose(), Z.row(i).transpose(), kp, zeta);
  J.bottomLeftCorner(nb, mI) = J.topRightCorner(mI, nb).transpose();
  for (Index i = 0; i < nb; ++i)
    for (Index j = 0; j < nb; ++j)
      J(mI + i, mI + j) =
          cov_ff(block.X.row(i).transpose(), block.X.row(j).transpose(), kp);
  REQUIRE_FALSE(cb.is_diagonal());
  J.bottomRightCorner(nb, nb) += cb.cov;

  const Eigen::VectorXd w = J.fullPivLu().solve(k);
  const double a = w.head(mI).dot(ins.state.m) + w.tail(nb).dot(block.y);
  const double v = kp.signal_std * kp.signal_std - k.dot(w) +
                   w.head(mI).dot(ins.state.S() * w.head(mI));

  CHECK(got.sample_count == 1);
  CHECK(oracle::rel_err(got.mean, a) < 1e-8);
  CHECK(oracle::rel_err(got.variance, v) < 1e-8);
}

TEST_CASE("empty conditioning block reduces to the inducing-only conditional") {
  Rng rng(1901);
  Instance ins = make_instance(rng, Variant::PIC, 1, 4, {5}, 1.0, 0.4);
  BlockData<double> empty;
  empty.X.resize(0, 1);
  empty.y.resize(0);
  NoiseBlock<double> no_noise;

  Eigen::VectorXd x(1);
  x << 0.7;

  Rng draw_rng(31);
  const PredictiveResult<double> got =
      predict_pic(ins.state, ins.ind, empty, no_noise, x, Index(1), draw_rng);

  Rng replay(31);
  KernelParams<double> kp;
  kp.inverted_lengthscales.resize(1);
  kp.inverted_lengthscales[0] =
      replay.normal(ins.state.hyper.nu[0], ins.state.hyper.xi[0]);
  kp.signal_std = replay.normal(ins.state.hyper.alpha, ins.state.hyper.beta);

  Eigen::VectorXd k(4);
  for (Index i = 0; i < 4; ++i)
    k[i] = cov_fs(x, ins.ind.rotated_inputs.row(i).transpose(), kp,
                  ins.ind.prior_scale);
  const Eigen::VectorXd w = ins.ind.sigma.fullPivLu().solve(k);
  const double a = w.dot(ins.state.m);
  const double v = kp.signal_std * kp.signal_std - k.dot(w) +
                   w.dot(ins.state.S() * w);

  CHECK(oracle::rel_err(got.mean, a) < 1e-8);
  CHECK(oracle::rel_err(got.variance, v) < 1e-8);
}

TEST_CASE("sampling predictive is deterministic for a fixed seed") {
  Rng rng(1902);
  Instance ins = make_instance(rng, Variant::PIC, 2, 3, {6}, 1.0, 0.3);
  Eigen::VectorXd x(2);
  x << -0.2, 0.9;

  Rng r1(2024), r2(2024);
  const PredictiveResult<double> p1 =
      predict_pic(ins.state, ins.ind, ins.tb.data[0], ins.tb.noise[0], x,
                  Index(64), r1);
  const PredictiveResult<double> p2 =
      predict_pic(ins.state, ins.ind, ins.tb.data[0], ins.tb.noise[0], x,
                  Index(64), r2);
  CHECK(p1.mean == p2.mean);
  CHECK(p1.variance == p2.variance);
  CHECK(p1.sample_count == 64);

  Rng r3(2025);
  const PredictiveResult<double> p3 =
      predict_pic(ins.state, ins.ind, ins.tb.data[0], ins.tb.noise[0], x,
                  Index(64), r3);
  CHECK(p1.mean != p3.mean);
}

TEST_CASE("sampling error of the predictive mean shrinks like one over n") {
  Rng rng(1903);
  Instance ins = make_instance(rng, Variant::PIC, 1, 3, {4}, 1.0, 0.3);
  Eigen::VectorXd x(1);
  x << 0.3;

  const std::vector<Index> sizes = {4, 16, 64, 256};
  const int repeats = 300;
  std::vector<double> log_n, log_var;
  for (size_t si = 0; si < sizes.size(); ++si) {
    std::vector<double> means;
    means.reserve(repeats);
    for (int r = 0; r < repeats; ++r) {
      Rng rr(100000 + 1000 * static_cast<std::uint64_t>(si) + r);
      means.push_back(predict_pic(ins.state, ins.ind, ins.tb.data[0],
                                  ins.tb.noise[0], x, sizes[si], rr)
                          .mean);
    }
    double mu = 0;
    for (double v : means) mu += v;
    mu /= repeats;
    double var = 0;
    for (double v : means) var += (v - mu) * (v - mu);
    var /= repeats - 1;
    log_n.push_back(std::log(double(sizes[si])));
    log_var.push_back(std::log(var));
  }

  double xbar = 0, ybar = 0;
  for (size_t i = 0; i < log_n.size(); ++i) {
    xbar += log_n[i];
    ybar += log_var[i];
  }
  xbar /= log_n.size();
  ybar /= log_n.size();
  double num = 0, den = 0;
  for (size_t i = 0; i < log_n.size(); ++i) {
    num += (log_n[i] - xbar) * (log_var[i] - ybar);
    den += (log_n[i] - xbar) * (log_n[i] - xbar);
  }
  const double slope = num / den;
  INFO("slope ", slope);
  CHECK(slope < -0.75);
  CHECK(slope > -1.25);
}

TEST_CASE("test points go to the nearest centroid with ties to the lowest index") {
  Eigen::MatrixXd centroids(3, 2);
  centroids << 0.0, 0.0, 1.0, 0.0, 1.0, 0.0;

  Eigen::VectorXd x(2);
  x << 0.9, 0.0;
  CHECK(assign_test_block(x, centroids) == 1);  // rows 1 and 2 tie
  x << 0.1, 0.0;
  CHECK(assign_test_block(x, centroids) == 0);
  x << 0.5, 0.0;  // exact tie between rows 0 and 1
  CHECK(assign_test_block(x, centroids) == 0);

  Eigen::VectorXd bad(3);
  bad.setZero();
  CHECK_THROWS_AS(assign_test_block(bad, centroids), DimensionError);
  const Eigen::MatrixXd none(0, 2);
  Eigen::VectorXd x2(2);
  x2.setZero();
  CHECK_THROWS_AS(assign_test_block(x2, none), DimensionError);
}

TEST_CASE("degenerate predictive variance clamps to the floor and warns") {
  HyperVariational<double> h;
  h.nu = Eigen::VectorXd::Ones(1);
  h.xi = Eigen::VectorXd::Constant(1, 0.1);
  h.alpha = 1.0;
  h.beta = 0.1;

  WarningCapture capture;
  const double floored = detail::clamp_variance(-1.0, h);
  CHECK(floored == detail::variance_floor(h));
  CHECK(floored > 0);
  REQUIRE(capture.messages.size() == 1);
  CHECK(capture.messages[0].find("clamped") != std::string::npos);

  CHECK(detail::clamp_variance(0.5, h) == 0.5);
  CHECK(capture.messages.size() == 1);
}

TEST_CASE("prediction rejects malformed arguments") {
  Rng rng(1904);
  Instance ins = make_instance(rng, Variant::DTC, 2, 3, {4}, 1.0, 0.3);
  Eigen::VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(predict_analytic(ins.state, ins.ind, wrong), DimensionError);

  Eigen::VectorXd x(2);
  x.setZero();
  Rng r(5);
  CHECK_THROWS_AS(predict_pic(ins.state, ins.ind, ins.tb.data[0],
                              ins.tb.noise[0], x, Index(0), r),
                  DimensionError);
}
