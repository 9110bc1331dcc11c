#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "vbsgpr/kernel.hpp"
#include "vbsgpr/rng.hpp"

using namespace vbsgpr;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

struct WarningCapture {
  std::vector<std::string> messages;
  std::function<void(const std::string&)> saved;
  WarningCapture() {
    saved = warning_handler();
    warning_handler() = [this](const std::string& m) { messages.push_back(m); };
  }
  ~WarningCapture() { warning_handler() = saved; }
};

}  // namespace

TEST_CASE("cov_ff matches the direct formula") {
  KernelParams<double> p;
  p.inverted_lengthscales = vec({1.0});
  p.signal_std = 2.0;
  CHECK(cov_ff(vec({0.0}), vec({0.0}), p) == doctest::Approx(4.0));
  CHECK(cov_ff(vec({0.0}), vec({1.0}), p) ==
        doctest::Approx(4.0 * std::exp(-0.5)));

  p.inverted_lengthscales = vec({2.0, 0.5});
  p.signal_std = 1.5;
  const double q = 2.0 * 2.0 * 0.3 * 0.3 + 0.5 * 0.5 * 1.2 * 1.2;
  CHECK(cov_ff(vec({1.0, 0.0}), vec({1.3, 1.2}), p) ==
        doctest::Approx(1.5 * 1.5 * std::exp(-0.5 * q)));

  // symmetric in its arguments
  CHECK(cov_ff(vec({0.7, -0.2}), vec({-1.1, 0.4}), p) ==
        doctest::Approx(cov_ff(vec({-1.1, 0.4}), vec({0.7, -0.2}), p)));

  CHECK_THROWS_AS(cov_ff(vec({1.0}), vec({1.0, 2.0}), p), DimensionError);
}

TEST_CASE("cov_fs rotates only its first argument and scales with zeta") {
  KernelParams<double> p;
  p.inverted_lengthscales = vec({2.0});
  p.signal_std = 3.0;
  // lambda x = 2*0.5 = 1 equals z: exponent 0
  CHECK(cov_fs(vec({0.5}), vec({1.0}), p, 1.0) == doctest::Approx(3.0));
  CHECK(cov_fs(vec({0.5}), vec({1.0}), p, 1.7) == doctest::Approx(3.0 * 1.7));
  const double e = 2.0 * 0.5 - 2.0;
  CHECK(cov_fs(vec({0.5}), vec({2.0}), p, 1.0) ==
        doctest::Approx(3.0 * std::exp(-0.5 * e * e)));
}

TEST_CASE("cov_ss is hyperparameter-free") {
  CHECK(cov_ss(vec({1.0, 2.0}), vec({1.0, 2.0}), 1.3) ==
        doctest::Approx(1.3 * 1.3));
  CHECK(cov_ss(vec({0.0}), vec({2.0}), 1.0) == doctest::Approx(std::exp(-2.0)));
}

TEST_CASE("build_sigma_II produces a usable factorization on separated sites") {
  Rng rng(3);
  MatrixX<double> Z(6, 2);
  for (Index i = 0; i < 6; ++i)
    for (Index k = 0; k < 2; ++k) Z(i, k) = 4.0 * rng.uniform() - 2.0;
  WarningCapture wc;
  InducingSet<double> ind = build_sigma_II(Z, 1.0);
  CHECK(wc.messages.empty());
  CHECK(ind.jitter == 0.0);
  CHECK(ind.count() == 6);
  CHECK(ind.dim() == 2);

  for (Index a = 0; a < 6; ++a)
    for (Index b = 0; b < 6; ++b)
      CHECK(ind.sigma(a, b) ==
            doctest::Approx(cov_ss(Z.row(a).transpose(), Z.row(b).transpose(),
                                   1.0)));

  // solve and inverse agree with the assembled matrix
  const MatrixX<double> I6 = MatrixX<double>::Identity(6, 6);
  CHECK((ind.sigma * ind.inverse() - I6).cwiseAbs().maxCoeff() < 1e-10);
  VectorX<double> b = VectorX<double>::LinSpaced(6, -1.0, 1.0);
  CHECK((ind.sigma * ind.solve(b) - b).cwiseAbs().maxCoeff() < 1e-10);

  // log determinant against an eigendecomposition
  Eigen::SelfAdjointEigenSolver<MatrixX<double>> es(ind.sigma);
  CHECK(ind.log_det_sigma() ==
        doctest::Approx(es.eigenvalues().array().log().sum()).epsilon(1e-10));
}

TEST_CASE("build_sigma_II scales with zeta") {
  MatrixX<double> Z(3, 1);
  Z << -1.0, 0.2, 1.4;
  InducingSet<double> a = build_sigma_II(Z, 1.0);
  InducingSet<double> b = build_sigma_II(Z, 2.5);
  CHECK((b.sigma - 2.5 * 2.5 * a.sigma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("build_sigma_II repairs a duplicated site with jitter and warns") {
  MatrixX<double> Z(3, 1);
  Z << 0.0, 0.0, 1.0;  // identical first two rows: exactly singular
  WarningCapture wc;
  InducingSet<double> ind = build_sigma_II(Z, 1.0);
  CHECK(ind.jitter > 0.0);
  CHECK(!wc.messages.empty());
  // the factor must still solve the jittered system
  const MatrixX<double> jittered =
      ind.sigma + ind.jitter * MatrixX<double>::Identity(3, 3);
  VectorX<double> rhs = vec({1.0, -2.0, 0.5});
  // conditioning is ~zeta^2/jitter here, so only a loose residual is attainable
  CHECK((jittered * ind.solve(rhs) - rhs).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("build_sigma_II rejects bad arguments") {
  MatrixX<double> Z(2, 1);
  Z << 0.0, 1.0;
  CHECK_THROWS_AS(build_sigma_II(Z, 0.0), DimensionError);
  CHECK_THROWS_AS(build_sigma_II(Z, -1.0), DimensionError);
  CHECK_THROWS_AS(build_sigma_II(MatrixX<double>(0, 1), 1.0), DimensionError);
}

TEST_CASE("robust_llt factors a PD matrix without jitter") {
  MatrixX<double> A(2, 2);
  A << 4.0, 1.0, 1.0, 3.0;
  auto llt = robust_llt(A, "test matrix");
  CHECK(llt.info() == Eigen::Success);
  CHECK(llt_log_det(llt) == doctest::Approx(std::log(4.0 * 3.0 - 1.0)));
}

TEST_CASE("robust_llt rescues a singular matrix") {
  MatrixX<double> A(2, 2);
  A << 1.0, 1.0, 1.0, 1.0;
  WarningCapture wc;
  auto llt = robust_llt(A, "rank-deficient");
  CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("llt_log_det matches a dense determinant") {
  Rng rng(9);
  MatrixX<double> B(4, 4);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) B(i, j) = rng.normal();
  MatrixX<double> A = B * B.transpose() + 4.0 * MatrixX<double>::Identity(4, 4);
  Eigen::LLT<MatrixX<double>> llt(A);
  CHECK(llt_log_det(llt) ==
        doctest::Approx(std::log(A.determinant())).epsilon(1e-10));
}
