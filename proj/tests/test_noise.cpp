#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "vbsgpr/noise.hpp"
#include "vbsgpr/rng.hpp"

using namespace vbsgpr;

namespace {

// Reference computation of the structured noise covariance, assembled with
// plain loops and a pivoted dense solve instead of the library's shared
// Cholesky factor.
Eigen::MatrixXd reference_noise_cov(const Eigen::MatrixXd& X,
                                    const NoiseKernelParams<double>& np) {
  const Index n = X.rows();
  const Index m = np.eps_inducing_inputs.rows();
  const Index d = X.cols();
  auto k = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double q = 0.0;
    for (Index i = 0; i < d; ++i) {
      const double t = np.eps_inverted_lengthscales[i] * (a[i] - b[i]);
      q += t * t;
    }
    return np.eps_signal_std * np.eps_signal_std * std::exp(-0.5 * q);
  };
  Eigen::MatrixXd Kdd(n, n), Kdu(n, m), Kuu(m, m);
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b)
      Kdd(a, b) = k(X.row(a).transpose(), X.row(b).transpose());
  for (Index a = 0; a < n; ++a)
    for (Index u = 0; u < m; ++u)
      Kdu(a, u) = k(X.row(a).transpose(),
                    np.eps_inducing_inputs.row(u).transpose());
  for (Index u = 0; u < m; ++u)
    for (Index v = 0; v < m; ++v)
      Kuu(u, v) = k(np.eps_inducing_inputs.row(u).transpose(),
                    np.eps_inducing_inputs.row(v).transpose());
  Eigen::MatrixXd S =
      Kdd - Kdu * Kuu.fullPivLu().solve(Kdu.transpose());
  S.diagonal().array() += np.noise_std * np.noise_std;
  return S;
}

NoiseKernelParams<double> sample_noise_params(Rng& rng, Index d, Index m) {
  NoiseKernelParams<double> np;
  np.eps_inverted_lengthscales = Eigen::VectorXd(d);
  for (Index k = 0; k < d; ++k)
    np.eps_inverted_lengthscales[k] = 0.5 + rng.uniform();
  np.eps_signal_std = 0.3 + 0.4 * rng.uniform();
  np.noise_std = 0.1 + 0.2 * rng.uniform();
  np.eps_inducing_inputs = Eigen::MatrixXd(m, d);
  for (Index u = 0; u < m; ++u)
    for (Index k = 0; k < d; ++k)
      np.eps_inducing_inputs(u, k) = 4.0 * rng.uniform() - 2.0;
  return np;
}

Eigen::MatrixXd sample_inputs(Rng& rng, Index n, Index d) {
  Eigen::MatrixXd X(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index k = 0; k < d; ++k) X(i, k) = 4.0 * rng.uniform() - 2.0;
  return X;
}

}  // namespace

TEST_CASE("variant names round-trip and bad names are rejected") {
  for (Variant v : {Variant::DTC, Variant::FIC, Variant::FITC, Variant::PITC,
                    Variant::PIC})
    CHECK(parse_variant(variant_name(v)) == v);
  CHECK_THROWS_AS(parse_variant("sor"), ParseError);
  CHECK(diagonal_noise(Variant::DTC));
  CHECK(diagonal_noise(Variant::FIC));
  CHECK(diagonal_noise(Variant::FITC));
  CHECK(!diagonal_noise(Variant::PITC));
  CHECK(!diagonal_noise(Variant::PIC));
}

TEST_CASE("DTC block is white noise") {
  Rng rng(1);
  NoiseKernelParams<double> np = sample_noise_params(rng, 2, 3);
  np.noise_std = 0.25;
  Eigen::MatrixXd X = sample_inputs(rng, 5, 2);
  NoiseBlock<double> C = build_noise_block(Variant::DTC, X, np);
  CHECK(C.is_diagonal());
  CHECK(C.size() == 5);
  CHECK((C.diag.array() - 0.0625).abs().maxCoeff() < 1e-15);
  CHECK(C.logdet == doctest::Approx(5.0 * std::log(0.0625)));
}

TEST_CASE("FITC and FIC blocks match the reference Schur diagonal") {
  Rng rng(2);
  for (int rep = 0; rep < 4; ++rep) {
    const Index d = 1 + rep % 3;
    NoiseKernelParams<double> np = sample_noise_params(rng, d, 4);
    Eigen::MatrixXd X = sample_inputs(rng, 6, d);
    const Eigen::MatrixXd ref = reference_noise_cov(X, np);
    for (Variant v : {Variant::FIC, Variant::FITC}) {
      NoiseBlock<double> C = build_noise_block(v, X, np);
      REQUIRE(C.is_diagonal());
      CHECK((C.diag - ref.diagonal()).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(C.logdet ==
            doctest::Approx(ref.diagonal().array().log().sum()).epsilon(1e-10));
    }
  }
}

TEST_CASE("PITC block keeps the full covariance") {
  Rng rng(3);
  for (int rep = 0; rep < 4; ++rep) {
    const Index d = 1 + rep % 2;
    NoiseKernelParams<double> np = sample_noise_params(rng, d, 5);
    Eigen::MatrixXd X = sample_inputs(rng, 7, d);
    const Eigen::MatrixXd ref = reference_noise_cov(X, np);
    NoiseBlock<double> C = build_noise_block(Variant::PITC, X, np);
    REQUIRE(!C.is_diagonal());
    CHECK(C.size() == 7);
    CHECK((C.cov - ref).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((C.inv * ref - Eigen::MatrixXd::Identity(7, 7))
              .cwiseAbs()
              .maxCoeff() < 1e-8);
    CHECK((C.inv - C.inv.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(C.logdet ==
          doctest::Approx(std::log(ref.determinant())).epsilon(1e-9));
  }
}

TEST_CASE("PIC training noise equals PITC noise") {
  Rng rng(4);
  NoiseKernelParams<double> np = sample_noise_params(rng, 2, 4);
  Eigen::MatrixXd X = sample_inputs(rng, 6, 2);
  NoiseBlock<double> a = build_noise_block(Variant::PITC, X, np);
  NoiseBlock<double> b = build_noise_block(Variant::PIC, X, np);
  CHECK((a.cov - b.cov).cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.logdet == b.logdet);
}

TEST_CASE("apply_inverse agrees with a dense solve") {
  Rng rng(5);
  NoiseKernelParams<double> np = sample_noise_params(rng, 2, 4);
  Eigen::MatrixXd X = sample_inputs(rng, 6, 2);
  Eigen::VectorXd v(6);
  for (Index i = 0; i < 6; ++i) v[i] = rng.normal();
  const Eigen::MatrixXd ref = reference_noise_cov(X, np);
  for (Variant var : {Variant::FITC, Variant::PITC}) {
    NoiseBlock<double> C = build_noise_block(var, X, np);
    Eigen::MatrixXd dense = C.is_diagonal()
                                ? Eigen::MatrixXd(C.diag.asDiagonal())
                                : C.cov;
    Eigen::VectorXd got = apply_inverse(C, v);
    CHECK((dense * got - v).cwiseAbs().maxCoeff() < 1e-9);
  }
  NoiseBlock<double> C = build_noise_block(Variant::PITC, X, np);
  const Eigen::VectorXd wrong = Eigen::VectorXd::Zero(5);
  CHECK_THROWS_AS(apply_inverse(C, wrong), DimensionError);
}

TEST_CASE("shared factor builds match per-block builds") {
  Rng rng(6);
  NoiseKernelParams<double> np = sample_noise_params(rng, 2, 4);
  std::vector<Eigen::MatrixXd> blocks;
  for (int i = 0; i < 3; ++i) blocks.push_back(sample_inputs(rng, 4 + i, 2));
  for (Variant v : {Variant::DTC, Variant::FITC, Variant::PITC}) {
    auto shared = build_noise_blocks(v, blocks, np);
    REQUIRE(shared.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
      NoiseBlock<double> solo = build_noise_block(v, blocks[i], np);
      if (solo.is_diagonal())
        CHECK((shared[i].diag - solo.diag).cwiseAbs().maxCoeff() == 0.0);
      else
        CHECK((shared[i].cov - solo.cov).cwiseAbs().maxCoeff() == 0.0);
      CHECK(shared[i].logdet == solo.logdet);
    }
  }
}

TEST_CASE("noise variance shrinks near the noise inducing sites") {
  // With an eps site sitting on a training input, the Schur complement there
  // is ~0 and the FITC diagonal collapses to sigma_n^2.
  NoiseKernelParams<double> np;
  np.eps_inverted_lengthscales = Eigen::VectorXd::Ones(1);
  np.eps_signal_std = 0.5;
  np.noise_std = 0.1;
  np.eps_inducing_inputs = Eigen::MatrixXd(1, 1);
  np.eps_inducing_inputs << 0.0;
  Eigen::MatrixXd X(2, 1);
  X << 0.0, 5.0;  // first point on the site, second far away
  NoiseBlock<double> C = build_noise_block(Variant::FITC, X, np);
  CHECK(C.diag[0] == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(C.diag[1] == doctest::Approx(0.01 + 0.25).epsilon(1e-6));
}

TEST_CASE("empty blocks and missing eps sites are rejected") {
  Rng rng(7);
  NoiseKernelParams<double> np = sample_noise_params(rng, 1, 2);
  CHECK_THROWS_AS(build_noise_block(Variant::DTC, Eigen::MatrixXd(0, 1), np),
                  DimensionError);
  np.eps_inducing_inputs = Eigen::MatrixXd(0, 1);
  Eigen::MatrixXd X = sample_inputs(rng, 3, 1);
  CHECK_THROWS_AS(build_noise_block(Variant::FITC, X, np), DimensionError);
}
