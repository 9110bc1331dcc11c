#pragma once

#include <cmath>
#include <sstream>
#include <string>

#include "vbsgpr/base.hpp"

namespace vbsgpr {

// Squared-exponential kernel hyperparameters used when the kernel is
// evaluated at a point estimate: diagonal of the input rotation Lambda and
// the signal standard deviation.
template <typename Scalar>
struct KernelParams {
  VectorX<Scalar> inverted_lengthscales;  // diag(Lambda), all > 0
  Scalar signal_std;                      // sigma_f > 0
};

// Hyperparameters of the noise kernel k_eps plus the iid noise floor. These
// are always point-valued; eps_inducing_inputs live in the original input
// space and feed only the noise-covariance construction.
template <typename Scalar>
struct NoiseKernelParams {
  VectorX<Scalar> eps_inverted_lengthscales;
  Scalar eps_signal_std;
  Scalar noise_std;                    // sigma_n
  MatrixX<Scalar> eps_inducing_inputs;  // |U_eps| x d
};

// k(x, x') = sigma_f^2 exp(-1/2 |Lambda x - Lambda x'|^2)
template <typename Scalar, typename DA, typename DB>
Scalar cov_ff(const Eigen::MatrixBase<DA>& x, const Eigen::MatrixBase<DB>& x2,
              const KernelParams<Scalar>& p) {
  require(x.size() == x2.size() && x.size() == p.inverted_lengthscales.size(),
          "cov_ff: dimension mismatch");
  Scalar q = 0;
  for (Index k = 0; k < x.size(); ++k) {
    const Scalar t = p.inverted_lengthscales[k] * (x[k] - x2[k]);
    q += t * t;
  }
  return p.signal_std * p.signal_std * std::exp(Scalar(-0.5) * q);
}

// cov[f_x, s_z] = zeta sigma_f exp(-1/2 |Lambda x - z|^2); z is already in the
// rotated space.
template <typename Scalar, typename DA, typename DB>
Scalar cov_fs(const Eigen::MatrixBase<DA>& x, const Eigen::MatrixBase<DB>& z,
              const KernelParams<Scalar>& p, Scalar zeta) {
  require(x.size() == z.size() && x.size() == p.inverted_lengthscales.size(),
          "cov_fs: dimension mismatch");
  Scalar q = 0;
  for (Index k = 0; k < x.size(); ++k) {
    const Scalar t = p.inverted_lengthscales[k] * x[k] - z[k];
    q += t * t;
  }
  return zeta * p.signal_std * std::exp(Scalar(-0.5) * q);
}

// cov[s_z, s_z'] = zeta^2 exp(-1/2 |z - z'|^2): free of Lambda and sigma_f.
template <typename Scalar, typename DA, typename DB>
Scalar cov_ss(const Eigen::MatrixBase<DA>& z, const Eigen::MatrixBase<DB>& z2,
              Scalar zeta) {
  require(z.size() == z2.size(), "cov_ss: dimension mismatch");
  Scalar q = 0;
  for (Index k = 0; k < z.size(); ++k) {
    const Scalar t = z[k] - z2[k];
    q += t * t;
  }
  return zeta * zeta * std::exp(Scalar(-0.5) * q);
}

// The rotated inducing inputs together with their (hyperparameter-free) prior
// covariance. The stored matrix keeps the exact zeta^2 diagonal; any jitter
// needed to factorize lives only inside the Cholesky factor.
template <typename Scalar>
struct InducingSet {
  MatrixX<Scalar> rotated_inputs;  // |I| x d
  Scalar prior_scale = 1;          // zeta
  MatrixX<Scalar> sigma;           // Sigma_II assembled from cov_ss
  Eigen::LLT<MatrixX<Scalar>> sigma_llt;  // factor of sigma + jitter*I
  Scalar jitter = 0;

  Index count() const { return rotated_inputs.rows(); }
  Index dim() const { return rotated_inputs.cols(); }

  Scalar log_det_sigma() const {
    Scalar s = 0;
    const auto& L = sigma_llt.matrixLLT();
    for (Index i = 0; i < L.rows(); ++i) s += std::log(L(i, i));
    return 2 * s;
  }

  template <typename Rhs>
  auto solve(const Rhs& b) const {
    return sigma_llt.solve(b);
  }

  MatrixX<Scalar> inverse() const {
    return sigma_llt.solve(
        MatrixX<Scalar>::Identity(sigma.rows(), sigma.cols()));
  }
};

namespace detail {

// Eigenvalue-based condition estimate for the error message when no amount of
// jitter rescues the factorization.
template <typename Scalar>
std::string condition_message(const MatrixX<Scalar>& A) {
  Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(A,
                                                    Eigen::EigenvaluesOnly);
  std::ostringstream os;
  os << "eigenvalue range [" << es.eigenvalues().minCoeff() << ", "
     << es.eigenvalues().maxCoeff() << "]";
  return os.str();
}

}  // namespace detail

// Assembles Sigma_II from cov_ss and factorizes it. Jitter policy: try the
// clean matrix first, then 1e-10 zeta^2 growing tenfold per failure up to
// 1e-4 zeta^2.
template <typename Scalar>
InducingSet<Scalar> build_sigma_II(const MatrixX<Scalar>& rotated_inputs,
                                   Scalar zeta) {
  require(rotated_inputs.rows() >= 1, "build_sigma_II: need at least one point");
  require(zeta > 0, "build_sigma_II: zeta must be positive");

  InducingSet<Scalar> I;
  I.rotated_inputs = rotated_inputs;
  I.prior_scale = zeta;

  const Index m = rotated_inputs.rows();
  I.sigma.resize(m, m);
  for (Index a = 0; a < m; ++a) {
    I.sigma(a, a) = zeta * zeta;
    for (Index b = 0; b < a; ++b) {
      const Scalar v =
          cov_ss(rotated_inputs.row(a).transpose(),
                 rotated_inputs.row(b).transpose(), zeta);
      I.sigma(a, b) = v;
      I.sigma(b, a) = v;
    }
  }

  I.sigma_llt.compute(I.sigma);
  if (I.sigma_llt.info() == Eigen::Success) {
    // A factorization that technically succeeded can still be so close to
    // singular that solves against it are useless; treat it like a failure
    // and fall through to the jitter ladder.
    const VectorX<Scalar> diag = I.sigma_llt.matrixLLT().diagonal();
    const Scalar rcond_proxy = diag.minCoeff() / diag.maxCoeff();
    if (rcond_proxy * rcond_proxy > Scalar(1e-12)) {
      I.jitter = 0;
      return I;
    }
  }

  const Scalar z2 = zeta * zeta;
  Scalar last_valid_jitter = 0;
  for (Scalar j = Scalar(1e-10) * z2; j <= Scalar(1e-4) * z2; j *= 10) {
    MatrixX<Scalar> jittered = I.sigma;
    jittered.diagonal().array() += j;
    I.sigma_llt.compute(jittered);
    if (I.sigma_llt.info() != Eigen::Success) continue;
    last_valid_jitter = j;
    const VectorX<Scalar> diag = I.sigma_llt.matrixLLT().diagonal();
    const Scalar rcond_proxy = diag.minCoeff() / diag.maxCoeff();
    if (rcond_proxy * rcond_proxy > Scalar(1e-12)) {
      I.jitter = j;
      std::ostringstream os;
      os << "Sigma_II required jitter " << j << " to factorize";
      warn(os.str());
      return I;
    }
  }
  // Prefer a usable if poorly conditioned factor over refusing outright.
  if (last_valid_jitter > 0) {
    MatrixX<Scalar> jittered = I.sigma;
    jittered.diagonal().array() += last_valid_jitter;
    I.sigma_llt.compute(jittered);
    I.jitter = last_valid_jitter;
    std::ostringstream os;
    os << "Sigma_II is severely ill conditioned even with jitter "
       << last_valid_jitter << "; expect slow or unstable optimization";
    warn(os.str());
    return I;
  }
  throw NumericError("Sigma_II Cholesky failed at maximum jitter; " +
                     detail::condition_message(I.sigma));
}

// Factorizes an arbitrary SPD matrix with the same jitter ladder, scaled by
// the matrix's mean diagonal. Shared by the noise blocks and the PIC
// predictive joint.
template <typename Scalar>
Eigen::LLT<MatrixX<Scalar>> robust_llt(const MatrixX<Scalar>& A,
                                       const char* label) {
  Eigen::LLT<MatrixX<Scalar>> llt(A);
  if (llt.info() == Eigen::Success) return llt;
  const Scalar scale = A.diagonal().cwiseAbs().mean();
  for (Scalar j = Scalar(1e-10) * scale; j <= Scalar(1e-4) * scale; j *= 10) {
    MatrixX<Scalar> jittered = A;
    jittered.diagonal().array() += j;
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) {
      std::ostringstream os;
      os << label << " required jitter " << j << " to factorize";
      warn(os.str());
      return llt;
    }
  }
  throw NumericError(std::string(label) + " Cholesky failed at maximum jitter; " +
                     detail::condition_message(A));
}

template <typename Scalar>
Scalar llt_log_det(const Eigen::LLT<MatrixX<Scalar>>& llt) {
  Scalar s = 0;
  const auto& L = llt.matrixLLT();
  for (Index i = 0; i < L.rows(); ++i) s += std::log(L(i, i));
  return 2 * s;
}

}  // namespace vbsgpr
