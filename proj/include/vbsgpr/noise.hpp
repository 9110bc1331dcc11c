#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vbsgpr/base.hpp"
#include "vbsgpr/kernel.hpp"

namespace vbsgpr {

enum class Variant { DTC, FIC, FITC, PITC, PIC };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::DTC: return "dtc";
    case Variant::FIC: return "fic";
    case Variant::FITC: return "fitc";
    case Variant::PITC: return "pitc";
    case Variant::PIC: return "pic";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "dtc") return Variant::DTC;
  if (s == "fic") return Variant::FIC;
  if (s == "fitc") return Variant::FITC;
  if (s == "pitc") return Variant::PITC;
  if (s == "pic") return Variant::PIC;
  throw ParseError("unknown variant '" + s +
                   "' (expected dtc, fic, fitc, pitc or pic)");
}

// DTC, FIC and FITC all produce diagonal noise; PITC and PIC keep the full
// in-block covariance. PIC differs from PITC only at prediction time.
inline bool diagonal_noise(Variant v) {
  return v == Variant::DTC || v == Variant::FIC || v == Variant::FITC;
}

// Noise covariance of one training block. Diagonal variants store just the
// diagonal; block variants keep the matrix, its factor and explicit inverse
// (the inverse entries feed the kernel-expectation sums).
template <typename Scalar>
struct NoiseBlock {
  Variant variant = Variant::DTC;
  VectorX<Scalar> diag;             // diagonal variants
  MatrixX<Scalar> cov;              // block variants
  MatrixX<Scalar> inv;              // block variants
  Eigen::LLT<MatrixX<Scalar>> llt;  // block variants
  Scalar logdet = 0;

  Index size() const {
    return diagonal_noise(variant) ? diag.size() : cov.rows();
  }
  bool is_diagonal() const { return diagonal_noise(variant); }
};

template <typename Scalar>
VectorX<Scalar> apply_inverse(const NoiseBlock<Scalar>& C,
                              const VectorX<Scalar>& v) {
  require(v.size() == C.size(), "apply_inverse: vector length mismatch");
  if (C.is_diagonal()) return v.cwiseQuotient(C.diag);
  return C.llt.solve(v);
}

template <typename Scalar>
Scalar block_logdet(const NoiseBlock<Scalar>& C) {
  return C.logdet;
}

// Cached Cholesky of K^eps_UU so several blocks can share it.
template <typename Scalar>
struct EpsFactor {
  Eigen::LLT<MatrixX<Scalar>> uu_llt;
};

template <typename Scalar, typename DerivedA, typename DerivedB>
Scalar eps_cov(const NoiseKernelParams<Scalar>& np,
               const Eigen::MatrixBase<DerivedA>& a,
               const Eigen::MatrixBase<DerivedB>& b) {
  Scalar q = 0;
  for (Index k = 0; k < a.size(); ++k) {
    const Scalar t = np.eps_inverted_lengthscales[k] * (a(k) - b(k));
    q += t * t;
  }
  return np.eps_signal_std * np.eps_signal_std * std::exp(Scalar(-0.5) * q);
}

template <typename Scalar>
EpsFactor<Scalar> factor_eps_uu(const NoiseKernelParams<Scalar>& np) {
  const Index m = np.eps_inducing_inputs.rows();
  const Index d = np.eps_inducing_inputs.cols();
  require(m >= 1, "noise kernel: U_eps must be nonempty for this variant");
  require(np.eps_inverted_lengthscales.size() == d,
          "noise kernel: lengthscale dimension mismatch");
  MatrixX<Scalar> K(m, m);
  for (Index a = 0; a < m; ++a)
    for (Index b = 0; b <= a; ++b) {
      const Scalar v = eps_cov(np, np.eps_inducing_inputs.row(a),
                               np.eps_inducing_inputs.row(b));
      K(a, b) = v;
      K(b, a) = v;
    }
  EpsFactor<Scalar> f;
  f.uu_llt = robust_llt(K, "K_eps_UU");
  return f;
}

namespace detail {

// Schur complement K^eps_DD - K^eps_DU (K^eps_UU)^-1 K^eps_UD for one block.
// Mathematically PSD; tiny negative diagonals from roundoff are clamped and
// anything worse than the tolerance is a real error.
template <typename Scalar>
MatrixX<Scalar> eps_schur(const MatrixX<Scalar>& X_i,
                          const NoiseKernelParams<Scalar>& np,
                          const EpsFactor<Scalar>& f) {
  const Index n = X_i.rows();
  const Index m = np.eps_inducing_inputs.rows();
  require(X_i.cols() == np.eps_inducing_inputs.cols(),
          "noise kernel: input dimension mismatch");
  MatrixX<Scalar> Kdd(n, n), Kdu(n, m);
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b <= a; ++b) {
      const Scalar v = eps_cov(np, X_i.row(a), X_i.row(b));
      Kdd(a, b) = v;
      Kdd(b, a) = v;
    }
    for (Index u = 0; u < m; ++u)
      Kdu(a, u) = eps_cov(np, X_i.row(a), np.eps_inducing_inputs.row(u));
  }
  MatrixX<Scalar> S = Kdd - Kdu * f.uu_llt.solve(Kdu.transpose());
  S = ((S + S.transpose()) * Scalar(0.5)).eval();
  const Scalar tol =
      Scalar(1e-8) * np.eps_signal_std * np.eps_signal_std;
  for (Index a = 0; a < n; ++a) {
    if (S(a, a) < -tol)
      throw NumericError(
          "noise Schur complement has a negative diagonal beyond tolerance");
    if (S(a, a) < 0) S(a, a) = 0;
  }
  return S;
}

}  // namespace detail

// C_i for one block: sigma_n^2 I for DTC, the diagonal of the Schur-complement
// block for FIC/FITC, the full block for PITC/PIC.
template <typename Scalar>
NoiseBlock<Scalar> build_noise_block(Variant variant,
                                     const MatrixX<Scalar>& X_i,
                                     const NoiseKernelParams<Scalar>& np,
                                     const EpsFactor<Scalar>& eps) {
  require(X_i.rows() >= 1, "build_noise_block: block must be nonempty");
  const Scalar sn2 = np.noise_std * np.noise_std;
  NoiseBlock<Scalar> C;
  C.variant = variant;
  if (variant == Variant::DTC) {
    C.diag = VectorX<Scalar>::Constant(X_i.rows(), sn2);
    C.logdet = Scalar(X_i.rows()) * std::log(sn2);
    return C;
  }
  const MatrixX<Scalar> S = detail::eps_schur(X_i, np, eps);
  if (diagonal_noise(variant)) {
    C.diag = S.diagonal().array() + sn2;
    C.logdet = C.diag.array().log().sum();
    return C;
  }
  C.cov = S;
  C.cov.diagonal().array() += sn2;
  C.llt = robust_llt(C.cov, "noise block");
  C.inv = C.llt.solve(MatrixX<Scalar>::Identity(C.cov.rows(), C.cov.cols()));
  C.inv = ((C.inv + C.inv.transpose()) * Scalar(0.5)).eval();
  C.logdet = llt_log_det(C.llt);
  return C;
}

template <typename Scalar>
NoiseBlock<Scalar> build_noise_block(Variant variant,
                                     const MatrixX<Scalar>& X_i,
                                     const NoiseKernelParams<Scalar>& np) {
  if (variant == Variant::DTC) {
    EpsFactor<Scalar> unused;
    return build_noise_block(variant, X_i, np, unused);
  }
  return build_noise_block(variant, X_i, np, factor_eps_uu(np));
}

// All blocks of a partitioned training set, sharing one K^eps_UU factor.
template <typename Scalar>
std::vector<NoiseBlock<Scalar>> build_noise_blocks(
    Variant variant, const std::vector<MatrixX<Scalar>>& blocks,
    const NoiseKernelParams<Scalar>& np) {
  std::vector<NoiseBlock<Scalar>> out;
  out.reserve(blocks.size());
  if (variant == Variant::DTC) {
    EpsFactor<Scalar> unused;
    for (const auto& X_i : blocks)
      out.push_back(build_noise_block(variant, X_i, np, unused));
  } else {
    const EpsFactor<Scalar> eps = factor_eps_uu(np);
    for (const auto& X_i : blocks)
      out.push_back(build_noise_block(variant, X_i, np, eps));
  }
  return out;
}

}  // namespace vbsgpr
