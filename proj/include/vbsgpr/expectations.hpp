#pragma once

#include <cmath>
#include <vector>

#include "vbsgpr/base.hpp"
#include "vbsgpr/noise.hpp"

namespace vbsgpr {

/*
 * Gaussian expectations of the reparameterized kernel over the variational
 * hyperparameter posterior q(Lambda) q(sigma_f):
 *
 *   omega(z, x)    = E[cov_fs(x, z)]                     (per entry)
 *   psi(z, z')     = E[(K C^-1 K)_{zz'}] for one block   (sum over x, x')
 *   gamma(x, x')   = E[cov_ff(x, x')]                    (per entry)
 *
 * together with their derivatives with respect to the variational parameters
 * (nu, xi, alpha, beta). All functions here are zeta-free; the assembly layer
 * scales omega by zeta and psi by zeta^2. Products over input dimensions are
 * accumulated in log space and exponentiated once, which keeps high-d inputs
 * from underflowing factor by factor.
 */

template <typename Scalar>
struct HyperVariational {
  VectorX<Scalar> nu;  // means of lambda_i
  VectorX<Scalar> xi;  // variances of lambda_i, > 0
  Scalar alpha = 0;    // mean of sigma_f
  Scalar beta = 1;     // variance of sigma_f, > 0

  Index dim() const { return nu.size(); }
  Scalar second_moment() const { return beta + alpha * alpha; }
};

// Gradient (or gradient contraction) with respect to the four variational
// hyperparameter groups.
template <typename Scalar>
struct HyperGrad {
  VectorX<Scalar> d_nu;
  VectorX<Scalar> d_xi;
  Scalar d_alpha = 0;
  Scalar d_beta = 0;

  static HyperGrad Zero(Index d) {
    HyperGrad g;
    g.d_nu = VectorX<Scalar>::Zero(d);
    g.d_xi = VectorX<Scalar>::Zero(d);
    return g;
  }

  HyperGrad& operator+=(const HyperGrad& o) {
    d_nu += o.d_nu;
    d_xi += o.d_xi;
    d_alpha += o.d_alpha;
    d_beta += o.d_beta;
    return *this;
  }

  HyperGrad& operator*=(Scalar s) {
    d_nu *= s;
    d_xi *= s;
    d_alpha *= s;
    d_beta *= s;
    return *this;
  }
};

// omega_zx = alpha prod_k (xi_k x_k^2 + 1)^{-1/2}
//                       exp(-(x_k nu_k - z_k)^2 / (2 (xi_k x_k^2 + 1)))
template <typename Scalar, typename DA, typename DB>
Scalar omega_entry(const Eigen::MatrixBase<DA>& z,
                   const Eigen::MatrixBase<DB>& x,
                   const HyperVariational<Scalar>& h) {
  require(z.size() == x.size() && z.size() == h.dim(),
          "omega_entry: dimension mismatch");
  Scalar s = 0;
  for (Index k = 0; k < z.size(); ++k) {
    const Scalar u = h.xi[k] * x[k] * x[k] + 1;
    const Scalar e = x[k] * h.nu[k] - z[k];
    s += Scalar(-0.5) * std::log(u) - e * e / (2 * u);
  }
  return h.alpha * std::exp(s);
}

template <typename Scalar, typename DA, typename DB>
HyperGrad<Scalar> omega_grads(const Eigen::MatrixBase<DA>& z,
                              const Eigen::MatrixBase<DB>& x,
                              const HyperVariational<Scalar>& h) {
  const Index d = h.dim();
  require(z.size() == d && x.size() == d, "omega_grads: dimension mismatch");
  Scalar s = 0;
  for (Index k = 0; k < d; ++k) {
    const Scalar u = h.xi[k] * x[k] * x[k] + 1;
    const Scalar e = x[k] * h.nu[k] - z[k];
    s += Scalar(-0.5) * std::log(u) - e * e / (2 * u);
  }
  const Scalar base = std::exp(s);  // omega / alpha
  const Scalar w = h.alpha * base;
  HyperGrad<Scalar> g = HyperGrad<Scalar>::Zero(d);
  for (Index k = 0; k < d; ++k) {
    const Scalar u = h.xi[k] * x[k] * x[k] + 1;
    const Scalar e = x[k] * h.nu[k] - z[k];
    g.d_nu[k] = w * (z[k] * x[k] - h.nu[k] * x[k] * x[k]) / u;
    g.d_xi[k] = w * x[k] * x[k] * (e * e - u) / (2 * u * u);
  }
  g.d_alpha = base;
  g.d_beta = 0;
  return g;
}

// gamma_xx' = (beta + alpha^2) prod_k (xi_k d_k^2 + 1)^{-1/2}
//                       exp(-nu_k^2 d_k^2 / (2 (xi_k d_k^2 + 1))), d = x - x'
template <typename Scalar, typename DA, typename DB>
Scalar upsilon_entry(const Eigen::MatrixBase<DA>& x,
                     const Eigen::MatrixBase<DB>& x2,
                     const HyperVariational<Scalar>& h) {
  require(x.size() == x2.size() && x.size() == h.dim(),
          "upsilon_entry: dimension mismatch");
  Scalar s = 0;
  for (Index k = 0; k < x.size(); ++k) {
    const Scalar dd = (x[k] - x2[k]) * (x[k] - x2[k]);
    const Scalar u = h.xi[k] * dd + 1;
    s += Scalar(-0.5) * std::log(u) - h.nu[k] * h.nu[k] * dd / (2 * u);
  }
  return h.second_moment() * std::exp(s);
}

template <typename Scalar, typename DA, typename DB>
HyperGrad<Scalar> upsilon_grads(const Eigen::MatrixBase<DA>& x,
                                const Eigen::MatrixBase<DB>& x2,
                                const HyperVariational<Scalar>& h) {
  const Index d = h.dim();
  require(x.size() == d && x2.size() == d, "upsilon_grads: dimension mismatch");
  Scalar s = 0;
  for (Index k = 0; k < d; ++k) {
    const Scalar dd = (x[k] - x2[k]) * (x[k] - x2[k]);
    const Scalar u = h.xi[k] * dd + 1;
    s += Scalar(-0.5) * std::log(u) - h.nu[k] * h.nu[k] * dd / (2 * u);
  }
  const Scalar base = std::exp(s);  // gamma / (beta + alpha^2)
  const Scalar g0 = h.second_moment() * base;
  HyperGrad<Scalar> g = HyperGrad<Scalar>::Zero(d);
  for (Index k = 0; k < d; ++k) {
    const Scalar dd = (x[k] - x2[k]) * (x[k] - x2[k]);
    const Scalar u = h.xi[k] * dd + 1;
    g.d_nu[k] = g0 * (-h.nu[k] * dd / u);
    g.d_xi[k] =
        g0 * ((h.nu[k] * h.nu[k] - h.xi[k]) * dd * dd - dd) / (2 * u * u);
  }
  g.d_alpha = 2 * h.alpha * base;
  g.d_beta = base;
  return g;
}

// E[K_ID_i] without the alpha factor: entry (z, x) of the omega matrix over a
// block, so that omega = alpha * base and d omega / d alpha = base.
template <typename Scalar>
MatrixX<Scalar> omega_block_base(const MatrixX<Scalar>& Z,
                                 const MatrixX<Scalar>& Xb,
                                 const HyperVariational<Scalar>& h) {
  const Index m = Z.rows();
  const Index n = Xb.rows();
  const Index d = Z.cols();
  require(Xb.cols() == d && h.dim() == d,
          "omega_block_base: dimension mismatch");

  // Exponent for column x is quadratic in z; assemble the quadratic and
  // linear coefficient matrices once and use two products over all columns.
  MatrixX<Scalar> Acoef(d, n), Bcoef(d, n);
  VectorX<Scalar> c0(n);
  for (Index j = 0; j < n; ++j) {
    Scalar cj = 0;
    for (Index k = 0; k < d; ++k) {
      const Scalar xk = Xb(j, k);
      const Scalar u = h.xi[k] * xk * xk + 1;
      const Scalar A = 1 / (2 * u);
      Acoef(k, j) = A;
      Bcoef(k, j) = -2 * A * h.nu[k] * xk;
      cj += A * h.nu[k] * h.nu[k] * xk * xk + Scalar(0.5) * std::log(u);
    }
    c0[j] = cj;
  }
  MatrixX<Scalar> Zsq = Z.array().square();
  MatrixX<Scalar> out(m, n);
  out.noalias() = Zsq * Acoef + Z * Bcoef;
  out.rowwise() += c0.transpose();
  out.array() = (-out.array()).exp();
  return out;
}

template <typename Scalar>
MatrixX<Scalar> omega_block(const MatrixX<Scalar>& Z, const MatrixX<Scalar>& Xb,
                            const HyperVariational<Scalar>& h) {
  return h.alpha * omega_block_base(Z, Xb, h);
}

// Contraction <H, d base/d nu_i> and <H, d base/d xi_i> for the omega matrix,
// where H already carries the weight times whatever scaling (zeta, alpha) the
// caller folded into it. Alpha and beta components are left to the caller:
// d omega/d alpha is the base matrix itself and d omega/d beta is zero.
template <typename Scalar>
void omega_contract_grads(const MatrixX<Scalar>& Z, const MatrixX<Scalar>& Xb,
                          const HyperVariational<Scalar>& h,
                          const MatrixX<Scalar>& H, VectorX<Scalar>& d_nu,
                          VectorX<Scalar>& d_xi) {
  const Index n = Xb.rows();
  const Index d = Z.cols();
  MatrixX<Scalar> Zsq = Z.array().square();
  VectorX<Scalar> colsum = H.colwise().sum();
  MatrixX<Scalar> ZtH(d, n), ZsqtH(d, n);
  ZtH.noalias() = Z.transpose() * H;
  ZsqtH.noalias() = Zsq.transpose() * H;
  for (Index j = 0; j < n; ++j) {
    for (Index k = 0; k < d; ++k) {
      const Scalar xk = Xb(j, k);
      const Scalar u = h.xi[k] * xk * xk + 1;
      d_nu[k] += (xk * ZtH(k, j) - h.nu[k] * xk * xk * colsum[j]) / u;
      d_xi[k] += xk * xk *
                 ((h.nu[k] * h.nu[k] * xk * xk - u) * colsum[j] -
                  2 * h.nu[k] * xk * ZtH(k, j) + ZsqtH(k, j)) /
                 (2 * u * u);
    }
  }
}

namespace detail {

/*
 * Shared worker for the psi block. The entry (z, z') is a sum over ordered
 * pairs (x, x') in the block, weighted by the entries of C^-1. Each pair
 * contributes
 *
 *   T(z, z') = (beta + alpha^2) c_{xx'} exp(logw - r(z) - c(z') + z' Kap z')
 *
 * with r, c quadratic in z and the cross term a rank-d product, so the whole
 * |I| x |I| pair matrix comes out of two rank-1 updates and one GEMM. The
 * unordered pair (x', x) contributes the transpose, and its gradient
 * contraction against a symmetric weight equals the ordered one, so pairs are
 * visited once with a multiplicity of two off the diagonal.
 *
 * When `weight` is given, the worker accumulates <weight, d psi/d .> into
 * `grad` alongside the assembly.
 */
template <typename Scalar, typename CinvFn>
void psi_pairs(const MatrixX<Scalar>& Z, const MatrixX<Scalar>& Xb,
               const HyperVariational<Scalar>& h, CinvFn cinv, bool diag_only,
               const MatrixX<Scalar>* weight, MatrixX<Scalar>& psi,
               HyperGrad<Scalar>* grad) {
  const Index m = Z.rows();
  const Index n = Xb.rows();
  const Index d = Z.cols();
  require(Xb.cols() == d && h.dim() == d, "psi_block: dimension mismatch");

  psi.setZero(m, m);
  const MatrixX<Scalar> Zsq = Z.array().square();
  const Scalar s2 = h.second_moment();
  const Scalar logs2 = std::log(s2);

  ArrayX<Scalar> u(d), A(d), kap(d), ar(d), br(d), ac(d), bc(d);
  VectorX<Scalar> rv(m), cv(m), rsum(m), csum(m);
  MatrixX<Scalar> T(m, m), Zk(m, d), H, HZ;
  VectorX<Scalar> ZtR(d), ZtC(d), ZsqtR(d), ZsqtC(d), crossd(d);
  if (grad) {
    H.resize(m, m);
    HZ.resize(m, d);
  }

  for (Index j = 0; j < n; ++j) {
    const Index jp_lo = diag_only ? j : 0;
    for (Index jp = jp_lo; jp <= j; ++jp) {
      const Scalar c = cinv(j, jp);
      if (c == Scalar(0)) continue;
      const auto x = Xb.row(j).transpose().array();
      const auto x2 = Xb.row(jp).transpose().array();
      const ArrayX<Scalar> a = x.square() + x2.square();
      u = h.xi.array() * a + 1;
      A = Scalar(0.5) / u;
      const Scalar logw = logs2 - Scalar(0.5) * u.log().sum();

      ar = A * (1 + h.xi.array() * x2.square());
      br = -2 * A * h.nu.array() * x;
      const Scalar cr = (A * h.nu.array().square() * x.square()).sum();
      ac = A * (1 + h.xi.array() * x.square());
      bc = -2 * A * h.nu.array() * x2;
      const Scalar cc = (A * h.nu.array().square() * x2.square()).sum();
      kap = 2 * A * h.xi.array() * x * x2;

      rv.noalias() = Zsq * ar.matrix() + Z * br.matrix();
      rv.array() += cr;
      cv.noalias() = Zsq * ac.matrix() + Z * bc.matrix();
      cv.array() += cc;
      Zk.noalias() = Z * kap.matrix().asDiagonal();
      T.noalias() = Zk * Z.transpose();
      T.colwise() -= rv;
      T.rowwise() -= cv.transpose();
      T.array() = (T.array() + logw).exp() * c;

      psi += T;
      if (jp < j) psi += T.transpose();

      if (grad) {
        const Scalar mult = (jp < j) ? 2 : 1;
        H = weight->cwiseProduct(T);
        const Scalar t0 = H.sum();
        rsum = H.rowwise().sum();
        csum = H.colwise().sum().transpose();
        ZtR.noalias() = Z.transpose() * rsum;
        ZtC.noalias() = Z.transpose() * csum;
        ZsqtR.noalias() = Zsq.transpose() * rsum;
        ZsqtC.noalias() = Zsq.transpose() * csum;
        HZ.noalias() = H * Z;
        crossd = Z.cwiseProduct(HZ).colwise().sum().transpose();

        grad->d_nu.array() +=
            mult *
            (x * ZtR.array() + x2 * ZtC.array() - h.nu.array() * a * t0) / u;
        grad->d_xi.array() +=
            mult *
            ((h.nu.array().square() * a.square() - a * u) * t0 -
             2 * h.nu.array() * a * (x * ZtR.array() + x2 * ZtC.array()) +
             x.square() * ZsqtR.array() + x2.square() * ZsqtC.array() +
             2 * x * x2 * crossd.array()) /
            (2 * u.square());
      }
    }
  }

  if (grad) {
    const Scalar mdot = (weight->array() * psi.array()).sum();
    grad->d_alpha += 2 * h.alpha * mdot / s2;
    grad->d_beta += mdot / s2;
  }
}

}  // namespace detail

// Full-noise psi block: Cinv is the dense inverse of the block noise matrix.
template <typename Scalar>
MatrixX<Scalar> psi_block(const MatrixX<Scalar>& Z, const MatrixX<Scalar>& Xb,
                          const MatrixX<Scalar>& Cinv,
                          const HyperVariational<Scalar>& h) {
  require(Cinv.rows() == Xb.rows() && Cinv.cols() == Xb.rows(),
          "psi_block: C inverse has wrong shape");
  MatrixX<Scalar> psi;
  detail::psi_pairs(
      Z, Xb, h, [&](Index j, Index jp) { return Cinv(j, jp); }, false,
      static_cast<const MatrixX<Scalar>*>(nullptr), psi,
      static_cast<HyperGrad<Scalar>*>(nullptr));
  return psi;
}

// Diagonal-noise psi block: cdiag holds the diagonal of C itself.
template <typename Scalar>
MatrixX<Scalar> psi_block(const MatrixX<Scalar>& Z, const MatrixX<Scalar>& Xb,
                          const VectorX<Scalar>& cdiag,
                          const HyperVariational<Scalar>& h) {
  require(cdiag.size() == Xb.rows(), "psi_block: diagonal has wrong length");
  MatrixX<Scalar> psi;
  detail::psi_pairs(
      Z, Xb, h, [&](Index j, Index) { return 1 / cdiag[j]; }, true,
      static_cast<const MatrixX<Scalar>*>(nullptr), psi,
      static_cast<HyperGrad<Scalar>*>(nullptr));
  return psi;
}

// Fused assembly plus gradient contraction: returns psi and accumulates
// <weight, d psi / d .> into grad. weight must be symmetric.
template <typename Scalar>
MatrixX<Scalar> psi_block_contract(const MatrixX<Scalar>& Z,
                                   const MatrixX<Scalar>& Xb,
                                   const MatrixX<Scalar>& Cinv,
                                   const HyperVariational<Scalar>& h,
                                   const MatrixX<Scalar>& weight,
                                   HyperGrad<Scalar>& grad) {
  MatrixX<Scalar> psi;
  detail::psi_pairs(
      Z, Xb, h, [&](Index j, Index jp) { return Cinv(j, jp); }, false, &weight,
      psi, &grad);
  return psi;
}

template <typename Scalar>
MatrixX<Scalar> psi_block_contract(const MatrixX<Scalar>& Z,
                                   const MatrixX<Scalar>& Xb,
                                   const VectorX<Scalar>& cdiag,
                                   const HyperVariational<Scalar>& h,
                                   const MatrixX<Scalar>& weight,
                                   HyperGrad<Scalar>& grad) {
  MatrixX<Scalar> psi;
  detail::psi_pairs(
      Z, Xb, h, [&](Index j, Index) { return 1 / cdiag[j]; }, true, &weight,
      psi, &grad);
  return psi;
}

// Materialized derivative matrices of a psi block, one per coordinate of nu
// and xi. Built from scalar per-pair factors; the contraction path above is
// checked against these in the tests.
template <typename Scalar>
struct PsiBlockGrads {
  std::vector<MatrixX<Scalar>> d_nu;
  std::vector<MatrixX<Scalar>> d_xi;
  MatrixX<Scalar> d_alpha;
  MatrixX<Scalar> d_beta;
};

namespace detail {

template <typename Scalar, typename CinvFn>
PsiBlockGrads<Scalar> psi_grads_impl(const MatrixX<Scalar>& Z,
                                     const MatrixX<Scalar>& Xb,
                                     const HyperVariational<Scalar>& h,
                                     CinvFn cinv, bool diag_only) {
  const Index m = Z.rows();
  const Index n = Xb.rows();
  const Index d = Z.cols();
  PsiBlockGrads<Scalar> g;
  g.d_nu.assign(d, MatrixX<Scalar>::Zero(m, m));
  g.d_xi.assign(d, MatrixX<Scalar>::Zero(m, m));
  MatrixX<Scalar> psi = MatrixX<Scalar>::Zero(m, m);
  const Scalar s2 = h.second_moment();

  for (Index j = 0; j < n; ++j) {
    for (Index jp = diag_only ? j : 0; jp <= j; ++jp) {
      const Scalar c = cinv(j, jp);
      if (c == Scalar(0)) continue;
      for (Index zi = 0; zi < m; ++zi)
        for (Index zj = 0; zj < m; ++zj) {
          Scalar s = 0;
          for (Index k = 0; k < d; ++k) {
            const Scalar xk = Xb(j, k), x2k = Xb(jp, k);
            const Scalar a = xk * xk + x2k * x2k;
            const Scalar u = h.xi[k] * a + 1;
            const Scalar cross = Z(zj, k) * xk - Z(zi, k) * x2k;
            const Scalar e1 = xk * h.nu[k] - Z(zi, k);
            const Scalar e2 = x2k * h.nu[k] - Z(zj, k);
            s += Scalar(-0.5) * std::log(u) -
                 (h.xi[k] * cross * cross + e1 * e1 + e2 * e2) / (2 * u);
          }
          const Scalar t = s2 * c * std::exp(s);
          psi(zi, zj) += t;
          if (jp < j) psi(zj, zi) += t;
          for (Index k = 0; k < d; ++k) {
            const Scalar xk = Xb(j, k), x2k = Xb(jp, k);
            const Scalar a = xk * xk + x2k * x2k;
            const Scalar u = h.xi[k] * a + 1;
            const Scalar lin = Z(zi, k) * xk + Z(zj, k) * x2k - h.nu[k] * a;
            const Scalar fn = lin / u;
            const Scalar fx = (-a * u + lin * lin) / (2 * u * u);
            g.d_nu[k](zi, zj) += t * fn;
            g.d_xi[k](zi, zj) += t * fx;
            if (jp < j) {
              g.d_nu[k](zj, zi) += t * fn;
              g.d_xi[k](zj, zi) += t * fx;
            }
          }
        }
    }
  }
  g.d_alpha = 2 * h.alpha / s2 * psi;
  g.d_beta = psi / s2;
  return g;
}

}  // namespace detail

template <typename Scalar>
PsiBlockGrads<Scalar> psi_block_grads(const MatrixX<Scalar>& Z,
                                      const MatrixX<Scalar>& Xb,
                                      const MatrixX<Scalar>& Cinv,
                                      const HyperVariational<Scalar>& h) {
  return detail::psi_grads_impl(
      Z, Xb, h, [&](Index j, Index jp) { return Cinv(j, jp); }, false);
}

template <typename Scalar>
PsiBlockGrads<Scalar> psi_block_grads(const MatrixX<Scalar>& Z,
                                      const MatrixX<Scalar>& Xb,
                                      const VectorX<Scalar>& cdiag,
                                      const HyperVariational<Scalar>& h) {
  return detail::psi_grads_impl(
      Z, Xb, h, [&](Index j, Index) { return 1 / cdiag[j]; }, true);
}

// Tr[C_i^-1 Upsilon_i] over one block.
template <typename Scalar>
Scalar upsilon_trace_term(const MatrixX<Scalar>& Xb, const MatrixX<Scalar>& Cinv,
                          const HyperVariational<Scalar>& h) {
  const Index n = Xb.rows();
  require(Cinv.rows() == n && Cinv.cols() == n,
          "upsilon_trace_term: C inverse has wrong shape");
  Scalar tr = 0;
  for (Index j = 0; j < n; ++j) {
    tr += Cinv(j, j) * h.second_moment();
    for (Index jp = 0; jp < j; ++jp)
      tr += 2 * Cinv(j, jp) *
            upsilon_entry(Xb.row(j).transpose(), Xb.row(jp).transpose(), h);
  }
  return tr;
}

// Diagonal noise: gamma_xx = beta + alpha^2, so only the diagonal survives.
template <typename Scalar>
Scalar upsilon_trace_term(const MatrixX<Scalar>& Xb,
                          const VectorX<Scalar>& cdiag,
                          const HyperVariational<Scalar>& h) {
  require(cdiag.size() == Xb.rows(),
          "upsilon_trace_term: diagonal has wrong length");
  return h.second_moment() * cdiag.cwiseInverse().sum();
}

template <typename Scalar>
HyperGrad<Scalar> upsilon_trace_grads(const MatrixX<Scalar>& Xb,
                                      const MatrixX<Scalar>& Cinv,
                                      const HyperVariational<Scalar>& h) {
  const Index n = Xb.rows();
  HyperGrad<Scalar> g = HyperGrad<Scalar>::Zero(h.dim());
  for (Index j = 0; j < n; ++j) {
    g.d_alpha += 2 * h.alpha * Cinv(j, j);
    g.d_beta += Cinv(j, j);
    for (Index jp = 0; jp < j; ++jp) {
      HyperGrad<Scalar> e =
          upsilon_grads(Xb.row(j).transpose(), Xb.row(jp).transpose(), h);
      e *= 2 * Cinv(j, jp);
      g += e;
    }
  }
  return g;
}

template <typename Scalar>
HyperGrad<Scalar> upsilon_trace_grads(const MatrixX<Scalar>& Xb,
                                      const VectorX<Scalar>& cdiag,
                                      const HyperVariational<Scalar>& h) {
  HyperGrad<Scalar> g = HyperGrad<Scalar>::Zero(h.dim());
  const Scalar s = cdiag.cwiseInverse().sum();
  g.d_alpha = 2 * h.alpha * s;
  g.d_beta = s;
  return g;
}

// Scaled per-block expectation matrices as consumed by the bound and its
// gradients. omega and d_alpha carry the zeta factor, psi carries zeta^2,
// the trace term has none.
template <typename Scalar>
struct BlockExpectations {
  MatrixX<Scalar> omega;        // zeta * alpha * base, |I| x n_i
  MatrixX<Scalar> omega_dalpha;  // zeta * base
  MatrixX<Scalar> psi;          // zeta^2 * psi block, |I| x |I|
  Scalar upsilon_trace = 0;
};

template <typename Scalar>
BlockExpectations<Scalar> compute_block_expectations(
    const MatrixX<Scalar>& Z, const MatrixX<Scalar>& Xb,
    const NoiseBlock<Scalar>& C, const HyperVariational<Scalar>& h,
    Scalar zeta) {
  BlockExpectations<Scalar> e;
  e.omega_dalpha = zeta * omega_block_base(Z, Xb, h);
  e.omega = h.alpha * e.omega_dalpha;
  if (C.is_diagonal()) {
    e.psi = zeta * zeta * psi_block(Z, Xb, C.diag, h);
    e.upsilon_trace = upsilon_trace_term(Xb, C.diag, h);
  } else {
    e.psi = zeta * zeta * psi_block(Z, Xb, C.inv, h);
    e.upsilon_trace = upsilon_trace_term(Xb, C.inv, h);
  }
  return e;
}

}  // namespace vbsgpr
