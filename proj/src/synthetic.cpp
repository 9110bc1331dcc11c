#include "vbsgpr/synthetic.hpp"

#include "vbsgpr/kmeans.hpp"
#include "vbsgpr/rng.hpp"

namespace vbsgpr {

SyntheticData synth_gp_dataset(const SyntheticConfig& config) {
  const Index n = config.count;
  const Index d = config.dim;
  require(n >= 1, "synth_gp_dataset: need at least one point");
  require(n <= 5000, "synth_gp_dataset: dense sampler is capped at 5000 points");
  require(config.kernel.inverted_lengthscales.size() == d,
          "synth_gp_dataset: kernel dimension does not match input dimension");

  Rng rng(config.seed);
  SyntheticData out;
  out.config = config;
  out.X.resize(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < d; ++j)
      out.X(i, j) = (2.0 * rng.uniform() - 1.0) * config.input_halfwidth;

  Eigen::MatrixXd cov(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j <= i; ++j) {
      double v = cov_ff(out.X.row(i).transpose(), out.X.row(j).transpose(), config.kernel);
      cov(i, j) = v;
      cov(j, i) = v;
    }
  }

  if (config.variant == Variant::DTC || config.noise_blocks <= 1 ||
      config.noise.eps_inducing_inputs.rows() == 0) {
    const double s2 = config.noise.noise_std * config.noise.noise_std;
    cov.diagonal().array() += s2;
    out.noise_assignment.assign(1, {});
    auto& all = out.noise_assignment[0];
    for (Index i = 0; i < n; ++i) all.push_back(i);
    if (config.variant != Variant::DTC && config.noise_blocks > 1)
      warn("synth_gp_dataset: structured noise requested without epsilon inducing sites, "
           "falling back to homoscedastic noise");
  } else {
    Partition partition = kmeans_partition(out.X, config.noise_blocks, config.seed + 1);
    out.noise_assignment = partition.blocks;
    EpsFactor<double> eps = factor_eps_uu(config.noise);
    for (const auto& members : partition.blocks) {
      const Index b = static_cast<Index>(members.size());
      Eigen::MatrixXd Xb(b, d);
      for (Index r = 0; r < b; ++r) Xb.row(r) = out.X.row(members[static_cast<std::size_t>(r)]);
      NoiseBlock<double> block = build_noise_block(config.variant, Xb, config.noise, eps);
      if (block.is_diagonal()) {
        for (Index r = 0; r < b; ++r)
          cov(members[static_cast<std::size_t>(r)], members[static_cast<std::size_t>(r)]) +=
              block.diag[r];
      } else {
        for (Index r = 0; r < b; ++r)
          for (Index c = 0; c < b; ++c)
            cov(members[static_cast<std::size_t>(r)], members[static_cast<std::size_t>(c)]) +=
                block.cov(r, c);
      }
    }
  }

  Eigen::LLT<Eigen::MatrixXd> llt = robust_llt(cov, "synthetic joint covariance");
  Eigen::VectorXd z(n);
  for (Index i = 0; i < n; ++i) z[i] = rng.normal();
  out.y = llt.matrixL() * z;
  return out;
}

}  // namespace vbsgpr
