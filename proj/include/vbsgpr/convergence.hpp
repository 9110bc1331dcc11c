#pragma once

#include <vector>

#include "vbsgpr/base.hpp"
#include "vbsgpr/dataset.hpp"
#include "vbsgpr/train.hpp"

namespace vbsgpr {

// Tracks how the stochastic optimizer approaches the deterministically
// converged posterior on the same problem instance. The reference is found
// by full-gradient ascent with backtracking line search; the stochastic run
// then starts from the same initial state and logs divergences toward it.
struct ConvergenceOptions {
  TrainOptions train;
  Index log_every = 50;
  Index reference_max_iterations = 2000;
  double reference_tolerance = 1e-10;  // relative bound improvement
};

struct ConvergenceRow {
  Index iter = 0;
  double kl_inducing = 0.0;   // KL(q_t(s_I) || q_ref(s_I))
  double kl_hyper = 0.0;      // KL(q_t(Lambda, sigma_f) || q_ref(...))
  double kl_to_qstar = 0.0;   // KL(q_t(s_I) || q*(s_I) at q_t's hyperparameters)
  double elbo = 0.0;
};

struct ConvergenceResult {
  std::vector<ConvergenceRow> rows;
  double reference_elbo = 0.0;
  Index reference_iterations = 0;
  // Least-squares slope of log KL against iteration, negative when the
  // trajectory tightens toward the reference.
  double slope_log_kl_inducing = 0.0;
  double slope_log_kl_hyper = 0.0;
};

ConvergenceResult convergence_study(const Dataset& data, const ConvergenceOptions& options);

void write_convergence_csv(const std::string& path, const ConvergenceResult& result);

// Slope of a least-squares line through (t, values); pairs with non-finite
// values are skipped.
double trend_slope(const std::vector<double>& t, const std::vector<double>& values);

}  // namespace vbsgpr
