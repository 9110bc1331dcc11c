#pragma once

#include <cstdint>
#include <vector>

#include "vbsgpr/base.hpp"
#include "vbsgpr/kernel.hpp"
#include "vbsgpr/noise.hpp"

namespace vbsgpr {

// Ground-truth sampler: inputs drawn uniformly in a box, outputs drawn from
// the joint Gaussian implied by the signal kernel plus the per-variant noise
// covariance. Dense Cholesky, so n is capped at 5000.
struct SyntheticConfig {
  Index count = 1000;
  Index dim = 1;
  KernelParams<double> kernel;
  Variant variant = Variant::DTC;
  NoiseKernelParams<double> noise;
  Index noise_blocks = 1;  // partition granularity for the structured variants
  std::uint64_t seed = 0;
  double input_halfwidth = 2.0;
};

struct SyntheticData {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  SyntheticConfig config;  // the exact ground truth used
  std::vector<std::vector<Index>> noise_assignment;
};

SyntheticData synth_gp_dataset(const SyntheticConfig& config);

}  // namespace vbsgpr
