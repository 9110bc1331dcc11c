#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vbsgpr/base.hpp"
#include "vbsgpr/dataset.hpp"
#include "vbsgpr/elbo.hpp"
#include "vbsgpr/kmeans.hpp"
#include "vbsgpr/model_io.hpp"
#include "vbsgpr/optimizer.hpp"
#include "vbsgpr/rng.hpp"

namespace vbsgpr {

struct TrainOptions {
  Variant variant = Variant::DTC;
  Index blocks = 10;
  Index inducing = 50;
  TrainConfig<double> config;
  std::string prior_preset = "standard";
  double zeta = 1.0;

  // Noise model. The epsilon-process inducing sites default to the block
  // centroids computed from the training inputs.
  double noise_std = 0.1;
  double eps_signal_std = 0.3;
  double eps_lengthscale = 1.0;

  // When set, the noise parameters are adapted by finite-difference ascent
  // on the minibatch objective every `noise_update_every` iterations.
  bool learn_noise = false;
  Index noise_update_every = 20;
  double noise_step = 0.05;

  int threads = 1;
};

HyperPrior<double> prior_from_preset(const std::string& preset, Index dim);

struct TraceRow {
  Index iter = 0;
  double seconds = 0.0;
  double elbo_estimate = 0.0;
  double grad_m_norm = 0.0;
  double grad_S_norm = 0.0;
  double grad_nu_norm = 0.0;
  double grad_xi_norm = 0.0;
  double grad_alpha_norm = 0.0;
  double grad_beta_norm = 0.0;
};

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows);

// Shared preparation for training and the convergence study: partition the
// inputs, build the per-block noise, factor the inducing prior and form the
// initial variational state.
struct TrainSetup {
  Partition partition;
  TrainingBlocks<double> tb;
  InducingSet<double> inducing;
  VariationalState<double> init;
  HyperPrior<double> prior;
  NoiseKernelParams<double> noise;
  Eigen::MatrixXd inducing_inputs;  // rotated coordinates at the initial nu
  double output_std = 1.0;
};

TrainSetup build_setup(const Dataset& data, const TrainOptions& options, Rng& rng);

struct TrainResult {
  ModelArtifact artifact;
  std::vector<TraceRow> trace;
  // Live copies for immediate evaluation without a reload round trip.
  InducingSet<double> inducing;
  VariationalState<double> state;
  Partition partition;
  double final_elbo_estimate = 0.0;
};

TrainResult train(const Dataset& data, const TrainOptions& options);

}  // namespace vbsgpr
