#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vbsgpr/base.hpp"
#include "vbsgpr/dataset.hpp"
#include "vbsgpr/elbo.hpp"
#include "vbsgpr/kernel.hpp"
#include "vbsgpr/noise.hpp"

namespace vbsgpr {

// Everything needed to reproduce predictions: the variational posterior, the
// inducing set, the noise model, the input/output transform and, for the
// PIC variant, the training blocks its predictor conditions on. Serialized
// as versioned plain text with full-precision floats; load followed by save
// reproduces the file byte for byte.
struct ModelArtifact {
  int format_version = 1;
  Variant variant = Variant::DTC;
  Index dim = 0;
  double zeta = 1.0;

  Eigen::MatrixXd inducing_inputs;  // rotated coordinates, one row per site
  Eigen::VectorXd m;
  Eigen::MatrixXd S_chol;
  Eigen::VectorXd nu;
  Eigen::VectorXd xi;
  double alpha = 0.0;
  double beta = 1.0;

  NoiseKernelParams<double> noise;
  Normalization norm;
  Eigen::MatrixXd block_centroids;  // normalized coordinates
  std::vector<std::string> feature_names;
  std::string target_name;

  // Training configuration echo, for provenance and reruns.
  Index blocks = 0;
  Index iterations = 0;
  Index batch = 1;
  std::uint64_t seed = 0;
  double step_a = 0.01;
  double step_tau = 100.0;
  double step_kappa = 0.75;
  std::string step_mode = "plain";
  std::string prior_preset = "standard";

  // PIC only: normalized training data per block, in centroid order.
  std::vector<BlockData<double>> train_blocks;
};

void save_model(const std::string& path, const ModelArtifact& artifact);
ModelArtifact load_model(const std::string& path);

// Artifact rehydrated into the working representation. For PIC models the
// per-block noise covariances are rebuilt as well.
struct LoadedModel {
  ModelArtifact artifact;
  InducingSet<double> inducing;
  VariationalState<double> state;
  std::vector<NoiseBlock<double>> block_noise;
};

LoadedModel instantiate_model(const ModelArtifact& artifact);
LoadedModel load_and_instantiate(const std::string& path);

}  // namespace vbsgpr
