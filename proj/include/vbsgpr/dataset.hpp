#pragma once

#include <string>
#include <vector>

#include "vbsgpr/base.hpp"

namespace vbsgpr {

// Per-column affine transform applied before training. Stored with the model
// so that prediction inputs go through the identical transform and outputs
// are mapped back.
struct Normalization {
  Eigen::VectorXd x_mean;
  Eigen::VectorXd x_std;
  double y_mean = 0.0;
  double y_std = 1.0;
  bool active = false;
};

struct Dataset {
  Eigen::MatrixXd X;
  Eigen::VectorXd y;
  std::vector<std::string> feature_names;
  std::string target_name;
  Normalization norm;

  Index count() const { return X.rows(); }
  Index dim() const { return X.cols(); }
};

struct IngestOptions {
  bool normalize = true;
};

// Reads a CSV with a header row, takes `target_column` as the regression
// target and every other column as a feature. Rows containing empty,
// non-numeric or non-finite cells are dropped with a warning that states
// how many were rejected. Throws ParseError when the target column is
// missing or no usable rows remain.
Dataset ingest_csv(const std::string& path, const std::string& target_column,
                   const IngestOptions& options = {});

// Wraps already-numeric data, optionally fitting the same normalization the
// CSV path applies.
Dataset dataset_from_raw(Eigen::MatrixXd X, Eigen::VectorXd y, bool normalize);

// Applies a stored transform to new raw inputs (rows of `raw`).
Eigen::MatrixXd normalize_inputs(const Normalization& norm, const Eigen::MatrixXd& raw);

double denormalize_mean(const Normalization& norm, double value);
double denormalize_variance(const Normalization& norm, double value);

}  // namespace vbsgpr
