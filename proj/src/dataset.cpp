#include "vbsgpr/dataset.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

#include "vbsgpr/csv.hpp"

namespace vbsgpr {
namespace {

constexpr double kStdFloor = 1e-12;

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  if (end != begin + s.size()) return false;
  return std::isfinite(out);
}

Normalization fit_normalization(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  Normalization norm;
  norm.active = true;
  const Index d = X.cols();
  norm.x_mean = X.colwise().mean();
  norm.x_std.resize(d);
  for (Index j = 0; j < d; ++j) {
    double var = (X.col(j).array() - norm.x_mean[j]).square().mean();
    double sd = std::sqrt(var);
    if (sd < kStdFloor) {
      warn("input column " + std::to_string(j) + " is constant; scale floored");
      sd = kStdFloor;
    }
    norm.x_std[j] = sd;
  }
  norm.y_mean = y.mean();
  double y_var = (y.array() - norm.y_mean).square().mean();
  double y_sd = std::sqrt(y_var);
  if (y_sd < kStdFloor) {
    warn("target column is constant; scale floored");
    y_sd = kStdFloor;
  }
  norm.y_std = y_sd;
  return norm;
}

void apply_normalization(const Normalization& norm, Eigen::MatrixXd& X, Eigen::VectorXd& y) {
  X = normalize_inputs(norm, X);
  y = ((y.array() - norm.y_mean) / norm.y_std).matrix();
}

}  // namespace

Dataset ingest_csv(const std::string& path, const std::string& target_column,
                   const IngestOptions& options) {
  CsvTable table = read_csv(path);
  const Index target = table.column_index(target_column);
  if (target < 0)
    throw ParseError(path + ": target column '" + target_column + "' not found");

  Dataset data;
  data.target_name = target_column;
  const Index ncol = static_cast<Index>(table.columns.size());
  for (Index j = 0; j < ncol; ++j)
    if (j != target) data.feature_names.push_back(table.columns[static_cast<std::size_t>(j)]);
  const Index d = ncol - 1;
  if (d == 0) throw ParseError(path + ": no feature columns besides the target");

  const Index total = static_cast<Index>(table.rows.size());
  Eigen::MatrixXd X(total, d);
  Eigen::VectorXd y(total);
  Index kept = 0;
  Index rejected = 0;
  for (Index r = 0; r < total; ++r) {
    const auto& row = table.rows[static_cast<std::size_t>(r)];
    bool ok = true;
    Index jj = 0;
    for (Index j = 0; j < ncol && ok; ++j) {
      double v;
      if (!parse_double(row[static_cast<std::size_t>(j)], v)) {
        ok = false;
        break;
      }
      if (j == target)
        y[kept] = v;
      else
        X(kept, jj++) = v;
    }
    if (ok)
      ++kept;
    else
      ++rejected;
  }
  if (rejected > 0)
    warn(path + ": rejected " + std::to_string(rejected) +
         " of " + std::to_string(total) + " rows with missing or non-numeric values");
  if (kept == 0)
    throw ParseError(path + ": no usable rows (all " + std::to_string(total) +
                     " had missing or non-numeric values)");

  data.X = X.topRows(kept);
  data.y = y.head(kept);
  if (options.normalize) {
    data.norm = fit_normalization(data.X, data.y);
    apply_normalization(data.norm, data.X, data.y);
  } else {
    data.norm.x_mean = Eigen::VectorXd::Zero(d);
    data.norm.x_std = Eigen::VectorXd::Ones(d);
  }
  return data;
}

Dataset dataset_from_raw(Eigen::MatrixXd X, Eigen::VectorXd y, bool normalize) {
  require(X.rows() == y.size(), "dataset_from_raw: row count mismatch between X and y");
  Dataset data;
  data.target_name = "y";
  for (Index j = 0; j < X.cols(); ++j) data.feature_names.push_back("x" + std::to_string(j));
  data.X = std::move(X);
  data.y = std::move(y);
  if (normalize) {
    data.norm = fit_normalization(data.X, data.y);
    apply_normalization(data.norm, data.X, data.y);
  } else {
    data.norm.x_mean = Eigen::VectorXd::Zero(data.X.cols());
    data.norm.x_std = Eigen::VectorXd::Ones(data.X.cols());
  }
  return data;
}

Eigen::MatrixXd normalize_inputs(const Normalization& norm, const Eigen::MatrixXd& raw) {
  require(raw.cols() == norm.x_mean.size(),
          "normalize_inputs: input has " + std::to_string(raw.cols()) +
              " columns, transform expects " + std::to_string(norm.x_mean.size()));
  if (!norm.active) return raw;
  return (raw.rowwise() - norm.x_mean.transpose()).array().rowwise() /
         norm.x_std.transpose().array();
}

double denormalize_mean(const Normalization& norm, double value) {
  return norm.active ? value * norm.y_std + norm.y_mean : value;
}

double denormalize_variance(const Normalization& norm, double value) {
  return norm.active ? value * norm.y_std * norm.y_std : value;
}

}  // namespace vbsgpr
