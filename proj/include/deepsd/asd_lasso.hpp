#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "deepsd/grid.hpp"
#include "deepsd/metrics.hpp"
#include "deepsd/series.hpp"

namespace deepsd::asd {

// ---------------------------------------------------------------------------
// Lasso: min_w,b  1/2 mean((y - b - Xw)^2) + lambda * |w|_1, intercept free.

struct LinearModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // objective after each sweep, if tracked
};

struct LassoOptions {
  double tolerance = 1e-7;  // on the largest coefficient change in a sweep
  std::size_t max_sweeps = 10000;
  bool track_objective = false;
};

inline double soft_threshold(double rho, double lambda) {
  if (rho > lambda) return rho - lambda;
  if (rho < -lambda) return rho + lambda;
  return 0.0;
}

double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, double b, double lambda);

/// Cyclic coordinate descent. Non-convergence within max_sweeps is reported
/// through `converged`, not thrown.
LinearModel lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                      const LassoOptions& options = {});

// ---------------------------------------------------------------------------
// L1 logistic regression: min  mean(log(1 + e^z) - y z) + lambda * |w|_1,
// z = b + Xw, by accelerated proximal gradient.

struct LogisticModel {
  Eigen::VectorXd weights;
  double intercept = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  bool degenerate = false;  // single-class training data
  double prior = 0.5;       // positive-class frequency in training data

  double probability(const Eigen::Ref<const Eigen::VectorXd>& features) const;
};

struct LogisticOptions {
  double tolerance = 1e-7;
  std::size_t max_iterations = 50000;
};

struct SmoothLoss {
  double value = 0.0;
  Eigen::VectorXd grad_w;
  double grad_b = 0.0;
};

/// Mean logistic loss (no penalty) and its gradient.
SmoothLoss logistic_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels,
                         const Eigen::VectorXd& w, double b);

LogisticModel logistic_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels, double lambda,
                           const LogisticOptions& options = {});

// ---------------------------------------------------------------------------
// Per-location two-step downscaling model.

struct AsdOptions {
  double rain_threshold = 1.0;  // mm/day; HR > threshold is a rainy day
  std::vector<double> lambda_grid = {1e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1};
  std::size_t folds = 3;
  std::uint64_t seed = 0;
  std::size_t box = 9;
  std::size_t min_rainy_days = 10;
};

struct AsdLocationModel {
  CellIndex location;   // HR cell
  CellIndex lr_center;  // LR cell containing it
  std::size_t factor = 8;
  std::size_t box = 9;
  double rain_threshold = 1.0;
  double lambda_classifier = 0.0;
  double lambda_regressor = 0.0;
  std::vector<double> feature_mean;
  std::vector<double> feature_std;
  double target_mean = 0.0;
  double target_std = 1.0;
  LogisticModel classifier;
  LinearModel regressor;
};

/// box x box LR values centred on `center`, row-major, borders replicated.
std::vector<double> box_features(const GeoGrid& lr, CellIndex center, std::size_t box);

/// Fold id per sample: a seeded permutation dealt round-robin.
std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed);

/// Throws DataError when fewer than min_rainy_days training days are rainy.
AsdLocationModel fit_asd(CellIndex location, const GridSeries& lr_train,
                         const GridSeries& hr_train, const AsdOptions& options = {});

/// 0 when the rain probability is below 0.5, else max(0, regression).
double predict_asd(const AsdLocationModel& model, const GeoGrid& lr_day);

/// ASD1 layout (little-endian): magic "ASD1", u32 count, then per model
///   u32 row, col, lr_row, lr_col, factor, box, p (= box*box)
///   f64 rain_threshold, lambda_classifier, lambda_regressor
///   f64 feature_mean[p], feature_std[p], target_mean, target_std
///   u8 degenerate, f64 prior, f64 classifier_intercept, f64 classifier_w[p]
///   f64 regressor_intercept, f64 regressor_w[p]
void save_asd_models(const std::vector<AsdLocationModel>& models, const std::filesystem::path& path);
std::vector<AsdLocationModel> load_asd_models(const std::filesystem::path& path);

}  // namespace deepsd::asd
