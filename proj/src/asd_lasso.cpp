#include "deepsd/asd_lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "deepsd/binary.hpp"
#include "deepsd/errors.hpp"
#include "deepsd/random.hpp"
#include "deepsd/raster_io.hpp"

namespace deepsd::asd {

double lasso_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& w, double b, double lambda) {
  const Eigen::VectorXd r = y - x * w - Eigen::VectorXd::Constant(y.size(), b);
  return 0.5 * r.squaredNorm() / static_cast<double>(y.size()) + lambda * w.lpNorm<1>();
}

LinearModel lasso_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                      const LassoOptions& options) {
  if (x.rows() != y.size() || x.rows() == 0) throw DataError("lasso: X and y sizes differ");
  if (lambda < 0.0) throw DataError("lasso: lambda must be >= 0");
  const auto n = static_cast<double>(x.rows());
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd z = xc.colwise().squaredNorm().transpose() / n;

  LinearModel m;
  m.weights = Eigen::VectorXd::Zero(x.cols());
  Eigen::VectorXd r = y.array() - y_mean;
  for (std::size_t sweep = 1; sweep <= options.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const double old = m.weights[j];
      double updated = 0.0;
      if (z[j] > 0.0) {
        const double rho = xc.col(j).dot(r) / n + z[j] * old;
        updated = soft_threshold(rho, lambda) / z[j];
      }
      if (updated != old) {
        r.noalias() -= (updated - old) * xc.col(j);
        m.weights[j] = updated;
        max_change = std::max(max_change, std::abs(updated - old));
      }
    }
    m.iterations = sweep;
    if (options.track_objective) {
      m.objective_trace.push_back(0.5 * r.squaredNorm() / n + lambda * m.weights.lpNorm<1>());
    }
    if (max_change < options.tolerance) {
      m.converged = true;
      break;
    }
  }
  m.intercept = y_mean - x_mean.dot(m.weights);
  return m;
}

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) without overflow.
double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

double LogisticModel::probability(const Eigen::Ref<const Eigen::VectorXd>& features) const {
  if (degenerate) return prior;
  return sigmoid(intercept + weights.dot(features));
}

SmoothLoss logistic_loss(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels,
                         const Eigen::VectorXd& w, double b) {
  const auto n = static_cast<double>(x.rows());
  const Eigen::VectorXd z = (x * w).array() + b;
  SmoothLoss out;
  Eigen::VectorXd residual(z.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    out.value += softplus(z[i]) - labels[i] * z[i];
    residual[i] = sigmoid(z[i]) - labels[i];
  }
  out.value /= n;
  out.grad_w = x.transpose() * residual / n;
  out.grad_b = residual.sum() / n;
  return out;
}

LogisticModel logistic_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels, double lambda,
                           const LogisticOptions& options) {
  if (x.rows() != labels.size() || x.rows() == 0) throw DataError("logistic: X and labels differ");
  if (lambda < 0.0) throw DataError("logistic: lambda must be >= 0");
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0 && labels[i] != 1.0) throw DataError("logistic: labels must be 0 or 1");
  }
  LogisticModel m;
  m.prior = labels.mean();
  m.weights = Eigen::VectorXd::Zero(x.cols());
  if (m.prior == 0.0 || m.prior == 1.0) {
    m.degenerate = true;
    m.converged = true;
    return m;
  }

  // Lipschitz constant of the smooth part: 0.25 * largest eigenvalue of
  // [1 X]^T [1 X] / n.
  const auto n = static_cast<double>(x.rows());
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  const Eigen::MatrixXd gram = design.transpose() * design / n;
  const double lipschitz = 0.25 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(gram).eigenvalues().maxCoeff();
  const double step = 1.0 / lipschitz;

  const auto objective = [&](const Eigen::VectorXd& w, double b) {
    const Eigen::VectorXd z = (x * w).array() + b;
    double v = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) v += softplus(z[i]) - labels[i] * z[i];
    return v / n + lambda * w.lpNorm<1>();
  };

  // FISTA with function-value restart.
  Eigen::VectorXd w = m.weights, w_prev = w, yw = w;
  double b = std::log(m.prior / (1.0 - m.prior));
  double b_prev = b, yb = b;
  double t = 1.0;
  double f_prev = objective(w, b);
  for (std::size_t it = 1; it <= options.max_iterations; ++it) {
    const SmoothLoss g = logistic_loss(x, labels, yw, yb);
    Eigen::VectorXd w_next = yw - step * g.grad_w;
    for (Eigen::Index j = 0; j < w_next.size(); ++j) w_next[j] = soft_threshold(w_next[j], step * lambda);
    const double b_next = yb - step * g.grad_b;

    const double change =
        std::max((w_next - w).cwiseAbs().maxCoeff(), std::abs(b_next - b));
    w_prev = w;
    b_prev = b;
    w = std::move(w_next);
    b = b_next;
    m.iterations = it;

    const double f = objective(w, b);
    if (f > f_prev) {
      t = 1.0;
      yw = w;
      yb = b;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      const double beta = (t - 1.0) / t_next;
      yw = w + beta * (w - w_prev);
      yb = b + beta * (b - b_prev);
      t = t_next;
    }
    f_prev = f;
    if (change < options.tolerance) {
      m.converged = true;
      break;
    }
  }
  m.weights = w;
  m.intercept = b;
  return m;
}

std::vector<double> box_features(const GeoGrid& lr, CellIndex center, std::size_t box) {
  if (box % 2 == 0) throw DataError("feature box size must be odd");
  const auto half = static_cast<long long>(box / 2);
  const auto rows = static_cast<long long>(lr.rows());
  const auto cols = static_cast<long long>(lr.cols());
  std::vector<double> out;
  out.reserve(box * box);
  for (long long dr = -half; dr <= half; ++dr) {
    const auto r = static_cast<std::size_t>(std::clamp(static_cast<long long>(center.row) + dr, 0LL, rows - 1));
    for (long long dc = -half; dc <= half; ++dc) {
      const auto c = static_cast<std::size_t>(std::clamp(static_cast<long long>(center.col) + dc, 0LL, cols - 1));
      out.push_back(lr(r, c));
    }
  }
  return out;
}

std::vector<std::size_t> fold_assignment(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw DataError("cross-validation needs at least two folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed, 0xf01d);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[static_cast<std::size_t>(rng.below(i))]);
  }
  std::vector<std::size_t> fold(n);
  for (std::size_t k = 0; k < n; ++k) fold[perm[k]] = k % folds;
  return fold;
}

namespace {

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& x, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
  return out;
}

// Mean held-out score across folds for one lambda; lower is better.
template <typename Score>
double cross_validate(const std::vector<std::size_t>& fold, std::size_t folds, Score score) {
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < fold.size(); ++i) {
      (fold[i] == k ? test : train).push_back(static_cast<Eigen::Index>(i));
    }
    if (train.empty() || test.empty()) continue;
    total += score(train, test);
    ++used;
  }
  return used ? total / static_cast<double>(used) : std::numeric_limits<double>::infinity();
}

std::size_t infer_factor(const GeoGrid& hr, const GeoGrid& lr) {
  if (hr.rows() % lr.rows() != 0 || hr.cols() % lr.cols() != 0 ||
      hr.rows() / lr.rows() != hr.cols() / lr.cols()) {
    throw DataError("HR lattice is not an integer refinement of the LR lattice");
  }
  return hr.rows() / lr.rows();
}

}  // namespace

AsdLocationModel fit_asd(CellIndex location, const GridSeries& lr_train,
                         const GridSeries& hr_train, const AsdOptions& options) {
  lr_train.validate();
  hr_train.validate();
  if (lr_train.empty() || lr_train.size() != hr_train.size()) {
    throw DataError("ASD training series must be nonempty and aligned");
  }
  if (options.lambda_grid.empty()) throw DataError("ASD lambda grid is empty");
  if (!(options.rain_threshold > 0.0)) throw DataError("rain threshold must be positive");
  const GeoGrid& hr0 = hr_train.days.front();
  if (location.row >= hr0.rows() || location.col >= hr0.cols()) {
    throw DataError("ASD location outside HR grid");
  }

  AsdLocationModel model;
  model.location = location;
  model.factor = infer_factor(hr0, lr_train.days.front());
  model.lr_center = {location.row / model.factor, location.col / model.factor};
  model.box = options.box;
  model.rain_threshold = options.rain_threshold;

  const std::size_t days = lr_train.size();
  const std::size_t p = options.box * options.box;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(days), static_cast<Eigen::Index>(p));
  Eigen::VectorXd amount(static_cast<Eigen::Index>(days));
  for (std::size_t d = 0; d < days; ++d) {
    const auto f = box_features(lr_train.days[d], model.lr_center, options.box);
    for (std::size_t j = 0; j < p; ++j) x(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(j)) = f[j];
    amount[static_cast<Eigen::Index>(d)] = hr_train.days[d](location.row, location.col);
  }

  // Standardise features with training statistics.
  model.feature_mean.resize(p);
  model.feature_std.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    const auto col = x.col(static_cast<Eigen::Index>(j));
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    model.feature_mean[j] = mean;
    model.feature_std[j] = std::max(sd, NormStats::kStdFloor);
    x.col(static_cast<Eigen::Index>(j)) = (col.array() - mean) / model.feature_std[j];
  }

  Eigen::VectorXd rainy(static_cast<Eigen::Index>(days));
  std::vector<Eigen::Index> rainy_rows;
  for (Eigen::Index d = 0; d < rainy.size(); ++d) {
    rainy[d] = amount[d] > options.rain_threshold ? 1.0 : 0.0;
    if (rainy[d] == 1.0) rainy_rows.push_back(d);
  }
  if (rainy_rows.size() < options.min_rainy_days) {
    throw DataError("location (" + std::to_string(location.row) + "," +
                    std::to_string(location.col) + ") has " + std::to_string(rainy_rows.size()) +
                    " rainy training days, need " + std::to_string(options.min_rainy_days));
  }

  // Step 1: rain/no-rain classifier on all days, lambda by CV deviance.
  const auto cls_folds = fold_assignment(days, options.folds, options.seed);
  double best = std::numeric_limits<double>::infinity();
  for (double lambda : options.lambda_grid) {
    const double dev = cross_validate(cls_folds, options.folds, [&](const auto& tr, const auto& te) {
      const LogisticModel fit = logistic_fit(take_rows(x, tr), take(rainy, tr), lambda);
      double s = 0.0;
      for (Eigen::Index i : te) {
        const double prob = std::clamp(fit.probability(x.row(i).transpose()), 1e-12, 1.0 - 1e-12);
        s -= rainy[i] * std::log(prob) + (1.0 - rainy[i]) * std::log(1.0 - prob);
      }
      return s / static_cast<double>(te.size());
    });
    if (dev < best) {
      best = dev;
      model.lambda_classifier = lambda;
    }
  }
  model.classifier = logistic_fit(x, rainy, model.lambda_classifier);

  // Step 2: lasso on rainy-day amounts (standardised), lambda by CV MSE.
  const Eigen::MatrixXd xr = take_rows(x, rainy_rows);
  Eigen::VectorXd yr = take(amount, rainy_rows);
  model.target_mean = yr.mean();
  model.target_std = std::max(std::sqrt((yr.array() - model.target_mean).square().mean()),
                              NormStats::kStdFloor);
  yr = (yr.array() - model.target_mean) / model.target_std;
  const auto reg_folds = fold_assignment(rainy_rows.size(), options.folds, options.seed + 1);
  best = std::numeric_limits<double>::infinity();
  for (double lambda : options.lambda_grid) {
    const double mse = cross_validate(reg_folds, options.folds, [&](const auto& tr, const auto& te) {
      const LinearModel fit = lasso_fit(take_rows(xr, tr), take(yr, tr), lambda);
      double s = 0.0;
      for (Eigen::Index i : te) {
        const double e = fit.intercept + xr.row(i).dot(fit.weights) - yr[i];
        s += e * e;
      }
      return s / static_cast<double>(te.size());
    });
    if (mse < best) {
      best = mse;
      model.lambda_regressor = lambda;
    }
  }
  model.regressor = lasso_fit(xr, yr, model.lambda_regressor);
  return model;
}

double predict_asd(const AsdLocationModel& model, const GeoGrid& lr_day) {
  const auto raw = box_features(lr_day, model.lr_center, model.box);
  Eigen::VectorXd f(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t j = 0; j < raw.size(); ++j) {
    f[static_cast<Eigen::Index>(j)] = (raw[j] - model.feature_mean[j]) / model.feature_std[j];
  }
  if (model.classifier.probability(f) < 0.5) return 0.0;
  const double z = model.regressor.intercept + model.regressor.weights.dot(f);
  return std::max(0.0, model.target_mean + model.target_std * z);
}

void save_asd_models(const std::vector<AsdLocationModel>& models, const std::filesystem::path& path) {
  std::vector<std::uint8_t> out;
  binary::put_magic(out, "ASD1");
  binary::put(out, static_cast<std::uint32_t>(models.size()));
  for (const auto& m : models) {
    const std::size_t p = m.box * m.box;
    for (std::size_t v : {m.location.row, m.location.col, m.lr_center.row, m.lr_center.col, m.factor, m.box, p}) {
      binary::put(out, static_cast<std::uint32_t>(v));
    }
    binary::put(out, m.rain_threshold);
    binary::put(out, m.lambda_classifier);
    binary::put(out, m.lambda_regressor);
    for (double v : m.feature_mean) binary::put(out, v);
    for (double v : m.feature_std) binary::put(out, v);
    binary::put(out, m.target_mean);
    binary::put(out, m.target_std);
    binary::put(out, static_cast<std::uint8_t>(m.classifier.degenerate ? 1 : 0));
    binary::put(out, m.classifier.prior);
    binary::put(out, m.classifier.intercept);
    for (Eigen::Index j = 0; j < m.classifier.weights.size(); ++j) binary::put(out, m.classifier.weights[j]);
    binary::put(out, m.regressor.intercept);
    for (Eigen::Index j = 0; j < m.regressor.weights.size(); ++j) binary::put(out, m.regressor.weights[j]);
  }
  write_file_bytes(path, out);
}

std::vector<AsdLocationModel> load_asd_models(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  binary::Reader in(bytes, path.string());
  in.expect_magic("ASD1");
  const auto count = in.get<std::uint32_t>();
  std::vector<AsdLocationModel> models;
  for (std::uint32_t k = 0; k < count; ++k) {
    AsdLocationModel m;
    m.location.row = in.get<std::uint32_t>();
    m.location.col = in.get<std::uint32_t>();
    m.lr_center.row = in.get<std::uint32_t>();
    m.lr_center.col = in.get<std::uint32_t>();
    m.factor = in.get<std::uint32_t>();
    m.box = in.get<std::uint32_t>();
    const auto p = in.get<std::uint32_t>();
    if (p != m.box * m.box || p > 4096) {
      throw ParseError(ParseError::Kind::kDimensionOverflow, path.string() + ": bad feature count");
    }
    m.rain_threshold = in.get<double>();
    m.lambda_classifier = in.get<double>();
    m.lambda_regressor = in.get<double>();
    m.feature_mean.resize(p);
    m.feature_std.resize(p);
    for (auto& v : m.feature_mean) v = in.get<double>();
    for (auto& v : m.feature_std) v = in.get<double>();
    m.target_mean = in.get<double>();
    m.target_std = in.get<double>();
    m.classifier.degenerate = in.get<std::uint8_t>() != 0;
    m.classifier.prior = in.get<double>();
    m.classifier.intercept = in.get<double>();
    m.classifier.weights.resize(p);
    for (Eigen::Index j = 0; j < m.classifier.weights.size(); ++j) m.classifier.weights[j] = in.get<double>();
    m.regressor.intercept = in.get<double>();
    m.regressor.weights.resize(p);
    for (Eigen::Index j = 0; j < m.regressor.weights.size(); ++j) m.regressor.weights[j] = in.get<double>();
    models.push_back(std::move(m));
  }
  if (in.remaining() != 0) throw ParseError(ParseError::Kind::kSyntax, path.string() + ": trailing bytes");
  return models;
}

}  // namespace deepsd::asd
