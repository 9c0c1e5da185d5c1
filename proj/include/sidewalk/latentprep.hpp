#pragma once

// Conditioning of latent vectors before the one-class SVM: per-feature
// min-max scaling to [-1, 1] followed by PCA. Always normalize, then project.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "sidewalk/errors.hpp"

namespace sidewalk::latentprep {

using Vector = std::vector<double>;

struct NormalizerModel {
  Vector min;
  Vector max;

  std::size_t features() const noexcept { return min.size(); }
  bool degenerate(std::size_t i) const { return !(max[i] > min[i]); }
};

namespace detail {

inline std::size_t check_uniform(const std::vector<Vector>& data, const char* op) {
  if (data.empty()) throw DataError(std::string(op) + ": empty data");
  const std::size_t d = data.front().size();
  if (d == 0) throw DataError(std::string(op) + ": zero-length feature vectors");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].size() != d) {
      throw DataError(std::string(op) + ": sample " + std::to_string(i) + " has length " +
                      std::to_string(data[i].size()) + ", expected " + std::to_string(d));
    }
  }
  return d;
}

}  // namespace detail

inline NormalizerModel normalizer_fit(const std::vector<Vector>& data) {
  const std::size_t d = detail::check_uniform(data, "normalizer_fit");
  NormalizerModel model{data.front(), data.front()};
  for (const auto& x : data) {
    for (std::size_t i = 0; i < d; ++i) {
      model.min[i] = std::min(model.min[i], x[i]);
      model.max[i] = std::max(model.max[i], x[i]);
    }
  }
  return model;
}

// 2 (v - min) / (max - min) - 1, clamped; degenerate features map to 0.
inline Vector normalizer_apply(const NormalizerModel& model, std::span<const double> x) {
  if (x.size() != model.features()) {
    throw DimensionError("normalizer_apply: input length " + std::to_string(x.size()) +
                         " != feature count " + std::to_string(model.features()));
  }
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (model.degenerate(i)) {
      out[i] = 0.0;
      continue;
    }
    const double v = 2.0 * (x[i] - model.min[i]) / (model.max[i] - model.min[i]) - 1.0;
    out[i] = std::clamp(v, -1.0, 1.0);
  }
  return out;
}

struct PcaModel {
  Vector mean;
  std::vector<Vector> components;  // unit rows, most variance first
  Vector explained_variance;       // eigenvalues of the sample covariance
  double total_variance = 0.0;
  double retained_fraction = 0.0;  // achieved cumulative fraction

  std::size_t input_dim() const noexcept { return mean.size(); }
  std::size_t output_dim() const noexcept { return components.size(); }
};

// Top eigenvectors of the (n - 1)-normalized sample covariance; keeps the
// fewest components whose cumulative variance reaches `retained_variance`.
inline PcaModel pca_fit(const std::vector<Vector>& data, double retained_variance = 0.95) {
  if (!(retained_variance > 0.0 && retained_variance <= 1.0)) {
    throw ArgumentError("pca_fit: retained variance must lie in (0, 1]");
  }
  const std::size_t d = detail::check_uniform(data, "pca_fit");
  if (data.size() < 2) throw DataError("pca_fit: at least 2 samples are required");
  const std::size_t n = data.size();

  Eigen::MatrixXd x(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) x(r, c) = data[r][c];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("pca_fit: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd values = solver.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();

  PcaModel model;
  model.mean.assign(mean.data(), mean.data() + d);
  for (std::size_t i = 0; i < d; ++i) model.total_variance += std::max(0.0, values(i));

  constexpr double kSlack = 1e-9;
  double cumulative = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    const double lambda = std::max(0.0, values(k));
    Vector row(d);
    for (std::size_t c = 0; c < d; ++c) row[c] = vectors(c, k);
    // Sign convention: largest-magnitude coordinate positive.
    std::size_t arg = 0;
    for (std::size_t c = 1; c < d; ++c) {
      if (std::abs(row[c]) > std::abs(row[arg]) + 1e-12) arg = c;
    }
    if (row[arg] < 0.0) {
      for (double& v : row) v = -v;
    }
    model.components.push_back(std::move(row));
    model.explained_variance.push_back(lambda);
    cumulative += lambda;
    const double fraction = model.total_variance > 0.0 ? cumulative / model.total_variance : 1.0;
    if (fraction >= retained_variance - kSlack) break;
  }
  model.retained_fraction =
      model.total_variance > 0.0 ? std::min(1.0, cumulative / model.total_variance) : 1.0;
  return model;
}

inline Vector pca_apply(const PcaModel& model, std::span<const double> x) {
  if (x.size() != model.input_dim()) {
    throw DimensionError("pca_apply: input length " + std::to_string(x.size()) +
                         " != model dimension " + std::to_string(model.input_dim()));
  }
  Vector out(model.output_dim(), 0.0);
  for (std::size_t k = 0; k < model.output_dim(); ++k) {
    const Vector& row = model.components[k];
    double dot = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) dot += row[c] * (x[c] - model.mean[c]);
    out[k] = dot;
  }
  return out;
}

// mean + components^T y
inline Vector pca_reconstruct(const PcaModel& model, std::span<const double> reduced) {
  if (reduced.size() != model.output_dim()) {
    throw DimensionError("pca_reconstruct: reduced length " + std::to_string(reduced.size()) +
                         " != component count " + std::to_string(model.output_dim()));
  }
  Vector out = model.mean;
  for (std::size_t k = 0; k < reduced.size(); ++k) {
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += reduced[k] * model.components[k][c];
  }
  return out;
}

// Keep only the first k components.
inline PcaModel pca_truncate(PcaModel model, std::size_t k) {
  if (k == 0 || k > model.output_dim()) throw ArgumentError("pca_truncate: invalid component count");
  model.components.resize(k);
  model.explained_variance.resize(k);
  double kept = 0.0;
  for (double v : model.explained_variance) kept += v;
  model.retained_fraction = model.total_variance > 0.0 ? kept / model.total_variance : 1.0;
  return model;
}

}  // namespace sidewalk::latentprep
