#pragma once

// One-class SVM with an RBF kernel, trained by SMO on the dual
//
//   min  1/2 a^T Q a   s.t.  0 <= a_i <= 1/(nu n),  sum a_i = 1,
//
// with Q_ij = exp(-gamma |x_i - x_j|^2). Decision value
// f(x) = sum_i a_i k(x, x_i) - rho; f >= 0 is "recognized".

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "sidewalk/errors.hpp"

namespace sidewalk::ocsvm {

using Vector = std::vector<double>;

struct RbfKernelParams {
  double gamma = 0.5;
  void validate() const {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ConfigError("RBF gamma must be positive");
  }
};

inline double squared_distance(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("rbf_kernel: vector lengths " + std::to_string(x.size()) + " and " +
                         std::to_string(y.size()) + " differ");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    sq += d * d;
  }
  return sq;
}

inline double rbf_kernel(std::span<const double> x, std::span<const double> y,
                         const RbfKernelParams& params) {
  params.validate();
  return std::exp(-params.gamma * squared_distance(x, y));
}

struct OcsvmTrainConfig {
  double nu = 0.5;
  double gamma = 0.5;
  double tolerance = 1e-5;
  std::size_t max_passes = 10000;

  void validate() const {
    if (!(nu > 0.0 && nu <= 1.0)) throw ConfigError("OCSVM nu must lie in (0, 1]");
    RbfKernelParams{gamma}.validate();
    if (!(tolerance > 0.0)) throw ConfigError("OCSVM tolerance must be positive");
    if (max_passes == 0) throw ConfigError("OCSVM max_passes must be positive");
  }
};

struct OcsvmModel {
  std::vector<Vector> support_vectors;
  Vector alphas;
  double bias = 0.0;  // rho
  RbfKernelParams kernel;
  double nu = 0.5;
  std::size_t n_train = 0;
  bool converged = true;
  std::size_t iterations = 0;
  double objective = 0.0;  // 1/2 a^T Q a at the solution

  std::size_t dimension() const {
    return support_vectors.empty() ? 0 : support_vectors.front().size();
  }
};

inline double decision_value(const OcsvmModel& model, std::span<const double> x) {
  if (model.support_vectors.empty()) throw ConfigError("decision_value: model has no support vectors");
  if (x.size() != model.dimension()) {
    throw DimensionError("decision_value: query length " + std::to_string(x.size()) +
                         " != model dimension " + std::to_string(model.dimension()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < model.support_vectors.size(); ++i) {
    sum += model.alphas[i] *
           std::exp(-model.kernel.gamma * squared_distance(x, model.support_vectors[i]));
  }
  return sum - model.bias;
}

// +1 recognized (boundary included), -1 novel.
inline int predict(const OcsvmModel& model, std::span<const double> x) {
  return decision_value(model, x) >= 0.0 ? 1 : -1;
}

inline OcsvmModel fit(const std::vector<Vector>& data, const OcsvmTrainConfig& config) {
  config.validate();
  if (data.empty()) throw DataError("ocsvm fit: empty training set");
  const std::size_t n = data.size();
  const std::size_t dim = data.front().size();
  for (std::size_t i = 0; i < n; ++i) {
    if (data[i].size() != dim) {
      throw DataError("ocsvm fit: sample " + std::to_string(i) + " has length " +
                      std::to_string(data[i].size()) + ", expected " + std::to_string(dim));
    }
    for (double v : data[i]) {
      if (!std::isfinite(v)) throw DataError("ocsvm fit: non-finite value in sample " + std::to_string(i));
    }
  }

  std::vector<double> q(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    q[i * n + i] = 1.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double k = std::exp(-config.gamma * squared_distance(data[i], data[j]));
      q[i * n + j] = q[j * n + i] = k;
    }
  }
  const double upper = 1.0 / (config.nu * static_cast<double>(n));

  // Feasible start: fill multipliers to the box bound until the mass is 1.
  Vector alpha(n, 0.0);
  double remaining = 1.0;
  for (std::size_t i = 0; i < n && remaining > 0.0; ++i) {
    alpha[i] = std::min(upper, remaining);
    remaining -= alpha[i];
  }

  Vector grad(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (alpha[i] == 0.0) continue;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q[t * n + i] * alpha[i];
  }

  constexpr double kTau = 1e-12;
  OcsvmModel model;
  model.kernel.gamma = config.gamma;
  model.nu = config.nu;
  model.n_train = n;
  model.converged = false;

  std::size_t iter = 0;
  for (; iter < config.max_passes; ++iter) {
    // Maximal-violating i, then second-order choice of j.
    std::size_t i = n;
    double g_max = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (alpha[t] < upper && -grad[t] > g_max) {
        g_max = -grad[t];
        i = t;
      }
    }
    std::size_t j = n;
    double g_max2 = -std::numeric_limits<double>::infinity();
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      if (!(alpha[t] > 0.0)) continue;
      g_max2 = std::max(g_max2, grad[t]);
      if (i == n) continue;
      const double diff = g_max + grad[t];
      if (diff > 0.0) {
        double quad = q[i * n + i] + q[t * n + t] - 2.0 * q[i * n + t];
        if (quad <= 0.0) quad = kTau;
        const double obj = -(diff * diff) / quad;
        if (obj <= best) {
          best = obj;
          j = t;
        }
      }
    }
    if (i == n || j == n || g_max + g_max2 < config.tolerance) {
      model.converged = true;
      break;
    }

    double quad = q[i * n + i] + q[j * n + j] - 2.0 * q[i * n + j];
    if (quad <= 0.0) quad = kTau;
    const double sum = alpha[i] + alpha[j];
    const double old_i = alpha[i], old_j = alpha[j];
    double new_i = old_i + (grad[j] - grad[i]) / quad;
    new_i = std::clamp(new_i, std::max(0.0, sum - upper), std::min(upper, sum));
    double new_j = sum - new_i;
    if (new_j >= upper) new_j = upper;
    if (new_j <= 0.0) new_j = 0.0;
    if (new_i >= upper) new_i = upper;
    if (new_i <= 0.0) new_i = 0.0;
    alpha[i] = new_i;
    alpha[j] = new_j;
    const double di = new_i - old_i, dj = new_j - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q[t * n + i] * di + q[t * n + j] * dj;
  }
  model.iterations = iter;

  // rho: mean gradient over free multipliers, else the midpoint of the
  // bound-implied interval.
  double free_sum = 0.0;
  std::size_t free_count = 0;
  double lb = -std::numeric_limits<double>::infinity();
  double ub = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] >= upper) {
      lb = std::max(lb, grad[t]);
    } else if (alpha[t] <= 0.0) {
      ub = std::min(ub, grad[t]);
    } else {
      free_sum += grad[t];
      ++free_count;
    }
  }
  if (free_count > 0) {
    model.bias = free_sum / static_cast<double>(free_count);
  } else if (std::isfinite(lb) && std::isfinite(ub)) {
    model.bias = 0.5 * (lb + ub);
  } else {
    model.bias = std::isfinite(lb) ? lb : ub;
  }

  double objective = 0.0;
  for (std::size_t t = 0; t < n; ++t) objective += alpha[t] * grad[t];
  model.objective = 0.5 * objective;

  for (std::size_t t = 0; t < n; ++t) {
    if (alpha[t] > 0.0) {
      model.support_vectors.push_back(data[t]);
      model.alphas.push_back(alpha[t]);
    }
  }
  return model;
}

}  // namespace sidewalk::ocsvm
