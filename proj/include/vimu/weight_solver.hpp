#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vimu/errors.hpp"
#include "vimu/geometry.hpp"

namespace vimu {

// Placements whose nearest affine-hull point is farther than this from the
// target are rejected as infeasible.
inline constexpr double kFeasibilityTol = 1e-8;
// |sum of unnormalized weights| below this means the normalization step is
// degenerate (the all-ones vector lies in the row space of the positions).
inline constexpr double kNormalizationTol = 1e-12;
// Relative eigenvalue cutoff for the pseudo-inverse of R*Sigma^-1*R^T.
inline constexpr double kPinvRelCutoff = 1e-10;

// min 1/2 sum_j (w_j sigma_j)^2  subject to  sum_j w_j r_j = 0, sum_j w_j = 1.
// Positions are expressed relative to the desired virtual-sensor location, so
// the placement constraint is homogeneous.
struct WeightProblem {
  std::vector<Vec3> positions;
  std::vector<double> sigmas;
};

struct WeightSolution {
  std::vector<double> weights;
  double fused_sigma = 0.0;      // sqrt(sum_j (w_j sigma_j)^2)
  Vec3 placement_residual = Vec3::Zero();  // sum_j w_j r_j
  double weight_norm_sq = 0.0;   // sum_j w_j^2; > 1 amplifies equal noise
};

struct WeightDiagnostics {
  double sum = 0.0;
  double sum_sq = 0.0;
  bool sum_ok = false;     // |sum - 1| <= tol
  bool amplifies = false;  // sum_sq > 1
};

inline WeightDiagnostics weight_diagnostics(const std::vector<double>& w,
                                            double tol = 1e-10) {
  WeightDiagnostics d;
  for (double x : w) {
    d.sum += x;
    d.sum_sq += x * x;
  }
  d.sum_ok = std::abs(d.sum - 1.0) <= tol;
  d.amplifies = d.sum_sq > 1.0;
  return d;
}

inline Vec3 placement_of(const std::vector<double>& weights,
                         const std::vector<Vec3>& positions) {
  if (weights.size() != positions.size())
    throw LengthMismatch("placement_of: weights/positions size mismatch");
  Vec3 p = Vec3::Zero();
  for (std::size_t j = 0; j < weights.size(); ++j) p += weights[j] * positions[j];
  return p;
}

inline void validate_problem(const WeightProblem& p) {
  if (p.positions.empty())
    throw ValidationError("weight problem: no sensors");
  if (p.positions.size() != p.sigmas.size())
    throw ValidationError("weight problem: positions/sigmas size mismatch");
  for (std::size_t j = 0; j < p.sigmas.size(); ++j) {
    if (!(p.sigmas[j] > 0.0) || !std::isfinite(p.sigmas[j]))
      throw ValidationError("weight problem: sigma must be positive and finite");
    if (!p.positions[j].allFinite())
      throw ValidationError("weight problem: non-finite position");
  }
}

// Point of the positions' affine hull nearest to the origin. The hull is
// centroid + range of the centered scatter matrix; eigendirections below a
// relative cutoff do not count as part of the span.
inline Vec3 nearest_affine_placement(const std::vector<Vec3>& positions) {
  const int n = static_cast<int>(positions.size());
  Vec3 c = Vec3::Zero();
  for (const Vec3& r : positions) c += r;
  c /= static_cast<double>(n);

  Mat3 scatter = Mat3::Zero();
  for (const Vec3& r : positions) {
    const Vec3 d = r - c;
    scatter.noalias() += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> es(scatter);
  if (es.info() != Eigen::Success)
    throw ValidationError("weight problem: eigendecomposition failed");
  const double cutoff = kPinvRelCutoff * es.eigenvalues().maxCoeff();

  Vec3 q = c;
  for (int i = 0; i < 3; ++i) {
    if (es.eigenvalues()(i) > cutoff && es.eigenvalues()(i) > 0.0) {
      const Vec3 u = es.eigenvectors().col(i);
      q -= u * u.dot(c);
    }
  }
  return q;
}

// Closed-form KKT solution. With R the 3 x n position matrix and Sigma the
// diagonal of sigma^2, the stationary conditions give
//   w_hat = Sigma^-1 (1 - R^T lambda),  lambda = (R Sigma^-1 R^T)^+ R Sigma^-1 1,
// and the multiplier for the sum constraint scales out in the final
// normalization w = w_hat / (1^T w_hat). R w_hat = 0 holds identically
// because R Sigma^-1 1 lies in the range of R Sigma^-1 R^T; the pseudo-
// inverse handles rank-deficient placements (coplanar, collinear, single).
inline WeightSolution solve_placement_weights(const WeightProblem& p) {
  validate_problem(p);
  const int n = static_cast<int>(p.positions.size());

  const Vec3 nearest = nearest_affine_placement(p.positions);
  if (nearest.norm() > kFeasibilityTol) {
    throw InfeasiblePlacement(
        "placement infeasible: target is " + std::to_string(nearest.norm()) +
            " m from the sensors' affine hull",
        nearest);
  }

  Eigen::VectorXd inv_var(n);
  Mat3 m = Mat3::Zero();
  Vec3 rbar = Vec3::Zero();
  for (int j = 0; j < n; ++j) {
    inv_var(j) = 1.0 / (p.sigmas[j] * p.sigmas[j]);
    m.noalias() += inv_var(j) * p.positions[j] * p.positions[j].transpose();
    rbar += inv_var(j) * p.positions[j];
  }

  Eigen::SelfAdjointEigenSolver<Mat3> es(m);
  if (es.info() != Eigen::Success)
    throw ValidationError("weight problem: eigendecomposition failed");
  const double lambda_max = std::max(es.eigenvalues().maxCoeff(), 0.0);
  const double cutoff = kPinvRelCutoff * lambda_max;
  Mat3 m_pinv = Mat3::Zero();
  for (int i = 0; i < 3; ++i) {
    const double lam = es.eigenvalues()(i);
    if (lam > cutoff && lam > 0.0) {
      const Vec3 v = es.eigenvectors().col(i);
      m_pinv.noalias() += (1.0 / lam) * v * v.transpose();
    }
  }

  const Vec3 lambda = m_pinv * rbar;
  Eigen::VectorXd w_hat(n);
  for (int j = 0; j < n; ++j)
    w_hat(j) = inv_var(j) * (1.0 - p.positions[j].dot(lambda));

  const double total = w_hat.sum();
  if (std::abs(total) < kNormalizationTol)
    throw DegenerateNormalization(
        "weight normalization degenerate: unnormalized weights sum to ~0");

  WeightSolution sol;
  sol.weights.resize(n);
  double var = 0.0;
  for (int j = 0; j < n; ++j) {
    const double w = w_hat(j) / total;
    sol.weights[j] = w;
    var += w * w * p.sigmas[j] * p.sigmas[j];
    sol.weight_norm_sq += w * w;
    sol.placement_residual += w * p.positions[j];
  }
  sol.fused_sigma = std::sqrt(var);
  return sol;
}

// Noise-optimal weights without a placement constraint: w_j proportional to
// 1/sigma_j^2, the classic inverse-variance average.
inline WeightSolution solve_noise_only_weights(const std::vector<double>& sigmas,
                                               const std::vector<Vec3>* positions = nullptr) {
  WeightProblem p;
  p.sigmas = sigmas;
  p.positions.assign(sigmas.size(), Vec3::Zero());
  validate_problem(p);

  double total = 0.0;
  for (double s : sigmas) total += 1.0 / (s * s);

  WeightSolution sol;
  sol.weights.resize(sigmas.size());
  double var = 0.0;
  for (std::size_t j = 0; j < sigmas.size(); ++j) {
    const double w = (1.0 / (sigmas[j] * sigmas[j])) / total;
    sol.weights[j] = w;
    var += w * w * sigmas[j] * sigmas[j];
    sol.weight_norm_sq += w * w;
    if (positions) {
      if (positions->size() != sigmas.size())
        throw LengthMismatch("solve_noise_only_weights: positions size mismatch");
      sol.placement_residual += w * (*positions)[j];
    }
  }
  sol.fused_sigma = std::sqrt(var);
  return sol;
}

inline WeightSolution solve_noise_only_weights(const WeightProblem& p) {
  validate_problem(p);
  return solve_noise_only_weights(p.sigmas, &p.positions);
}

}  // namespace vimu
