#pragma once

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "vimu/rng.hpp"

namespace vimu {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Angles below this use Taylor expansions of exp/log and their Jacobians.
inline constexpr double kSmallAngle = 1e-7;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  // clang-format off
  m <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return m;
}

inline Vec3 vee(const Mat3& m) {
  return Vec3(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1)) * 0.5;
}

inline Mat3 so3_exp(const Vec3& phi) {
  const double t2 = phi.squaredNorm();
  const Mat3 w = skew(phi);
  if (t2 < kSmallAngle * kSmallAngle) {
    return Mat3::Identity() + w + 0.5 * w * w;
  }
  const double t = std::sqrt(t2);
  return Mat3::Identity() + (std::sin(t) / t) * w +
         ((1.0 - std::cos(t)) / t2) * w * w;
}

// Inverse of so3_exp. Valid for any rotation; the branch near pi recovers the
// axis from the symmetric part of R, where the antisymmetric part vanishes.
inline Vec3 so3_log(const Mat3& r) {
  const double cos_theta = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const Vec3 w(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  // atan2 keeps full precision at both ends of [0, pi]; acos loses half the
  // significant digits where its argument approaches +-1.
  const double sin_theta = 0.5 * w.norm();
  const double theta = std::atan2(sin_theta, cos_theta);

  if (theta < kSmallAngle) {
    return 0.5 * w;
  }
  if (theta < M_PI - 1e-5) {
    return (0.5 * theta / sin_theta) * w;
  }

  // theta within 1e-5 of pi. With S = (R + R^T)/2, S_ij = cos(theta) d_ij +
  // (1 - cos(theta)) k_i k_j, so the axis follows from the largest diagonal.
  const double one_minus_cos = 1.0 - cos_theta;
  const Mat3 s = 0.5 * (r + r.transpose());
  int a = 0;
  s.diagonal().maxCoeff(&a);
  Vec3 k = Vec3::Zero();
  k[a] = std::sqrt(std::max(0.0, (s(a, a) - cos_theta) / one_minus_cos));
  for (int b = 0; b < 3; ++b) {
    if (b != a) k[b] = s(a, b) / (one_minus_cos * k[a]);
  }
  k.normalize();
  if (w.norm() > 1e-12) {
    if (k.dot(w) < 0.0) k = -k;
  } else {
    // Exactly pi: both signs are valid, fix one deterministically.
    for (int i = 0; i < 3; ++i) {
      if (std::abs(k[i]) > 1e-8) {
        if (k[i] < 0.0) k = -k;
        break;
      }
    }
  }
  return theta * k;
}

// d/dphi of so3_exp at phi, right (body-side) convention:
// so3_exp(phi + d) ~ so3_exp(phi) * so3_exp(J_r(phi) d).
inline Mat3 so3_right_jacobian(const Vec3& phi) {
  const double t2 = phi.squaredNorm();
  const Mat3 w = skew(phi);
  if (t2 < kSmallAngle * kSmallAngle) {
    return Mat3::Identity() - 0.5 * w + (1.0 / 6.0) * w * w;
  }
  const double t = std::sqrt(t2);
  return Mat3::Identity() - ((1.0 - std::cos(t)) / t2) * w +
         ((t - std::sin(t)) / (t2 * t)) * w * w;
}

// Nearest rotation in Frobenius norm (polar factor via SVD).
inline Mat3 project_to_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

inline bool is_rotation(const Mat3& r, double tol = 1e-9) {
  return (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol &&
         std::abs(r.determinant() - 1.0) <= tol;
}

// Uniform random rotation from a normalized 4-gaussian quaternion.
inline Mat3 random_rotation(RngStream& rng) {
  Eigen::Quaterniond q(rng.gaussian(), rng.gaussian(), rng.gaussian(),
                       rng.gaussian());
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 gaussian_vec3(RngStream& rng) {
  return Vec3(rng.gaussian(), rng.gaussian(), rng.gaussian());
}

struct Pose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return R * p + t; }
  Pose inverse() const { return {R.transpose(), -(R.transpose() * t)}; }

  friend Pose operator*(const Pose& a, const Pose& b) {
    return {a.R * b.R, a.R * b.t + a.t};
  }
};

struct RigidState {
  Mat3 C = Mat3::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 p = Vec3::Zero();
};

// One integration step of the strapdown kinematics. omega_mid and sf_mid are
// the interval's effective body rate and specific force (endpoint averages of
// the sampled signals); the translational update evaluates the inertial
// acceleration at the half-step attitude, which keeps the step second-order.
// The rotation is re-orthonormalized every step. Both the simulator and the
// filter propagation call this, so a noiseless filter reproduces the
// simulated trajectory exactly.
inline RigidState integrate_rigid_step(const RigidState& s,
                                       const Vec3& omega_mid,
                                       const Vec3& sf_mid, const Vec3& gravity,
                                       double dt) {
  const Mat3 c_half = s.C * so3_exp((0.5 * dt) * omega_mid);
  const Vec3 a_inertial = c_half * sf_mid - gravity;
  RigidState out;
  out.C = project_to_rotation(s.C * so3_exp(dt * omega_mid));
  out.v = s.v + dt * a_inertial;
  out.p = s.p + dt * s.v + (0.5 * dt * dt) * a_inertial;
  return out;
}

}  // namespace vimu
