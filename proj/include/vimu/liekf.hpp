#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vimu/errors.hpp"
#include "vimu/geometry.hpp"
#include "vimu/imu_model.hpp"
#include "vimu/sim_world.hpp"
#include "vimu/vimu_fusion.hpp"

namespace vimu {

// Innovation covariances with a condition number above this are rejected.
inline constexpr double kMaxInnovationCond = 1e12;

struct NavState {
  Mat3 C = Mat3::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 p = Vec3::Zero();
  Vec3 b_g = Vec3::Zero();
  Vec3 b_a = Vec3::Zero();

  bool all_finite() const {
    return C.allFinite() && v.allFinite() && p.allFinite() &&
           b_g.allFinite() && b_a.allFinite();
  }
};

using Cov15 = Eigen::Matrix<double, 15, 15>;
using Vec15 = Eigen::Matrix<double, 15, 1>;

// Error-state order: [attitude, velocity, position, gyro bias, accel bias].
// Pose errors live in the body frame (left-invariant composition), biases
// are additive.
inline NavState retract(const NavState& x, const Vec15& xi) {
  NavState out;
  out.C = x.C * so3_exp(xi.segment<3>(0));
  out.v = x.v + x.C * xi.segment<3>(3);
  out.p = x.p + x.C * xi.segment<3>(6);
  out.b_g = x.b_g + xi.segment<3>(9);
  out.b_a = x.b_a + xi.segment<3>(12);
  return out;
}

inline Vec15 local_error(const NavState& base, const NavState& x) {
  Vec15 xi;
  xi.segment<3>(0) = so3_log(base.C.transpose() * x.C);
  xi.segment<3>(3) = base.C.transpose() * (x.v - base.v);
  xi.segment<3>(6) = base.C.transpose() * (x.p - base.p);
  xi.segment<3>(9) = x.b_g - base.b_g;
  xi.segment<3>(12) = x.b_a - base.b_a;
  return xi;
}

struct FilterBelief {
  NavState state;
  Cov15 cov = Cov15::Zero();
};

struct FilterInit {
  double sigma_att = 0.01;  // rad
  double sigma_vel = 0.05;  // m/s
  double sigma_pos = 0.05;  // m

  // Bias prior wide enough to cover ~100 s of accumulated walk.
  double sigma_bg = 1e-3;   // rad/s
  double sigma_ba = 1e-2;   // m/s^2

  static FilterInit from_spec(const NoiseSpec& spec) {
    FilterInit init;
    const double steps_100s = std::sqrt(100.0 * spec.rate_hz);
    init.sigma_bg = std::max(spec.sigma_bg * steps_100s, 1e-8);
    init.sigma_ba = std::max(spec.sigma_ba * steps_100s, 1e-8);
    return init;
  }
};

inline FilterBelief make_initial_belief(const NavState& x0,
                                        const FilterInit& init) {
  FilterBelief b;
  b.state = x0;
  b.cov.setZero();
  b.cov.diagonal().segment<3>(0).setConstant(init.sigma_att * init.sigma_att);
  b.cov.diagonal().segment<3>(3).setConstant(init.sigma_vel * init.sigma_vel);
  b.cov.diagonal().segment<3>(6).setConstant(init.sigma_pos * init.sigma_pos);
  b.cov.diagonal().segment<3>(9).setConstant(init.sigma_bg * init.sigma_bg);
  b.cov.diagonal().segment<3>(12).setConstant(init.sigma_ba * init.sigma_ba);
  return b;
}

// Mean propagation through the shared strapdown step; `mid` carries the
// interval's effective (averaged) measurements.
inline NavState propagate_mean(const NavState& x, const VimuSample& mid,
                               const Vec3& gravity, double dt) {
  const auto [omega, sf] = debias(mid, {x.b_g, x.b_a});
  const RigidState rs =
      integrate_rigid_step({x.C, x.v, x.p}, omega, sf, gravity, dt);
  NavState out;
  out.C = rs.C;
  out.v = rs.v;
  out.p = rs.p;
  out.b_g = x.b_g;
  out.b_a = x.b_a;
  return out;
}

// Exact differential of the discrete mean map above (not a continuous-time
// linearization), so finite differences of propagate_mean match it to
// truncation error. With D = exp(w dt), Dh = exp(w dt/2), f the debiased
// specific force and Jr the right Jacobian:
//   phi+ = D^T phi - Jr(w dt) dt db_g
//   rv+  = D^T (rv - dt (Dh f)^ phi + (dt^2/2) Dh f^ Jr(w dt/2) db_g - dt Dh db_a)
//   rp+  = D^T (rp + dt rv - (dt^2/2) (Dh f)^ phi + (dt^3/4) Dh f^ Jr(w dt/2) db_g
//          - (dt^2/2) Dh db_a)
inline Cov15 propagation_jacobian(const NavState& x, const VimuSample& mid,
                                  double dt) {
  const Vec3 omega = mid.gyro - x.b_g;
  const Vec3 f = mid.accel - x.b_a;

  const Mat3 d_t = so3_exp(dt * omega).transpose();
  const Mat3 d_half = so3_exp((0.5 * dt) * omega);
  const Mat3 jr_full = so3_right_jacobian(dt * omega);
  const Mat3 jr_half = so3_right_jacobian((0.5 * dt) * omega);
  const Mat3 fh_skew = skew(d_half * f);
  const Mat3 dt_dhalf = d_t * d_half;
  const Mat3 bg_to_v = dt_dhalf * skew(f) * jr_half;

  Cov15 F = Cov15::Identity();
  F.block<3, 3>(0, 0) = d_t;
  F.block<3, 3>(0, 9) = -dt * jr_full;

  F.block<3, 3>(3, 0) = -dt * d_t * fh_skew;
  F.block<3, 3>(3, 3) = d_t;
  F.block<3, 3>(3, 9) = (0.5 * dt * dt) * bg_to_v;
  F.block<3, 3>(3, 12) = -dt * dt_dhalf;

  F.block<3, 3>(6, 0) = (-0.5 * dt * dt) * d_t * fh_skew;
  F.block<3, 3>(6, 3) = dt * d_t;
  F.block<3, 3>(6, 6) = d_t;
  F.block<3, 3>(6, 9) = (0.25 * dt * dt * dt) * bg_to_v;
  F.block<3, 3>(6, 12) = (-0.5 * dt * dt) * dt_dhalf;
  return F;
}

inline FilterBelief propagate(const FilterBelief& b, const VimuSample& mid,
                              const NoiseSpec& fused, double dt,
                              const Vec3& gravity = Vec3(0.0, 0.0, 9.81)) {
  if (!(dt > 0.0)) throw std::invalid_argument("propagate: dt must be positive");
  fused.validate();

  FilterBelief out;
  out.state = propagate_mean(b.state, mid, gravity, dt);
  if (!out.state.all_finite())
    throw NonFiniteState("propagate: state became non-finite");

  const Cov15 F = propagation_jacobian(b.state, mid, dt);
  // White measurement noise enters the dynamics exactly like a bias error
  // of the opposite sign, so its Jacobian is read off the bias columns.
  Eigen::Matrix<double, 15, 6> G = -F.block<15, 6>(0, 9);
  G.block<6, 6>(9, 0).setZero();

  const double steps = dt * fused.rate_hz;
  Eigen::Matrix<double, 6, 6> q_in = Eigen::Matrix<double, 6, 6>::Zero();
  q_in.diagonal().segment<3>(0).setConstant(fused.sigma_g * fused.sigma_g * steps);
  q_in.diagonal().segment<3>(3).setConstant(fused.sigma_a * fused.sigma_a * steps);

  out.cov = F * b.cov * F.transpose() + G * q_in * G.transpose();
  out.cov.diagonal().segment<3>(9).array() +=
      fused.sigma_bg * fused.sigma_bg * steps;
  out.cov.diagonal().segment<3>(12).array() +=
      fused.sigma_ba * fused.sigma_ba * steps;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

namespace detail {

// Stacked pixel prediction and its Jacobian w.r.t. the error state. With
// Xc = C^T (l - p) the landmark in the body (camera) frame:
//   d Xc = Xc^ phi - rp   (body-frame pose errors)
// and the pinhole Jacobian chains on top.
inline void predict_pixels(const NavState& x, const std::vector<LandmarkObs>& obs,
                           const CameraModel& cam, Eigen::VectorXd* z_hat,
                           Eigen::MatrixXd* H) {
  const auto m = static_cast<Eigen::Index>(obs.size());
  z_hat->resize(2 * m);
  if (H) H->setZero(2 * m, 15);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Vec3 xc = x.C.transpose() * (obs[i].landmark - x.p);
    const Eigen::Vector2d px = cam.project(xc);
    (*z_hat)(2 * i) = px.x();
    (*z_hat)(2 * i + 1) = px.y();
    if (H) {
      Eigen::Matrix<double, 2, 3> j_pi;
      const double iz = 1.0 / xc.z();
      // clang-format off
      j_pi << cam.fx * iz, 0.0,          -cam.fx * xc.x() * iz * iz,
              0.0,         cam.fy * iz,  -cam.fy * xc.y() * iz * iz;
      // clang-format on
      H->block<2, 3>(2 * i, 0) = j_pi * skew(xc);
      H->block<2, 3>(2 * i, 6) = -j_pi;
    }
  }
}

}  // namespace detail

// Joseph-form EKF update with all of one frame's observations stacked.
// Observations with non-positive predicted depth carry no usable projection
// and are skipped; if none remain the belief is returned unchanged.
inline FilterBelief update_landmarks(const FilterBelief& b,
                                     const std::vector<LandmarkObs>& obs,
                                     const CameraModel& cam) {
  if (obs.empty())
    throw std::invalid_argument("update_landmarks: no observations");

  std::vector<LandmarkObs> usable;
  usable.reserve(obs.size());
  for (const LandmarkObs& o : obs) {
    const Vec3 xc = b.state.C.transpose() * (o.landmark - b.state.p);
    if (xc.z() > 1e-6) usable.push_back(o);
  }
  if (usable.empty()) return b;

  const auto m = static_cast<Eigen::Index>(usable.size());
  Eigen::VectorXd z(2 * m), z_hat;
  Eigen::MatrixXd H;
  for (Eigen::Index i = 0; i < m; ++i) {
    z(2 * i) = usable[i].pixel.x();
    z(2 * i + 1) = usable[i].pixel.y();
  }
  detail::predict_pixels(b.state, usable, cam, &z_hat, &H);

  Eigen::VectorXd r_diag(2 * m);
  for (Eigen::Index i = 0; i < m; ++i) {
    r_diag(2 * i) = usable[i].sigma_px * usable[i].sigma_px;
    r_diag(2 * i + 1) = r_diag(2 * i);
  }

  Eigen::MatrixXd S = H * b.cov * H.transpose();
  S.diagonal() += r_diag;
  S = 0.5 * (S + S.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success)
    throw SingularInnovation("update_landmarks: eigendecomposition failed");
  const double lam_min = es.eigenvalues().minCoeff();
  const double lam_max = es.eigenvalues().maxCoeff();
  if (!(lam_min > 0.0) || lam_max / lam_min > kMaxInnovationCond)
    throw SingularInnovation("update_landmarks: innovation covariance is singular");

  const Eigen::MatrixXd K = S.ldlt().solve(H * b.cov).transpose();
  const Vec15 xi = K * (z - z_hat);

  FilterBelief out;
  out.state = retract(b.state, xi);
  if (!out.state.all_finite())
    throw NonFiniteState("update_landmarks: state became non-finite");

  const Cov15 ikh = Cov15::Identity() - K * H;
  out.cov = ikh * b.cov * ikh.transpose() + K * r_diag.asDiagonal() * K.transpose();
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

struct TimedState {
  double t = 0.0;
  NavState state;
};

// Full harness: propagate between consecutive fused samples using their
// average as the interval's effective input, update whenever a camera frame
// lands on a sample timestamp. Frames are applied at the first sample at or
// after their timestamp; one estimate per fused sample.
inline std::vector<TimedState> run_filter(FilterBelief belief,
                                          const std::vector<VimuSample>& fused,
                                          const std::vector<LandmarkObs>& obs,
                                          const CameraModel& cam,
                                          const NoiseSpec& fused_spec,
                                          const Vec3& gravity) {
  if (fused.empty()) throw EmptySeries("run_filter: no fused samples");

  // Group observations into frames by timestamp (input is time-ordered).
  std::vector<std::pair<double, std::vector<LandmarkObs>>> frames;
  for (const LandmarkObs& o : obs) {
    if (frames.empty() || o.t > frames.back().first + 1e-9)
      frames.push_back({o.t, {}});
    frames.back().second.push_back(o);
  }

  std::vector<TimedState> est;
  est.reserve(fused.size());
  std::size_t fi = 0;

  auto apply_frames_up_to = [&](double t) {
    while (fi < frames.size() && frames[fi].first <= t + 1e-9) {
      belief = update_landmarks(belief, frames[fi].second, cam);
      ++fi;
    }
  };

  apply_frames_up_to(fused[0].t);
  est.push_back({fused[0].t, belief.state});

  for (std::size_t k = 1; k < fused.size(); ++k) {
    const double dt = fused[k].t - fused[k - 1].t;
    if (!(dt > 0.0))
      throw NonMonotonicTimestamps("run_filter: fused timestamps not increasing");
    VimuSample mid;
    mid.t = 0.5 * (fused[k - 1].t + fused[k].t);
    mid.gyro = 0.5 * (fused[k - 1].gyro + fused[k].gyro);
    mid.accel = 0.5 * (fused[k - 1].accel + fused[k].accel);
    belief = propagate(belief, mid, fused_spec, dt, gravity);
    apply_frames_up_to(fused[k].t);
    est.push_back({fused[k].t, belief.state});
  }
  return est;
}

struct JacobianReport {
  double max_rel_propagation = 0.0;
  double max_rel_measurement = 0.0;
};

// Central finite differences of the discrete mean map and the pixel
// prediction against their analytic Jacobians, relative to the largest
// analytic entry.
inline JacobianReport jacobian_check(const FilterBelief& b,
                                     const VimuSample& mid, double dt,
                                     const std::vector<LandmarkObs>& obs,
                                     const CameraModel& cam, const Vec3& gravity,
                                     double fd_step = 1e-6) {
  JacobianReport report;
  const double h = fd_step;

  const Cov15 F = propagation_jacobian(b.state, mid, dt);
  const NavState nominal = propagate_mean(b.state, mid, gravity, dt);
  Cov15 F_fd;
  for (int i = 0; i < 15; ++i) {
    Vec15 xi = Vec15::Zero();
    xi(i) = h;
    const NavState plus = propagate_mean(retract(b.state, xi), mid, gravity, dt);
    xi(i) = -h;
    const NavState minus = propagate_mean(retract(b.state, xi), mid, gravity, dt);
    F_fd.col(i) = (local_error(nominal, plus) - local_error(nominal, minus)) / (2.0 * h);
  }
  report.max_rel_propagation =
      (F_fd - F).cwiseAbs().maxCoeff() / std::max(1.0, F.cwiseAbs().maxCoeff());

  if (!obs.empty()) {
    Eigen::VectorXd z_hat;
    Eigen::MatrixXd H;
    detail::predict_pixels(b.state, obs, cam, &z_hat, &H);
    Eigen::MatrixXd H_fd(H.rows(), 15);
    for (int i = 0; i < 15; ++i) {
      Vec15 xi = Vec15::Zero();
      Eigen::VectorXd zp, zm;
      xi(i) = h;
      detail::predict_pixels(retract(b.state, xi), obs, cam, &zp, nullptr);
      xi(i) = -h;
      detail::predict_pixels(retract(b.state, xi), obs, cam, &zm, nullptr);
      H_fd.col(i) = (zp - zm) / (2.0 * h);
    }
    report.max_rel_measurement =
        (H_fd - H).cwiseAbs().maxCoeff() / std::max(1.0, H.cwiseAbs().maxCoeff());
  }
  return report;
}

}  // namespace vimu
