#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "vimu/errors.hpp"
#include "vimu/geometry.hpp"
#include "vimu/imu_model.hpp"
#include "vimu/weight_solver.hpp"

namespace vimu {

// A virtual sensor: per-IMU mounting plus the two weight vectors. Gyro
// fusion has no lever-arm term, so its weights only need to sum to one;
// accel weights must additionally place the weighted sensor position at the
// target (origin of the extrinsics frame).
struct VimuConfig {
  std::vector<ImuExtrinsics> extrinsics;
  std::vector<double> w_gyro;
  std::vector<double> w_accel;
  NoiseSpec fused_noise;

  void validate() const {
    const std::size_t n = extrinsics.size();
    if (n == 0) throw ValidationError("VimuConfig: no sensors");
    if (w_gyro.size() != n || w_accel.size() != n)
      throw ValidationError("VimuConfig: weight vector size mismatch");
    const auto dg = weight_diagnostics(w_gyro);
    const auto da = weight_diagnostics(w_accel);
    if (!dg.sum_ok) throw ValidationError("VimuConfig: gyro weights do not sum to 1");
    if (!da.sum_ok) throw ValidationError("VimuConfig: accel weights do not sum to 1");
    Vec3 placement = Vec3::Zero();
    for (std::size_t j = 0; j < n; ++j) placement += w_accel[j] * extrinsics[j].r;
    if (placement.norm() > kFeasibilityTol)
      throw ValidationError("VimuConfig: accel weights do not realize the target placement");
  }
};

struct VimuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

inline Vec3 fuse_gyro(const VimuConfig& cfg, const std::vector<Vec3>& readings) {
  if (readings.size() != cfg.extrinsics.size())
    throw LengthMismatch("fuse_gyro: readings size mismatch");
  Vec3 out = Vec3::Zero();
  for (std::size_t j = 0; j < readings.size(); ++j)
    out += cfg.w_gyro[j] * (cfg.extrinsics[j].C * readings[j]);
  return out;
}

inline Vec3 fuse_accel(const VimuConfig& cfg, const std::vector<Vec3>& readings) {
  if (readings.size() != cfg.extrinsics.size())
    throw LengthMismatch("fuse_accel: readings size mismatch");
  Vec3 out = Vec3::Zero();
  for (std::size_t j = 0; j < readings.size(); ++j)
    out += cfg.w_accel[j] * (cfg.extrinsics[j].C * readings[j]);
  return out;
}

// Stochastics of the fused signal: weighted quadrature per channel. The rate
// is taken from the first (reference) sensor.
inline NoiseSpec fused_bias_spec(const VimuConfig& cfg,
                                 const std::vector<NoiseSpec>& specs) {
  if (specs.size() != cfg.extrinsics.size())
    throw LengthMismatch("fused_bias_spec: specs size mismatch");
  double vg = 0.0, va = 0.0, vbg = 0.0, vba = 0.0;
  for (std::size_t j = 0; j < specs.size(); ++j) {
    specs[j].validate();
    const double wg = cfg.w_gyro[j], wa = cfg.w_accel[j];
    vg += wg * wg * specs[j].sigma_g * specs[j].sigma_g;
    vbg += wg * wg * specs[j].sigma_bg * specs[j].sigma_bg;
    va += wa * wa * specs[j].sigma_a * specs[j].sigma_a;
    vba += wa * wa * specs[j].sigma_ba * specs[j].sigma_ba;
  }
  NoiseSpec out;
  out.sigma_g = std::sqrt(vg);
  out.sigma_a = std::sqrt(va);
  out.sigma_bg = std::sqrt(vbg);
  out.sigma_ba = std::sqrt(vba);
  out.rate_hz = specs.front().rate_hz;
  return out;
}

inline std::pair<Vec3, Vec3> debias(const VimuSample& s, const BiasState& b) {
  return {s.gyro - b.b_g, s.accel - b.b_a};
}

namespace detail {

// The weight problems only see relative sigmas, so an all-zero bank (a
// noiseless rig) behaves like an all-equal one. Mixing zero and positive
// sigmas has no sensible weighting and is rejected.
inline std::vector<double> weighting_sigmas(std::vector<double> s) {
  bool any_zero = false, all_zero = true;
  for (double x : s) {
    any_zero = any_zero || x == 0.0;
    all_zero = all_zero && x == 0.0;
  }
  if (all_zero) std::fill(s.begin(), s.end(), 1.0);
  else if (any_zero)
    throw ValidationError(
        "make_vimu_config: cannot weight a mix of zero and nonzero sigmas");
  return s;
}

}  // namespace detail

// Builds the virtual sensor for a rig whose positions are already expressed
// relative to the target: gyro weights are noise-only, accel weights come
// from the placement-constrained problem.
inline VimuConfig make_vimu_config(const std::vector<RigImu>& rig) {
  if (rig.empty()) throw ValidationError("make_vimu_config: empty rig");
  VimuConfig cfg;
  std::vector<double> sg, sa;
  std::vector<Vec3> pos;
  std::vector<NoiseSpec> specs;
  for (const RigImu& imu : rig) {
    cfg.extrinsics.push_back(imu.extrinsics);
    sg.push_back(imu.noise.sigma_g);
    sa.push_back(imu.noise.sigma_a);
    pos.push_back(imu.extrinsics.r);
    specs.push_back(imu.noise);
  }
  cfg.w_gyro = solve_noise_only_weights(detail::weighting_sigmas(sg)).weights;
  cfg.w_accel = solve_placement_weights({pos, detail::weighting_sigmas(sa)}).weights;
  cfg.fused_noise = fused_bias_spec(cfg, specs);
  cfg.validate();
  return cfg;
}

struct SyncPolicy {
  // A bracketing gap wider than this multiple of the stream's median sample
  // period drops the output tick instead of interpolating across the hole.
  double max_gap_factor = 3.0;
};

struct FusedStream {
  std::vector<VimuSample> samples;
  std::size_t dropped_ticks = 0;
};

namespace detail {

inline double median_period(const std::vector<ImuSample>& s) {
  if (s.size() < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> d(s.size() - 1);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) d[i] = s[i + 1].t - s[i].t;
  std::nth_element(d.begin(), d.begin() + d.size() / 2, d.end());
  return d[d.size() / 2];
}

}  // namespace detail

// Resamples every stream onto the reference (first) stream's timestamps by
// linear interpolation, then fuses tick by tick. Only the overlap of all
// streams is produced; a sample that lands exactly on a source timestamp is
// passed through untouched.
inline FusedStream fuse_stream(const VimuConfig& cfg,
                               const std::vector<std::vector<ImuSample>>& streams,
                               const SyncPolicy& policy = {}) {
  cfg.validate();
  if (streams.size() != cfg.extrinsics.size())
    throw LengthMismatch("fuse_stream: stream count does not match config");
  for (const auto& s : streams) {
    if (s.empty()) throw EmptyOverlap("fuse_stream: empty input stream");
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      if (!(s[i + 1].t > s[i].t))
        throw NonMonotonicTimestamps("fuse_stream: timestamps not strictly increasing");
    }
  }

  double t0 = streams[0].front().t, t1 = streams[0].back().t;
  for (const auto& s : streams) {
    t0 = std::max(t0, s.front().t);
    t1 = std::min(t1, s.back().t);
  }
  if (t0 > t1) throw EmptyOverlap("fuse_stream: streams do not overlap in time");

  const std::size_t n = streams.size();
  std::vector<double> period(n);
  for (std::size_t j = 0; j < n; ++j) period[j] = detail::median_period(streams[j]);

  FusedStream out;
  std::vector<std::size_t> idx(n, 0);
  std::vector<Vec3> gyro(n), accel(n);

  for (const ImuSample& ref : streams[0]) {
    const double tq = ref.t;
    if (tq < t0 || tq > t1) continue;

    bool drop = false;
    for (std::size_t j = 0; j < n && !drop; ++j) {
      const auto& s = streams[j];
      std::size_t& i = idx[j];
      while (i + 1 < s.size() && s[i + 1].t <= tq) ++i;
      if (s[i].t == tq) {
        gyro[j] = s[i].gyro;
        accel[j] = s[i].accel;
        continue;
      }
      // tq is strictly inside (s[i].t, s[i+1].t); overlap guarantees i+1 exists.
      const double gap = s[i + 1].t - s[i].t;
      if (gap > policy.max_gap_factor * period[j]) {
        drop = true;
        break;
      }
      const double u = (tq - s[i].t) / gap;
      gyro[j] = (1.0 - u) * s[i].gyro + u * s[i + 1].gyro;
      accel[j] = (1.0 - u) * s[i].accel + u * s[i + 1].accel;
    }
    if (drop) {
      ++out.dropped_ticks;
      continue;
    }
    out.samples.push_back({tq, fuse_gyro(cfg, gyro), fuse_accel(cfg, accel)});
  }
  return out;
}

}  // namespace vimu
