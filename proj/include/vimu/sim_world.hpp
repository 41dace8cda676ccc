#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vimu/errors.hpp"
#include "vimu/geometry.hpp"
#include "vimu/imu_model.hpp"
#include "vimu/rng.hpp"

namespace vimu {

struct Sinusoid {
  double amplitude = 0.0;
  double freq_hz = 0.0;
  double phase = 0.0;

  double value(double t) const {
    return amplitude * std::sin(2.0 * M_PI * freq_hz * t + phase);
  }
  double derivative(double t) const {
    return amplitude * 2.0 * M_PI * freq_hz *
           std::cos(2.0 * M_PI * freq_hz * t + phase);
  }
};

// Analytic excitation. The omega bank drives the body angular velocity; the
// accel bank drives the body-frame kinematic acceleration (v-dot = C * a_kin),
// so the measured specific force is a_kin + C^T * gravity. A constant channel
// is a sinusoid with freq 0 and phase pi/2.
struct TrajectorySpec {
  std::array<std::vector<Sinusoid>, 3> omega_bank;
  std::array<std::vector<Sinusoid>, 3> accel_bank;
  double duration_s = 120.0;
  Vec3 gravity = Vec3(0.0, 0.0, 9.81);

  Vec3 omega_at(double t) const { return eval(omega_bank, t); }
  Vec3 alpha_at(double t) const { return eval_derivative(omega_bank, t); }
  Vec3 accel_kin_at(double t) const { return eval(accel_bank, t); }

 private:
  static Vec3 eval(const std::array<std::vector<Sinusoid>, 3>& bank, double t) {
    Vec3 v = Vec3::Zero();
    for (int a = 0; a < 3; ++a)
      for (const Sinusoid& s : bank[a]) v[a] += s.value(t);
    return v;
  }
  static Vec3 eval_derivative(const std::array<std::vector<Sinusoid>, 3>& bank,
                              double t) {
    Vec3 v = Vec3::Zero();
    for (int a = 0; a < 3; ++a)
      for (const Sinusoid& s : bank[a]) v[a] += s.derivative(t);
    return v;
  }
};

// a_body is the specific force at the vehicle origin (what a perfect
// accelerometer mounted there would read); alpha is the analytic derivative
// of omega, needed for lever-arm synthesis.
struct GroundTruthSample {
  double t = 0.0;
  Mat3 C = Mat3::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 p = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  Vec3 a_body = Vec3::Zero();
  Vec3 alpha = Vec3::Zero();
};

struct GroundTruth {
  std::vector<GroundTruthSample> samples;
  double rate_hz = 0.0;
};

// Integrates the trajectory from identity pose and zero velocity at the IMU
// rate. Attitude advances by the interval's average angular rate, velocity
// and position by the matching average specific force through the half-step
// attitude; a noiseless filter fed the sampled signals reproduces this
// trajectory exactly.
inline GroundTruth generate_ground_truth(const TrajectorySpec& spec,
                                         double rate_hz = 100.0) {
  if (!(rate_hz > 0.0))
    throw ValidationError("generate_ground_truth: rate must be positive");
  if (!(spec.duration_s > 0.0))
    throw ValidationError("generate_ground_truth: duration must be positive");

  const auto n_steps = static_cast<std::size_t>(std::llround(spec.duration_s * rate_hz));
  if (n_steps == 0)
    throw ValidationError("generate_ground_truth: duration shorter than one sample");
  const double dt = 1.0 / rate_hz;

  GroundTruth gt;
  gt.rate_hz = rate_hz;
  gt.samples.resize(n_steps + 1);

  RigidState state;
  auto fill = [&](std::size_t k, double t) {
    GroundTruthSample& s = gt.samples[k];
    s.t = t;
    s.C = state.C;
    s.v = state.v;
    s.p = state.p;
    s.omega = spec.omega_at(t);
    s.alpha = spec.alpha_at(t);
    s.a_body = spec.accel_kin_at(t) + state.C.transpose() * spec.gravity;
  };
  fill(0, 0.0);

  for (std::size_t k = 0; k < n_steps; ++k) {
    const double t_next = static_cast<double>(k + 1) * dt;
    const Vec3 omega_mid = 0.5 * (gt.samples[k].omega + spec.omega_at(t_next));
    // The endpoint specific force needs the endpoint attitude, which depends
    // on rotation alone; integrate_rigid_step recomputes the identical value.
    const Mat3 c_next = project_to_rotation(state.C * so3_exp(dt * omega_mid));
    const Vec3 sf_next = spec.accel_kin_at(t_next) + c_next.transpose() * spec.gravity;
    const Vec3 sf_mid = 0.5 * (gt.samples[k].a_body + sf_next);
    state = integrate_rigid_step(state, omega_mid, sf_mid, spec.gravity, dt);
    fill(k + 1, t_next);
  }
  return gt;
}

struct CameraModel {
  double fx = 458.0, fy = 458.0;
  double cx = 320.0, cy = 240.0;
  int width = 640, height = 480;
  double pixel_noise = 1.0;  // std, px

  Eigen::Vector2d project(const Vec3& pc) const {
    return {fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy};
  }
  Vec3 back_project(const Eigen::Vector2d& px, double depth) const {
    return {(px.x() - cx) / fx * depth, (px.y() - cy) / fy * depth, depth};
  }
};

// One landmark observation: the stored pixel carries the noise, the landmark
// position is exact. sigma_px is what the consumer should assume, not what
// was actually drawn.
struct LandmarkObs {
  double t = 0.0;
  Eigen::Vector2d pixel = Eigen::Vector2d::Zero();
  Vec3 landmark = Vec3::Zero();
  double sigma_px = 1.0;
};

// Per frame: uniform pixels, uniform depth, back-projected through the
// ground-truth pose; the recorded pixel gets gaussian noise. Frames start
// one camera period in, so frame timestamps land on IMU ticks (the IMU rate
// must be an integer multiple of the camera rate).
inline std::vector<LandmarkObs> synth_landmark_obs(
    const GroundTruth& gt, const CameraModel& cam, double cam_rate_hz,
    int landmarks_per_frame, const RngStream& master, double min_depth = 2.0,
    double max_depth = 10.0) {
  if (!(cam_rate_hz > 0.0))
    throw ValidationError("synth_landmark_obs: camera rate must be positive");
  const double ratio = gt.rate_hz / cam_rate_hz;
  const auto stride = static_cast<std::size_t>(std::llround(ratio));
  if (stride == 0 || std::abs(ratio - static_cast<double>(stride)) > 1e-9)
    throw ValidationError("synth_landmark_obs: IMU rate must be an integer multiple of the camera rate");
  if (landmarks_per_frame <= 0)
    throw ValidationError("synth_landmark_obs: need at least one landmark per frame");

  RngStream rng = master.substream("camera");
  std::vector<LandmarkObs> obs;
  for (std::size_t k = stride; k < gt.samples.size(); k += stride) {
    const GroundTruthSample& s = gt.samples[k];
    for (int i = 0; i < landmarks_per_frame; ++i) {
      const double u = rng.uniform(0.0, static_cast<double>(cam.width));
      const double v = rng.uniform(0.0, static_cast<double>(cam.height));
      const double depth = rng.uniform(min_depth, max_depth);
      const Vec3 pc = cam.back_project({u, v}, depth);
      LandmarkObs o;
      o.t = s.t;
      o.landmark = s.C * pc + s.p;
      o.pixel = {u + cam.pixel_noise * rng.gaussian(),
                 v + cam.pixel_noise * rng.gaussian()};
      o.sigma_px = cam.pixel_noise;
      obs.push_back(o);
    }
  }
  return obs;
}

// Per-sensor noisy streams for a rig, all at the ground-truth timestamps.
// Noise and bias-walk substreams key on the sensor id, so two rigs sharing
// ids see identical draws (paired comparisons across rig geometries).
inline std::vector<std::vector<ImuSample>> synth_multi_imu(
    const GroundTruth& gt, const std::vector<RigImu>& rig,
    const RngStream& master) {
  if (rig.empty()) throw ValidationError("synth_multi_imu: empty rig");
  const double dt = 1.0 / gt.rate_hz;

  std::vector<std::vector<ImuSample>> streams(rig.size());
  for (std::size_t j = 0; j < rig.size(); ++j) {
    const RigImu& imu = rig[j];
    imu.noise.validate();
    RngStream noise = master.substream("imu_noise", static_cast<std::uint64_t>(imu.id));
    RngStream walk = master.substream("imu_bias", static_cast<std::uint64_t>(imu.id));
    BiasState bias;
    streams[j].reserve(gt.samples.size());
    for (std::size_t k = 0; k < gt.samples.size(); ++k) {
      const GroundTruthSample& s = gt.samples[k];
      ImuSample out;
      out.t = s.t;
      out.gyro = synth_gyro(imu.extrinsics, s.omega, bias,
                            imu.noise.sigma_g * gaussian_vec3(noise));
      out.accel = synth_accel(imu.extrinsics, s.a_body, s.omega, s.alpha, bias,
                              imu.noise.sigma_a * gaussian_vec3(noise));
      streams[j].push_back(out);
      if (k + 1 < gt.samples.size()) bias = step_bias(bias, imu.noise, dt, walk);
    }
  }
  return streams;
}

// The seven rig geometries used throughout the evaluation. S0 is a single
// sensor at the target; S2/S4/S6 place 2, 4, 6 sensors symmetrically on the
// axes at 1 m; A2/A4/A6 move the same sensors by uniform +-0.2 m
// perturbations restricted to the subspace the symmetric set spans, so the
// target stays reachable. Sensor ids and orientations are shared between a
// symmetric rig and its asymmetric variant.
enum class ImuSetup { S0, S2, S4, S6, A2, A4, A6 };

inline const char* to_string(ImuSetup s) {
  switch (s) {
    case ImuSetup::S0: return "S0";
    case ImuSetup::S2: return "S2";
    case ImuSetup::S4: return "S4";
    case ImuSetup::S6: return "S6";
    case ImuSetup::A2: return "A2";
    case ImuSetup::A4: return "A4";
    case ImuSetup::A6: return "A6";
  }
  return "?";
}

inline bool parse_imu_setup(const std::string& name, ImuSetup* out) {
  for (ImuSetup s : {ImuSetup::S0, ImuSetup::S2, ImuSetup::S4, ImuSetup::S6,
                     ImuSetup::A2, ImuSetup::A4, ImuSetup::A6}) {
    if (name == to_string(s)) {
      *out = s;
      return true;
    }
  }
  return false;
}

inline constexpr std::uint64_t kDefaultRigSeed = 99;

inline std::vector<RigImu> make_imu_rig(ImuSetup setup, const NoiseSpec& noise,
                                        std::uint64_t rig_seed = kDefaultRigSeed) {
  noise.validate();
  const RngStream rig(rig_seed);

  const Vec3 base[7] = {
      {0.0, 0.0, 0.0},  {1.0, 0.0, 0.0},  {-1.0, 0.0, 0.0}, {0.0, 1.0, 0.0},
      {0.0, -1.0, 0.0}, {0.0, 0.0, 1.0},  {0.0, 0.0, -1.0}};
  // How many position components id j's perturbation may touch: ids 1,2 live
  // on the x axis, 3,4 in the xy plane, 5,6 anywhere.
  const int dims[7] = {0, 1, 1, 2, 2, 3, 3};

  int count = 0;
  bool perturbed = false;
  switch (setup) {
    case ImuSetup::S0: count = 0; break;
    case ImuSetup::S2: count = 2; break;
    case ImuSetup::S4: count = 4; break;
    case ImuSetup::S6: count = 6; break;
    case ImuSetup::A2: count = 2; perturbed = true; break;
    case ImuSetup::A4: count = 4; perturbed = true; break;
    case ImuSetup::A6: count = 6; perturbed = true; break;
  }

  std::vector<RigImu> out;
  auto add = [&](int id) {
    RigImu imu;
    imu.id = id;
    imu.noise = noise;
    RngStream orient = rig.substream("orientation", static_cast<std::uint64_t>(id));
    imu.extrinsics.C = (id == 0) ? Mat3::Identity() : random_rotation(orient);
    imu.extrinsics.r = base[id];
    if (perturbed && id > 0) {
      RngStream shift = rig.substream("perturbation", static_cast<std::uint64_t>(id));
      for (int a = 0; a < dims[id]; ++a)
        imu.extrinsics.r[a] += shift.uniform(-0.2, 0.2);
    }
    out.push_back(imu);
  };

  if (setup == ImuSetup::S0) {
    add(0);
  } else {
    for (int id = 1; id <= count; ++id) add(id);
  }
  return out;
}

// Everything a single evaluation run needs.
struct Scenario {
  TrajectorySpec trajectory;
  double imu_rate_hz = 100.0;
  double cam_rate_hz = 2.0;
  CameraModel camera;
  int landmarks_per_frame = 20;
  NoiseSpec imu_noise;
  std::uint64_t rig_seed = kDefaultRigSeed;
};

// The reference world: multi-axis sinusoid excitation, two minutes, z-up
// gravity, consumer-MEMS noise at 100 Hz, 2 Hz camera.
inline Scenario default_scenario() {
  Scenario sc;
  sc.trajectory.omega_bank[0] = {{0.4, 0.10, 0.3}, {0.1, 0.25, 2.1}};
  sc.trajectory.omega_bank[1] = {{0.3, 0.20, 1.0}};
  sc.trajectory.omega_bank[2] = {{0.5, 0.30, 2.0}};
  sc.trajectory.accel_bank[0] = {{0.8, 0.10, 0.5}, {0.2, 0.20, 1.7}};
  sc.trajectory.accel_bank[1] = {{0.6, 0.15, 1.5}};
  sc.trajectory.accel_bank[2] = {{0.9, 0.25, 2.5}};
  return sc;
}

}  // namespace vimu
