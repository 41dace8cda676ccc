#pragma once

#include <cmath>

#include "vimu/errors.hpp"
#include "vimu/geometry.hpp"
#include "vimu/rng.hpp"

namespace vimu {

// Sensor stochastics as per-sample standard deviations at rate_hz. sigma_g
// and sigma_a are white measurement noise per sample; sigma_bg and sigma_ba
// are the per-sample-step bias random-walk increments.
struct NoiseSpec {
  double sigma_g = 0.005;  // rad/s
  double sigma_a = 0.05;   // m/s^2
  double sigma_bg = 1e-5;  // rad/s per step
  double sigma_ba = 1e-4;  // m/s^2 per step
  double rate_hz = 100.0;

  // From continuous-time densities in the usual datasheet units: white noise
  // in (rad/s)/sqrt(Hz) resp. (m/s^2)/sqrt(Hz), walk intensity in (rad/s) or
  // (m/s^2) per sqrt(s). Sampling at rate f scales white noise by sqrt(f)
  // and the per-step walk increment by 1/sqrt(f).
  static NoiseSpec from_densities(double gyro_density, double accel_density,
                                  double gyro_walk, double accel_walk,
                                  double rate_hz) {
    NoiseSpec s;
    s.sigma_g = gyro_density * std::sqrt(rate_hz);
    s.sigma_a = accel_density * std::sqrt(rate_hz);
    s.sigma_bg = gyro_walk / std::sqrt(rate_hz);
    s.sigma_ba = accel_walk / std::sqrt(rate_hz);
    s.rate_hz = rate_hz;
    return s;
  }

  // Consumer-MEMS magnitudes (MPU6050 class) at 100 Hz; same as the defaults.
  static NoiseSpec mems_default() { return NoiseSpec{}; }

  void validate() const {
    if (!(rate_hz > 0.0)) throw ValidationError("NoiseSpec: rate_hz must be positive");
    if (sigma_g < 0.0 || sigma_a < 0.0 || sigma_bg < 0.0 || sigma_ba < 0.0)
      throw ValidationError("NoiseSpec: negative sigma");
    if (!std::isfinite(sigma_g) || !std::isfinite(sigma_a) ||
        !std::isfinite(sigma_bg) || !std::isfinite(sigma_ba) ||
        !std::isfinite(rate_hz))
      throw ValidationError("NoiseSpec: non-finite entry");
  }
};

// Mounting of one sensor: C maps sensor frame to vehicle frame, r is the
// sensor origin in the vehicle frame.
struct ImuExtrinsics {
  Mat3 C = Mat3::Identity();
  Vec3 r = Vec3::Zero();
};

struct ImuSample {
  double t = 0.0;
  Vec3 gyro = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

struct BiasState {
  Vec3 b_g = Vec3::Zero();
  Vec3 b_a = Vec3::Zero();
};

// One physical sensor on a rig.
struct RigImu {
  int id = 0;
  ImuExtrinsics extrinsics;
  NoiseSpec noise;
};

inline Vec3 synth_gyro(const ImuExtrinsics& e, const Vec3& omega_true,
                       const BiasState& bias, const Vec3& noise_draw) {
  return e.C.transpose() * omega_true + bias.b_g + noise_draw;
}

// a_true is the specific force at the vehicle origin in the vehicle frame;
// the lever arm adds centripetal and tangential terms before the frame
// change into the sensor.
inline Vec3 synth_accel(const ImuExtrinsics& e, const Vec3& a_true,
                        const Vec3& omega_true, const Vec3& alpha_true,
                        const BiasState& bias, const Vec3& noise_draw) {
  const Vec3 at_sensor = a_true +
                         omega_true.cross(omega_true.cross(e.r)) +
                         alpha_true.cross(e.r);
  return e.C.transpose() * at_sensor + bias.b_a + noise_draw;
}

// Random-walk step over dt; increment variance grows linearly in dt
// regardless of the nominal sample rate.
inline BiasState step_bias(const BiasState& bias, const NoiseSpec& spec,
                           double dt, RngStream& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_bias: dt must be positive");
  const double scale = std::sqrt(dt * spec.rate_hz);
  BiasState out = bias;
  out.b_g += (spec.sigma_bg * scale) * gaussian_vec3(rng);
  out.b_a += (spec.sigma_ba * scale) * gaussian_vec3(rng);
  return out;
}

}  // namespace vimu
