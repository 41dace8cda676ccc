#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "vimu/imu_model.hpp"

using namespace vimu;

TEST_CASE("noise spec conversions") {
  const NoiseSpec s = NoiseSpec::from_densities(5e-4, 5e-3, 1e-4, 1e-3, 100.0);
  CHECK(s.sigma_g == Catch::Approx(0.005));
  CHECK(s.sigma_a == Catch::Approx(0.05));
  CHECK(s.sigma_bg == Catch::Approx(1e-5));
  CHECK(s.sigma_ba == Catch::Approx(1e-4));

  // The defaults are exactly the consumer-MEMS density set at 100 Hz.
  const NoiseSpec d = NoiseSpec::mems_default();
  CHECK(d.sigma_g == Catch::Approx(s.sigma_g));
  CHECK(d.sigma_ba == Catch::Approx(s.sigma_ba));

  NoiseSpec bad;
  bad.sigma_a = -1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = NoiseSpec{};
  bad.rate_hz = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("gyro model") {
  const Vec3 omega(0.3, -0.2, 0.1);

  SECTION("identity mounting passes the rate through") {
    CHECK((synth_gyro({}, omega, {}, Vec3::Zero()) - omega).norm() == 0.0);
  }

  SECTION("bias and noise add after the frame change") {
    BiasState b;
    b.b_g = Vec3(0.01, 0.02, -0.01);
    const Vec3 n(1e-3, -1e-3, 2e-3);
    CHECK((synth_gyro({}, omega, b, n) - (omega + b.b_g + n)).norm() == 0.0);
  }

  SECTION("mounting rotated 90 degrees about z") {
    ImuExtrinsics e;
    e.C = so3_exp(Vec3(0.0, 0.0, M_PI / 2.0));
    const Vec3 reading = synth_gyro(e, Vec3(1.0, 0.0, 0.0), {}, Vec3::Zero());
    CHECK((reading - Vec3(0.0, -1.0, 0.0)).norm() < 1e-12);
  }

  SECTION("frame equivariance") {
    RngStream rng(21);
    for (int i = 0; i < 50; ++i) {
      ImuExtrinsics e;
      e.C = random_rotation(rng);
      const Vec3 w = gaussian_vec3(rng);
      const Vec3 via_extr = synth_gyro(e, w, {}, Vec3::Zero());
      const Vec3 via_rotated = synth_gyro({}, e.C.transpose() * w, {}, Vec3::Zero());
      CHECK((via_extr - via_rotated).norm() < 1e-14);
    }
  }
}

TEST_CASE("accel model lever arm") {
  SECTION("zero lever arm reduces to the frame change exactly") {
    RngStream rng(22);
    for (int i = 0; i < 50; ++i) {
      ImuExtrinsics e;
      e.C = random_rotation(rng);
      const Vec3 a = gaussian_vec3(rng), w = gaussian_vec3(rng),
                 al = gaussian_vec3(rng);
      const Vec3 lhs = synth_accel(e, a, w, al, {}, Vec3::Zero());
      const Vec3 rhs = e.C.transpose() * a;
      CHECK((lhs - rhs).norm() == 0.0);
    }
  }

  SECTION("centripetal term: spin about z, sensor on x") {
    ImuExtrinsics e;
    e.r = Vec3(1.0, 0.0, 0.0);
    const Vec3 reading = synth_accel(e, Vec3::Zero(), Vec3(0.0, 0.0, 1.0),
                                     Vec3::Zero(), {}, Vec3::Zero());
    CHECK((reading - Vec3(-1.0, 0.0, 0.0)).norm() < 1e-15);
  }

  SECTION("tangential term: spin-up about z, sensor on x") {
    ImuExtrinsics e;
    e.r = Vec3(1.0, 0.0, 0.0);
    const Vec3 reading = synth_accel(e, Vec3::Zero(), Vec3::Zero(),
                                     Vec3(0.0, 0.0, 2.0), {}, Vec3::Zero());
    CHECK((reading - Vec3(0.0, 2.0, 0.0)).norm() < 1e-15);
  }

  SECTION("matches the kinematic identity on random inputs") {
    RngStream rng(23);
    for (int i = 0; i < 100; ++i) {
      ImuExtrinsics e;
      e.C = random_rotation(rng);
      e.r = gaussian_vec3(rng);
      const Vec3 a = gaussian_vec3(rng), w = gaussian_vec3(rng),
                 al = gaussian_vec3(rng);
      const Vec3 expected =
          e.C.transpose() * (a + w.cross(w.cross(e.r)) + al.cross(e.r));
      CHECK((synth_accel(e, a, w, al, {}, Vec3::Zero()) - expected).norm() <
            1e-14);
    }
  }
}

TEST_CASE("bias random walk") {
  NoiseSpec spec;
  spec.sigma_bg = 0.01;
  spec.sigma_ba = 0.02;

  SECTION("zero intensities leave the bias unchanged") {
    NoiseSpec still = spec;
    still.sigma_bg = 0.0;
    still.sigma_ba = 0.0;
    RngStream rng(31);
    BiasState b;
    b.b_g = Vec3(1.0, 2.0, 3.0);
    const BiasState next = step_bias(b, still, 0.01, rng);
    CHECK((next.b_g - b.b_g).norm() == 0.0);
    CHECK((next.b_a - b.b_a).norm() == 0.0);
  }

  SECTION("same seed reproduces the same path") {
    RngStream a(32), b(32);
    BiasState pa, pb;
    for (int k = 0; k < 100; ++k) {
      pa = step_bias(pa, spec, 0.01, a);
      pb = step_bias(pb, spec, 0.01, b);
    }
    CHECK((pa.b_g - pb.b_g).norm() == 0.0);
    CHECK((pa.b_a - pb.b_a).norm() == 0.0);
  }

  SECTION("variance grows linearly with time") {
    // dt = 1/rate makes the per-step increment sigma exactly; after k steps
    // the variance is k sigma^2 per axis.
    const int n_paths = 100000, n_steps = 50;
    const double dt = 1.0 / spec.rate_hz;
    RngStream master(33);
    double var_g = 0.0, var_a = 0.0;
    for (int p = 0; p < n_paths; ++p) {
      RngStream rng = master.substream("path", p);
      BiasState b;
      for (int k = 0; k < n_steps; ++k) b = step_bias(b, spec, dt, rng);
      var_g += b.b_g.squaredNorm() / 3.0;
      var_a += b.b_a.squaredNorm() / 3.0;
    }
    var_g /= n_paths;
    var_a /= n_paths;
    const double expect_g = n_steps * spec.sigma_bg * spec.sigma_bg;
    const double expect_a = n_steps * spec.sigma_ba * spec.sigma_ba;
    CHECK(var_g == Catch::Approx(expect_g).epsilon(0.05));
    CHECK(var_a == Catch::Approx(expect_a).epsilon(0.05));
  }

  SECTION("dt must be positive") {
    RngStream rng(34);
    CHECK_THROWS_AS(step_bias({}, spec, 0.0, rng), std::invalid_argument);
  }
}
