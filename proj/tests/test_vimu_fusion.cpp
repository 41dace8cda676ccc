#include <cmath>

#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "vimu/vimu_fusion.hpp"

using namespace vimu;

namespace {

VimuConfig equal_pair_config() {
  VimuConfig cfg;
  cfg.extrinsics.resize(2);
  cfg.extrinsics[0].r = Vec3(1.0, 0.0, 0.0);
  cfg.extrinsics[1].r = Vec3(-1.0, 0.0, 0.0);
  cfg.w_gyro = {0.5, 0.5};
  cfg.w_accel = {0.5, 0.5};
  return cfg;
}

}  // namespace

TEST_CASE("gyro fusion") {
  SECTION("identical identity-mounted readings pass through") {
    VimuConfig cfg = equal_pair_config();
    const Vec3 w(0.3, -0.1, 0.2);
    CHECK((fuse_gyro(cfg, {w, w}) - w).norm() == 0.0);
  }

  SECTION("rotated mountings align before averaging") {
    RngStream rng(51);
    for (int i = 0; i < 50; ++i) {
      VimuConfig cfg = equal_pair_config();
      cfg.extrinsics[0].C = random_rotation(rng);
      cfg.extrinsics[1].C = random_rotation(rng);
      const Vec3 w = gaussian_vec3(rng);
      const std::vector<Vec3> readings = {cfg.extrinsics[0].C.transpose() * w,
                                          cfg.extrinsics[1].C.transpose() * w};
      CHECK((fuse_gyro(cfg, readings) - w).norm() < 1e-13);
    }
  }

  SECTION("white noise shrinks as sigma over sqrt(n)") {
    VimuConfig cfg;
    cfg.extrinsics.resize(4);
    cfg.w_gyro = {0.25, 0.25, 0.25, 0.25};
    cfg.w_accel = cfg.w_gyro;
    const double sigma = 0.01;
    RngStream rng(52);
    double sum_sq = 0.0;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
      std::vector<Vec3> readings(4);
      for (auto& r : readings) r = sigma * gaussian_vec3(rng);
      sum_sq += fuse_gyro(cfg, readings).squaredNorm() / 3.0;
    }
    const double fused_sigma = std::sqrt(sum_sq / n);
    CHECK(fused_sigma == Catch::Approx(sigma / 2.0).epsilon(0.05));
  }

  SECTION("size mismatch throws") {
    VimuConfig cfg = equal_pair_config();
    CHECK_THROWS_AS(fuse_gyro(cfg, {Vec3::Zero()}), LengthMismatch);
    CHECK_THROWS_AS(fuse_accel(cfg, {Vec3::Zero()}), LengthMismatch);
  }
}

TEST_CASE("accel fusion removes lever-arm terms") {
  SECTION("symmetric pair cancels centripetal and tangential parts") {
    VimuConfig cfg = equal_pair_config();
    const Vec3 a(0.2, 0.1, -0.3), w(0.0, 0.0, 2.0), al(0.0, 1.0, 0.0);
    const std::vector<Vec3> readings = {
        synth_accel(cfg.extrinsics[0], a, w, al, {}, Vec3::Zero()),
        synth_accel(cfg.extrinsics[1], a, w, al, {}, Vec3::Zero())};
    CHECK((fuse_accel(cfg, readings) - a).norm() < 1e-14);
  }

  SECTION("solver weights eliminate the lever arm on random rigs") {
    RngStream rng(53);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 2 + static_cast<int>(rng.next_u64() % 7);
      const auto problem = oracle::make_random_feasible_problem(rng, n);
      const WeightSolution sol =
          solve_placement_weights({problem.positions, problem.sigmas});

      VimuConfig cfg;
      cfg.extrinsics.resize(n);
      for (int j = 0; j < n; ++j) {
        cfg.extrinsics[j].C = random_rotation(rng);
        cfg.extrinsics[j].r = problem.positions[j];
      }
      cfg.w_accel = sol.weights;
      cfg.w_gyro.assign(n, 1.0 / n);

      const Vec3 a = gaussian_vec3(rng);
      const Vec3 w = gaussian_vec3(rng);
      const Vec3 al = gaussian_vec3(rng);
      std::vector<Vec3> readings(n);
      for (int j = 0; j < n; ++j)
        readings[j] = synth_accel(cfg.extrinsics[j], a, w, al, {}, Vec3::Zero());
      CHECK((fuse_accel(cfg, readings) - a).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  SECTION("common-frame equivariance") {
    RngStream rng(54);
    VimuConfig cfg = equal_pair_config();
    cfg.extrinsics[0].C = random_rotation(rng);
    cfg.extrinsics[1].C = random_rotation(rng);
    const Mat3 q = random_rotation(rng);
    const std::vector<Vec3> readings = {gaussian_vec3(rng), gaussian_vec3(rng)};

    VimuConfig rotated = cfg;
    rotated.extrinsics[0].C = q * cfg.extrinsics[0].C;
    rotated.extrinsics[1].C = q * cfg.extrinsics[1].C;
    CHECK((fuse_accel(rotated, readings) - q * fuse_accel(cfg, readings)).norm() <
          1e-13);
    CHECK((fuse_gyro(rotated, readings) - q * fuse_gyro(cfg, readings)).norm() <
          1e-13);
  }
}

TEST_CASE("fused noise spec") {
  SECTION("n identical sensors with equal weights shrink by sqrt(n)") {
    VimuConfig cfg;
    cfg.extrinsics.resize(4);
    cfg.w_gyro.assign(4, 0.25);
    cfg.w_accel.assign(4, 0.25);
    const NoiseSpec fused = fused_bias_spec(cfg, std::vector<NoiseSpec>(4, NoiseSpec{}));
    const NoiseSpec one;
    CHECK(fused.sigma_g == Catch::Approx(one.sigma_g / 2.0));
    CHECK(fused.sigma_a == Catch::Approx(one.sigma_a / 2.0));
    CHECK(fused.sigma_bg == Catch::Approx(one.sigma_bg / 2.0));
    CHECK(fused.sigma_ba == Catch::Approx(one.sigma_ba / 2.0));
    CHECK(fused.rate_hz == Catch::Approx(one.rate_hz));
  }

  SECTION("negative weights amplify instead of attenuate") {
    VimuConfig cfg;
    cfg.extrinsics.resize(3);
    cfg.w_gyro = {1.2, -0.1, -0.1};
    cfg.w_accel = cfg.w_gyro;
    const NoiseSpec fused = fused_bias_spec(cfg, std::vector<NoiseSpec>(3, NoiseSpec{}));
    const NoiseSpec one;
    CHECK(fused.sigma_a == Catch::Approx(one.sigma_a * std::sqrt(1.46)));
    CHECK(fused.sigma_g > one.sigma_g);
  }

  SECTION("single sensor spec is unchanged") {
    VimuConfig cfg;
    cfg.extrinsics.resize(1);
    cfg.w_gyro = {1.0};
    cfg.w_accel = {1.0};
    const NoiseSpec fused = fused_bias_spec(cfg, {NoiseSpec{}});
    CHECK(fused.sigma_g == Catch::Approx(NoiseSpec{}.sigma_g));
    CHECK(fused.sigma_ba == Catch::Approx(NoiseSpec{}.sigma_ba));
  }

  SECTION("size mismatch throws") {
    VimuConfig cfg = equal_pair_config();
    CHECK_THROWS_AS(fused_bias_spec(cfg, {NoiseSpec{}}), LengthMismatch);
  }
}

TEST_CASE("debias subtracts exactly") {
  VimuSample s;
  s.gyro = Vec3(0.1, 0.2, 0.3);
  s.accel = Vec3(1.0, 2.0, 3.0);
  BiasState b;
  b.b_g = Vec3(0.01, 0.02, 0.03);
  b.b_a = Vec3(0.1, 0.2, 0.3);
  const auto [w, a] = debias(s, b);
  CHECK((w - Vec3(0.09, 0.18, 0.27)).norm() < 1e-15);
  CHECK((a - Vec3(0.9, 1.8, 2.7)).norm() < 1e-15);

  const auto [w0, a0] = debias(s, {});
  CHECK((w0 - s.gyro).norm() == 0.0);
  CHECK((a0 - s.accel).norm() == 0.0);
}

TEST_CASE("config validation") {
  VimuConfig cfg = equal_pair_config();
  CHECK_NOTHROW(cfg.validate());

  SECTION("weights must sum to one") {
    cfg.w_gyro = {0.6, 0.6};
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }

  SECTION("accel weights must realize the placement") {
    cfg.w_accel = {0.8, 0.2};  // places the virtual sensor at 0.6 x
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }

  SECTION("empty config rejected") {
    VimuConfig empty;
    CHECK_THROWS_AS(empty.validate(), ValidationError);
  }
}

TEST_CASE("stream fusion") {
  VimuConfig cfg = equal_pair_config();

  auto linear_stream = [](double t0, double dt, int n, const Vec3& g0,
                          const Vec3& gslope, const Vec3& a0,
                          const Vec3& aslope) {
    std::vector<ImuSample> s(n);
    for (int k = 0; k < n; ++k) {
      const double t = t0 + k * dt;
      s[k] = {t, g0 + t * gslope, a0 + t * aslope};
    }
    return s;
  };

  SECTION("identical timestamps reproduce per-tick fusion exactly") {
    const auto s0 = linear_stream(0.0, 0.01, 100, Vec3(0.1, 0, 0),
                                  Vec3(0, 0.2, 0), Vec3(1, 0, 0), Vec3(0, 0, 3));
    const auto s1 = linear_stream(0.0, 0.01, 100, Vec3(0, 0.5, 0),
                                  Vec3(0.1, 0, 0), Vec3(0, 1, 0), Vec3(2, 0, 0));
    const FusedStream fused = fuse_stream(cfg, {s0, s1});
    REQUIRE(fused.samples.size() == 100);
    CHECK(fused.dropped_ticks == 0);
    for (int k = 0; k < 100; ++k) {
      const Vec3 expect_g = fuse_gyro(cfg, {s0[k].gyro, s1[k].gyro});
      const Vec3 expect_a = fuse_accel(cfg, {s0[k].accel, s1[k].accel});
      CHECK((fused.samples[k].gyro - expect_g).norm() == 0.0);
      CHECK((fused.samples[k].accel - expect_a).norm() == 0.0);
    }
  }

  SECTION("offset stream interpolates a linear signal exactly") {
    const Vec3 g0(0.1, -0.2, 0.3), gs(0.4, 0.1, -0.3), a0(1, 2, 3), as(-1, 0, 2);
    const auto ref = linear_stream(0.0, 0.01, 200, Vec3::Zero(), Vec3::Zero(),
                                   Vec3::Zero(), Vec3::Zero());
    const auto off = linear_stream(0.005, 0.01, 200, g0, gs, a0, as);
    const FusedStream fused = fuse_stream(cfg, {ref, off});
    for (const VimuSample& s : fused.samples) {
      // Stream 1's value at the reference tick is linear in t, so the lerp
      // is exact; stream 0 contributes zero.
      const Vec3 expect_g = 0.5 * (g0 + s.t * gs);
      const Vec3 expect_a = 0.5 * (a0 + s.t * as);
      CHECK((s.gyro - expect_g).norm() < 1e-14);
      CHECK((s.accel - expect_a).norm() < 1e-14);
    }
    // Ticks outside the second stream's range are not produced.
    CHECK(fused.samples.front().t >= 0.005);
    CHECK(fused.samples.back().t <= 0.005 + 199 * 0.01);
  }

  SECTION("mismatched rates resample onto the reference timeline") {
    const auto ref = linear_stream(0.0, 0.01, 101, Vec3::Zero(), Vec3::Zero(),
                                   Vec3::Zero(), Vec3::Zero());
    const auto slow = linear_stream(0.0, 1.0 / 97.0, 98, Vec3(1, 1, 1),
                                    Vec3::Zero(), Vec3(2, 2, 2), Vec3::Zero());
    const FusedStream fused = fuse_stream(cfg, {ref, slow});
    // Overlap is [0, 1.0]; every reference tick in it is produced.
    CHECK(fused.samples.size() == 101);
    CHECK(fused.dropped_ticks == 0);
  }

  SECTION("a hole wider than the gap policy drops ticks but keeps going") {
    auto ref = linear_stream(0.0, 0.01, 101, Vec3::Zero(), Vec3::Zero(),
                             Vec3::Zero(), Vec3::Zero());
    auto holed = linear_stream(0.0, 0.01, 101, Vec3(1, 0, 0), Vec3::Zero(),
                               Vec3(0, 1, 0), Vec3::Zero());
    // Remove samples 40..49: a 0.11 s hole against a 0.01 s median.
    holed.erase(holed.begin() + 40, holed.begin() + 50);
    const FusedStream fused = fuse_stream(cfg, {ref, holed});
    CHECK(fused.dropped_ticks == 10);  // ticks 0.40 .. 0.49 fall in the hole
    CHECK(fused.samples.size() == 101 - 10);
  }

  SECTION("disjoint ranges throw EmptyOverlap") {
    const auto a = linear_stream(0.0, 0.01, 10, Vec3::Zero(), Vec3::Zero(),
                                 Vec3::Zero(), Vec3::Zero());
    const auto b = linear_stream(5.0, 0.01, 10, Vec3::Zero(), Vec3::Zero(),
                                 Vec3::Zero(), Vec3::Zero());
    CHECK_THROWS_AS(fuse_stream(cfg, {a, b}), EmptyOverlap);
    CHECK_THROWS_AS(fuse_stream(cfg, {a, {}}), EmptyOverlap);
  }

  SECTION("non-monotonic input throws") {
    auto a = linear_stream(0.0, 0.01, 10, Vec3::Zero(), Vec3::Zero(),
                           Vec3::Zero(), Vec3::Zero());
    auto b = a;
    std::swap(b[3].t, b[4].t);
    CHECK_THROWS_AS(fuse_stream(cfg, {a, b}), NonMonotonicTimestamps);
  }

  SECTION("stream count must match the config") {
    const auto a = linear_stream(0.0, 0.01, 10, Vec3::Zero(), Vec3::Zero(),
                                 Vec3::Zero(), Vec3::Zero());
    CHECK_THROWS_AS(fuse_stream(cfg, {a}), LengthMismatch);
  }
}

TEST_CASE("rig to config") {
  RngStream rng(55);
  std::vector<RigImu> rig(3);
  rig[0].id = 1;
  rig[0].extrinsics.r = Vec3(1.0, 0.0, 0.0);
  rig[1].id = 2;
  rig[1].extrinsics.r = Vec3(-0.5, 0.5, 0.0);
  rig[2].id = 3;
  rig[2].extrinsics.r = Vec3(-0.5, -0.5, 0.0);
  for (auto& imu : rig) imu.extrinsics.C = random_rotation(rng);

  const VimuConfig cfg = make_vimu_config(rig);
  CHECK_NOTHROW(cfg.validate());
  // Identical sigmas: gyro weights are uniform, accel weights solve the
  // placement problem.
  for (double w : cfg.w_gyro) CHECK(w == Catch::Approx(1.0 / 3.0));
  Vec3 placement = Vec3::Zero();
  for (int j = 0; j < 3; ++j) placement += cfg.w_accel[j] * rig[j].extrinsics.r;
  CHECK(placement.norm() < 1e-10);
  CHECK(cfg.fused_noise.sigma_g < NoiseSpec{}.sigma_g);
}
