#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "vimu/errors.hpp"
#include "vimu/geometry.hpp"
#include "vimu/liekf.hpp"
#include "vimu/sim_world.hpp"
#include "vimu/vimu_fusion.hpp"

namespace vimu {

struct ErrorSeries {
  std::vector<double> t;
  std::vector<double> rot;  // rad, angle of C_gt^T C_est
  std::vector<double> pos;  // m
};

struct RunSummary {
  std::string config;
  std::uint64_t seed = 0;
  double rot_mae = 0.0;
  double rot_rmse = 0.0;
  double pos_mae = 0.0;
  double pos_rmse = 0.0;
  double wall_s = 0.0;
};

// Estimate timestamps must be a subset of the ground-truth timestamps; both
// inputs are time-ordered.
inline ErrorSeries compute_errors(const std::vector<TimedState>& est,
                                  const GroundTruth& gt) {
  ErrorSeries out;
  std::size_t gi = 0;
  for (const TimedState& e : est) {
    while (gi < gt.samples.size() && gt.samples[gi].t < e.t - 1e-9) ++gi;
    if (gi >= gt.samples.size() || std::abs(gt.samples[gi].t - e.t) > 1e-9)
      throw TimestampMismatch("compute_errors: estimate time " +
                              std::to_string(e.t) + " not in ground truth");
    const GroundTruthSample& g = gt.samples[gi];
    out.t.push_back(e.t);
    out.rot.push_back(so3_log(g.C.transpose() * e.state.C).norm());
    out.pos.push_back((e.state.p - g.p).norm());
  }
  return out;
}

struct ChannelStats {
  double mae = 0.0;
  double rmse = 0.0;
};

inline ChannelStats channel_stats(const std::vector<double>& e) {
  if (e.empty()) throw EmptySeries("channel_stats: empty error series");
  double sum = 0.0, sum_sq = 0.0;
  for (double x : e) {
    sum += std::abs(x);
    sum_sq += x * x;
  }
  const double n = static_cast<double>(e.size());
  return {sum / n, std::sqrt(sum_sq / n)};
}

inline RunSummary summarize(const ErrorSeries& s) {
  RunSummary out;
  const ChannelStats rot = channel_stats(s.rot);
  const ChannelStats pos = channel_stats(s.pos);
  out.rot_mae = rot.mae;
  out.rot_rmse = rot.rmse;
  out.pos_mae = pos.mae;
  out.pos_rmse = pos.rmse;
  return out;
}

// Everything one run produces, for callers that want to write artifacts.
struct RunOutputs {
  GroundTruth gt;
  std::vector<RigImu> rig;
  std::vector<std::vector<ImuSample>> imu_streams;
  VimuConfig vimu;
  std::vector<VimuSample> fused;
  std::vector<LandmarkObs> landmarks;
  std::vector<TimedState> estimates;
  ErrorSeries errors;
};

// One full pipeline pass: truth, rig synthesis, weight solve, fusion,
// filtering, error series. Deterministic in (scenario, setup, seed); the
// same seed reuses identical noise draws across setups sharing sensor ids.
inline RunSummary run_single(const Scenario& sc, ImuSetup setup,
                             std::uint64_t seed, RunOutputs* out = nullptr) {
  const auto t_start = std::chrono::steady_clock::now();

  const GroundTruth gt = generate_ground_truth(sc.trajectory, sc.imu_rate_hz);
  const RngStream master(seed);
  const std::vector<RigImu> rig = make_imu_rig(setup, sc.imu_noise, sc.rig_seed);
  const auto streams = synth_multi_imu(gt, rig, master);
  const VimuConfig cfg = make_vimu_config(rig);
  const auto landmarks = synth_landmark_obs(gt, sc.camera, sc.cam_rate_hz,
                                            sc.landmarks_per_frame, master);
  const FusedStream fused = fuse_stream(cfg, streams);

  NavState x0;
  x0.C = gt.samples.front().C;
  x0.v = gt.samples.front().v;
  x0.p = gt.samples.front().p;
  const FilterBelief b0 =
      make_initial_belief(x0, FilterInit::from_spec(cfg.fused_noise));
  const auto est = run_filter(b0, fused.samples, landmarks, sc.camera,
                              cfg.fused_noise, sc.trajectory.gravity);
  ErrorSeries errors = compute_errors(est, gt);

  RunSummary summary = summarize(errors);
  summary.config = to_string(setup);
  summary.seed = seed;
  summary.wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  if (out) {
    out->gt = gt;
    out->rig = rig;
    out->imu_streams = streams;
    out->vimu = cfg;
    out->fused = fused.samples;
    out->landmarks = landmarks;
    out->estimates = est;
    out->errors = std::move(errors);
  }
  return summary;
}

// Grid of runs, config-major. Cells are independent, so they fan out over a
// small worker pool; results land in preallocated slots and stay bitwise
// reproducible regardless of thread count.
struct ExperimentResult {
  std::vector<ImuSetup> configs;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<RunSummary>> runs;     // [config][seed]
  std::vector<std::vector<ErrorSeries>> series;  // kept only on request
};

inline ExperimentResult run_experiment(const Scenario& sc,
                                       const std::vector<ImuSetup>& configs,
                                       int n_seeds, bool keep_series = false,
                                       std::uint64_t seed_base = 1) {
  if (configs.empty()) throw ValidationError("run_experiment: no configs");
  if (n_seeds <= 0) throw ValidationError("run_experiment: need at least one seed");

  ExperimentResult res;
  res.configs = configs;
  for (int s = 0; s < n_seeds; ++s)
    res.seeds.push_back(seed_base + static_cast<std::uint64_t>(s));
  res.runs.assign(configs.size(), std::vector<RunSummary>(n_seeds));
  if (keep_series)
    res.series.assign(configs.size(), std::vector<ErrorSeries>(n_seeds));

  const std::size_t cells = configs.size() * static_cast<std::size_t>(n_seeds);
  const unsigned n_workers =
      std::max(1u, std::min(std::thread::hardware_concurrency(),
                            static_cast<unsigned>(cells)));

  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::string first_error;
  std::mutex error_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t cell = next.fetch_add(1);
      if (cell >= cells || failed.load()) return;
      const std::size_t ci = cell / static_cast<std::size_t>(n_seeds);
      const std::size_t si = cell % static_cast<std::size_t>(n_seeds);
      try {
        if (keep_series) {
          RunOutputs outputs;
          res.runs[ci][si] =
              run_single(sc, configs[ci], res.seeds[si], &outputs);
          res.series[ci][si] = std::move(outputs.errors);
        } else {
          res.runs[ci][si] = run_single(sc, configs[ci], res.seeds[si]);
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!failed.exchange(true)) first_error = e.what();
      }
    }
  };

  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failed.load()) throw std::runtime_error("run_experiment: " + first_error);
  return res;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// The orderings the accuracy-vs-count experiment is expected to show:
// strictly better with more sensors (S0 > S2 > S4 > S6 in mean MAE, both
// channels) and no asymmetric rig beating its symmetric counterpart. The
// bootstrap refits the orderings on seed resamples; `fraction` is the share
// of resamples where all of them hold at once.
struct TrendReport {
  bool rot_monotone = false;
  bool pos_monotone = false;
  bool rot_asym = false;
  bool pos_asym = false;
  double bootstrap_fraction = 0.0;
  bool pass = false;
};

namespace detail {

struct TrendMeans {
  double rot[7] = {0, 0, 0, 0, 0, 0, 0};
  double pos[7] = {0, 0, 0, 0, 0, 0, 0};
};

// Index by ImuSetup enum order: S0 S2 S4 S6 A2 A4 A6.
inline bool trend_orderings(const TrendMeans& m, bool* rot_mono, bool* pos_mono,
                            bool* rot_asym, bool* pos_asym) {
  const bool rm = m.rot[0] > m.rot[1] && m.rot[1] > m.rot[2] && m.rot[2] > m.rot[3];
  const bool pm = m.pos[0] > m.pos[1] && m.pos[1] > m.pos[2] && m.pos[2] > m.pos[3];
  const bool ra = m.rot[4] >= m.rot[1] && m.rot[5] >= m.rot[2] && m.rot[6] >= m.rot[3];
  const bool pa = m.pos[4] >= m.pos[1] && m.pos[5] >= m.pos[2] && m.pos[6] >= m.pos[3];
  if (rot_mono) *rot_mono = rm;
  if (pos_mono) *pos_mono = pm;
  if (rot_asym) *rot_asym = ra;
  if (pos_asym) *pos_asym = pa;
  return rm && pm && ra && pa;
}

}  // namespace detail

inline TrendReport assert_trends(const ExperimentResult& res, int n_boot = 1000,
                                 std::uint64_t boot_seed = 7) {
  constexpr ImuSetup all[7] = {ImuSetup::S0, ImuSetup::S2, ImuSetup::S4,
                               ImuSetup::S6, ImuSetup::A2, ImuSetup::A4,
                               ImuSetup::A6};
  int index[7];
  for (int i = 0; i < 7; ++i) {
    index[i] = -1;
    for (std::size_t c = 0; c < res.configs.size(); ++c)
      if (res.configs[c] == all[i]) index[i] = static_cast<int>(c);
    if (index[i] < 0)
      throw ValidationError(std::string("assert_trends: missing config ") +
                            to_string(all[i]));
  }
  const std::size_t n_seeds = res.seeds.size();
  if (n_seeds == 0) throw EmptySeries("assert_trends: no seeds");

  // Per-config per-seed MAE matrices.
  std::vector<std::vector<double>> rot(7), pos(7);
  for (int i = 0; i < 7; ++i) {
    for (std::size_t s = 0; s < n_seeds; ++s) {
      rot[i].push_back(res.runs[index[i]][s].rot_mae);
      pos[i].push_back(res.runs[index[i]][s].pos_mae);
    }
  }

  detail::TrendMeans means;
  for (int i = 0; i < 7; ++i) {
    means.rot[i] = mean_of(rot[i]);
    means.pos[i] = mean_of(pos[i]);
  }

  TrendReport report;
  detail::trend_orderings(means, &report.rot_monotone, &report.pos_monotone,
                          &report.rot_asym, &report.pos_asym);

  // Paired bootstrap over seeds: one resample reuses the same seed indices
  // for every config.
  RngStream rng = RngStream(boot_seed).substream("bootstrap");
  int hold = 0;
  for (int b = 0; b < n_boot; ++b) {
    detail::TrendMeans bm;
    for (std::size_t k = 0; k < n_seeds; ++k) {
      const auto pick = static_cast<std::size_t>(rng.next_u64() % n_seeds);
      for (int i = 0; i < 7; ++i) {
        bm.rot[i] += rot[i][pick];
        bm.pos[i] += pos[i][pick];
      }
    }
    for (int i = 0; i < 7; ++i) {
      bm.rot[i] /= static_cast<double>(n_seeds);
      bm.pos[i] /= static_cast<double>(n_seeds);
    }
    if (detail::trend_orderings(bm, nullptr, nullptr, nullptr, nullptr)) ++hold;
  }
  report.bootstrap_fraction = static_cast<double>(hold) / static_cast<double>(n_boot);
  report.pass = report.rot_monotone && report.pos_monotone && report.rot_asym &&
                report.pos_asym && report.bootstrap_fraction >= 0.9;
  return report;
}

}  // namespace vimu
