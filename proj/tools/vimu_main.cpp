#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vimu/evalkit.hpp"
#include "vimu/io_formats.hpp"

namespace fs = std::filesystem;
using namespace vimu;

namespace {

struct Options {
  std::string scenario_path;
  std::string config_path;
  std::string in_path;
  std::string out_path;
  std::string imus = "S2";
  std::string target;
  std::uint64_t seed = 1;
  std::uint64_t seed_base = 1;
  int seeds = 20;
  int trials = 100;
  int bootstrap = 1000;
  double tol = 1e-5;
  bool noise_only = false;
  bool check_trends = false;
};

Vec3 parse_xyz(const std::string& s) {
  const auto fields = detail::split_csv(s);
  if (fields.size() != 3)
    throw ValidationError("expected x,y,z, got '" + s + "'");
  Vec3 v;
  for (int a = 0; a < 3; ++a) v[a] = detail::parse_double("<arg>", 0, fields[a]);
  return v;
}

Scenario scenario_from(const Options& opt) {
  return opt.scenario_path.empty() ? default_scenario()
                                   : load_scenario(opt.scenario_path);
}

ImuSetup setup_from(const std::string& name) {
  ImuSetup setup;
  if (!parse_imu_setup(name, &setup))
    throw ValidationError("unknown rig name '" + name +
                          "' (expected S0 S2 S4 S6 A2 A4 A6)");
  return setup;
}

// The solver works in target-relative coordinates, so its nearest feasible
// point comes back relative too. Shift it into the rig's frame for display.
template <typename F>
auto solving_for(const Vec3& target, F&& f) {
  try {
    return f();
  } catch (const InfeasiblePlacement& e) {
    throw InfeasiblePlacement(e.what(), target + e.nearest_placement);
  }
}

void print_weights(const char* label, const std::vector<double>& w) {
  std::printf("%s:", label);
  for (double x : w) std::printf(" %s", detail::format_double(x).c_str());
  std::printf("\n");
}

int cmd_solve_weights(const Options& opt) {
  if (opt.config_path.empty())
    throw ValidationError("solve-weights: --config is required");
  Rig rig = load_rig(opt.config_path);
  if (!opt.target.empty()) {
    rig.target = parse_xyz(opt.target);
    rig.has_target = true;
  }
  for (const std::string& note : rig.notes)
    std::fprintf(stderr, "note: %s\n", note.c_str());
  const Vec3 target = resolved_target(rig);
  const std::vector<RigImu> imus = rig_for_target(rig);

  VimuConfig cfg;
  if (opt.noise_only) {
    std::vector<double> sg, sa;
    std::vector<Vec3> pos;
    std::vector<NoiseSpec> specs;
    for (const RigImu& imu : imus) {
      cfg.extrinsics.push_back(imu.extrinsics);
      sg.push_back(imu.noise.sigma_g);
      sa.push_back(imu.noise.sigma_a);
      pos.push_back(imu.extrinsics.r);
      specs.push_back(imu.noise);
    }
    cfg.w_gyro = solve_noise_only_weights(sg).weights;
    cfg.w_accel = solve_noise_only_weights(sa, &pos).weights;
    cfg.fused_noise = fused_bias_spec(cfg, specs);
  } else {
    cfg = solving_for(target, [&] { return make_vimu_config(imus); });
  }

  std::vector<Vec3> pos;
  for (const RigImu& imu : imus) pos.push_back(imu.extrinsics.r);
  const WeightDiagnostics diag = weight_diagnostics(cfg.w_accel);

  std::printf("imus: %zu\n", imus.size());
  print_weights("gyro_weights", cfg.w_gyro);
  print_weights("accel_weights", cfg.w_accel);
  std::printf("accel_placement_residual: %s\n",
              detail::format_double(placement_of(cfg.w_accel, pos).norm()).c_str());
  std::printf("accel_sum_sq: %s\n", detail::format_double(diag.sum_sq).c_str());
  std::printf("amplifies: %s\n", diag.amplifies ? "yes" : "no");
  std::printf("fused_sigma_gyro: %s\n",
              detail::format_double(cfg.fused_noise.sigma_g).c_str());
  std::printf("fused_sigma_accel: %s\n",
              detail::format_double(cfg.fused_noise.sigma_a).c_str());
  return 0;
}

int cmd_synth(const Options& opt) {
  if (opt.out_path.empty()) throw ValidationError("synth: --out is required");
  const Scenario sc = scenario_from(opt);

  std::vector<RigImu> rig;
  CameraModel cam = sc.camera;
  if (!opt.config_path.empty()) {
    const Rig file = load_rig(opt.config_path);
    rig = rig_for_target(file);
    if (file.has_camera) cam = file.camera;
  } else {
    rig = make_imu_rig(setup_from(opt.imus), sc.imu_noise, sc.rig_seed);
  }

  const GroundTruth gt = generate_ground_truth(sc.trajectory, sc.imu_rate_hz);
  const RngStream master(opt.seed);
  const auto streams = synth_multi_imu(gt, rig, master);
  const auto landmarks = synth_landmark_obs(gt, cam, sc.cam_rate_hz,
                                            sc.landmarks_per_frame, master);

  const fs::path dir = opt.out_path;
  write_ground_truth((dir / "gt.csv").string(), gt);
  std::map<int, std::vector<ImuSample>> by_id;
  for (std::size_t j = 0; j < rig.size(); ++j) by_id[rig[j].id] = streams[j];
  write_imu_streams((dir / "imu.csv").string(), by_id);
  write_landmarks((dir / "landmarks.csv").string(), landmarks);

  // Streams above were generated for target-relative positions, so the rig
  // written next to them pins the target at the origin.
  Rig resolved;
  resolved.imus = rig;
  resolved.camera = cam;
  resolved.has_camera = true;
  resolved.has_target = true;
  save_rig((dir / "rig.txt").string(), resolved);

  for (const char* name : {"gt.csv", "imu.csv", "landmarks.csv", "rig.txt"})
    std::printf("wrote %s\n", (dir / name).string().c_str());
  return 0;
}

int cmd_fuse(const Options& opt) {
  if (opt.config_path.empty()) throw ValidationError("fuse: --config is required");
  if (opt.in_path.empty()) throw ValidationError("fuse: --in is required");
  if (opt.out_path.empty()) throw ValidationError("fuse: --out is required");

  const Rig file = load_rig(opt.config_path);
  const std::vector<RigImu> rig = rig_for_target(file);
  const auto by_id = read_imu_streams(opt.in_path);

  if (by_id.size() != rig.size())
    throw ValidationError("fuse: " + opt.in_path + " has " +
                          std::to_string(by_id.size()) + " streams, rig has " +
                          std::to_string(rig.size()) + " imus");
  std::vector<std::vector<ImuSample>> streams;
  for (const RigImu& imu : rig) {
    const auto it = by_id.find(imu.id);
    if (it == by_id.end())
      throw ValidationError("fuse: no stream for imu " + std::to_string(imu.id));
    streams.push_back(it->second);
  }

  const VimuConfig cfg =
      solving_for(resolved_target(file), [&] { return make_vimu_config(rig); });
  const FusedStream fused = fuse_stream(cfg, streams);
  write_vimu_stream(opt.out_path, fused.samples);
  std::fprintf(stderr, "in=%zu out=%zu dropped=%zu\n", streams.size(),
               fused.samples.size(), fused.dropped_ticks);
  return 0;
}

int cmd_simulate(const Options& opt) {
  if (opt.out_path.empty()) throw ValidationError("simulate: --out is required");
  if (opt.seeds <= 0) throw ValidationError("simulate: --seeds must be positive");
  const Scenario sc = scenario_from(opt);
  const ImuSetup setup = setup_from(opt.imus);

  const fs::path dir = opt.out_path;
  std::vector<RunSummary> runs;
  std::vector<std::uint64_t> seeds;
  VimuConfig cfg;
  for (int s = 0; s < opt.seeds; ++s) {
    const std::uint64_t seed = opt.seed_base + static_cast<std::uint64_t>(s);
    RunOutputs out;
    runs.push_back(run_single(sc, setup, seed, &out));
    seeds.push_back(seed);
    cfg = out.vimu;

    if (s == 0) write_ground_truth((dir / "gt.csv").string(), out.gt);
    const fs::path sd = dir / ("seed_" + std::to_string(seed));
    std::map<int, std::vector<ImuSample>> by_id;
    for (std::size_t j = 0; j < out.rig.size(); ++j)
      by_id[out.rig[j].id] = out.imu_streams[j];
    write_imu_streams((sd / "imu.csv").string(), by_id);
    write_vimu_stream((sd / "vimu.csv").string(), out.fused);
    write_landmarks((sd / "landmarks.csv").string(), out.landmarks);
    write_estimates((sd / "est.csv").string(), out.estimates);
    write_error_series((sd / "errors.csv").string(), out.errors);

    std::printf("%s seed %llu rot_mae %s pos_mae %s\n", to_string(setup),
                static_cast<unsigned long long>(seed),
                detail::format_double(runs.back().rot_mae).c_str(),
                detail::format_double(runs.back().pos_mae).c_str());
  }

  const ReportEntry entry = make_report_entry(to_string(setup), runs, cfg, seeds);
  write_report_json((dir / "report.json").string(), {entry});
  std::printf("wrote %s\n", (dir / "report.json").string().c_str());
  return 0;
}

int cmd_evaluate(const Options& opt) {
  if (opt.out_path.empty()) throw ValidationError("evaluate: --out is required");
  if (opt.seeds <= 0) throw ValidationError("evaluate: --seeds must be positive");
  if (opt.bootstrap <= 0)
    throw ValidationError("evaluate: --bootstrap must be positive");
  const Scenario sc = scenario_from(opt);

  const std::vector<ImuSetup> configs = {ImuSetup::S0, ImuSetup::S2,
                                         ImuSetup::S4, ImuSetup::S6,
                                         ImuSetup::A2, ImuSetup::A4,
                                         ImuSetup::A6};
  const ExperimentResult res =
      run_experiment(sc, configs, opt.seeds, false, opt.seed_base);

  std::vector<ReportEntry> entries;
  for (std::size_t c = 0; c < configs.size(); ++c) {
    const auto rig = make_imu_rig(configs[c], sc.imu_noise, sc.rig_seed);
    entries.push_back(make_report_entry(to_string(configs[c]), res.runs[c],
                                        make_vimu_config(rig), res.seeds));
    std::printf("%s rot_mae %s pos_mae %s\n", to_string(configs[c]),
                detail::format_double(entries.back().rot_mae).c_str(),
                detail::format_double(entries.back().pos_mae).c_str());
  }

  const TrendReport trends = assert_trends(res, opt.bootstrap);
  write_report_json(opt.out_path, entries, &trends);
  std::printf("trends pass=%d bootstrap=%s\n", trends.pass ? 1 : 0,
              detail::format_double(trends.bootstrap_fraction).c_str());
  std::printf("wrote %s\n", opt.out_path.c_str());

  if (opt.check_trends && !trends.pass) {
    std::fprintf(stderr, "trend assertion failed\n");
    return 2;
  }
  return 0;
}

int cmd_check_jacobians(const Options& opt) {
  if (opt.trials <= 0)
    throw ValidationError("check-jacobians: --trials must be positive");
  RngStream rng(opt.seed);
  const CameraModel cam;
  const Vec3 gravity(0.0, 0.0, 9.81);

  double worst_f = 0.0, worst_h = 0.0;
  for (int trial = 0; trial < opt.trials; ++trial) {
    FilterBelief b;
    b.state.C = random_rotation(rng);
    b.state.v = gaussian_vec3(rng);
    b.state.p = 3.0 * gaussian_vec3(rng);
    b.state.b_g = 0.01 * gaussian_vec3(rng);
    b.state.b_a = 0.1 * gaussian_vec3(rng);
    VimuSample mid;
    mid.gyro = 2.0 * gaussian_vec3(rng);
    mid.accel = 5.0 * gaussian_vec3(rng);

    std::vector<LandmarkObs> obs(3);
    for (LandmarkObs& o : obs) {
      const Vec3 pc = cam.back_project(
          {rng.uniform(40.0, 600.0), rng.uniform(40.0, 440.0)},
          rng.uniform(2.0, 10.0));
      o.landmark = b.state.C * pc + b.state.p;
      o.sigma_px = 1.0;
    }

    const JacobianReport rep = jacobian_check(b, mid, 0.01, obs, cam, gravity);
    worst_f = std::max(worst_f, rep.max_rel_propagation);
    worst_h = std::max(worst_h, rep.max_rel_measurement);
  }

  std::printf("trials: %d\n", opt.trials);
  std::printf("propagation: %s\n", detail::format_double(worst_f).c_str());
  std::printf("measurement: %s\n", detail::format_double(worst_h).c_str());
  std::printf("tolerance: %s\n", detail::format_double(opt.tol).c_str());
  if (worst_f > opt.tol || worst_h > opt.tol) {
    std::fprintf(stderr, "jacobian tolerance exceeded\n");
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"virtual inertial sensor toolkit", "vimu"};
  app.require_subcommand(1);

  Options opt;
  app.add_option("--scenario", opt.scenario_path, "scenario file");
  app.add_option("--config", opt.config_path, "rig file");
  app.add_option("--out", opt.out_path, "output file or directory");
  app.add_option("--seed", opt.seed, "seed for a single run")
      ->default_val(std::uint64_t{1});
  app.add_option("--seed-base", opt.seed_base, "first seed of a sweep")
      ->default_val(std::uint64_t{1});
  app.add_option("--imus", opt.imus, "built-in rig: S0 S2 S4 S6 A2 A4 A6")
      ->default_val("S2");

  CLI::App* sw = app.add_subcommand(
      "solve-weights", "fusion weights and fused noise for a rig");
  sw->add_option("--target", opt.target,
                 "x,y,z placement target (default: rig target or centroid)");
  sw->add_flag("--noise-only", opt.noise_only,
               "minimum-variance weights without the placement constraint");

  CLI::App* synth = app.add_subcommand(
      "synth", "synthesize truth, imu streams, and landmarks");

  CLI::App* fuse =
      app.add_subcommand("fuse", "fuse recorded imu streams into one stream");
  fuse->add_option("--in", opt.in_path, "imu stream csv");

  CLI::App* simulate = app.add_subcommand(
      "simulate", "full pipeline runs for one rig, artifacts per seed");
  simulate->add_option("--seeds", opt.seeds, "number of seeds")->default_val(1);

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "accuracy-vs-count experiment over all built-in rigs");
  evaluate->add_option("--seeds", opt.seeds, "seeds per rig")->default_val(20);
  evaluate->add_option("--bootstrap", opt.bootstrap, "bootstrap resamples")
      ->default_val(1000);
  evaluate->add_flag("--assert-trends", opt.check_trends,
                     "exit 2 unless the expected orderings hold");

  CLI::App* check = app.add_subcommand(
      "check-jacobians", "filter jacobians against finite differences");
  check->add_option("--trials", opt.trials, "random states to test")
      ->default_val(100);
  check->add_option("--tol", opt.tol, "max relative deviation")
      ->default_val(1e-5);

  for (CLI::App* sub : {sw, synth, fuse, simulate, evaluate, check})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (app.got_subcommand(sw)) return cmd_solve_weights(opt);
    if (app.got_subcommand(synth)) return cmd_synth(opt);
    if (app.got_subcommand(fuse)) return cmd_fuse(opt);
    if (app.got_subcommand(simulate)) return cmd_simulate(opt);
    if (app.got_subcommand(evaluate)) return cmd_evaluate(opt);
    if (app.got_subcommand(check)) return cmd_check_jacobians(opt);
  } catch (const InfeasiblePlacement& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    std::fprintf(stderr, "nearest feasible target: %s %s %s\n",
                 detail::format_double(e.nearest_placement.x()).c_str(),
                 detail::format_double(e.nearest_placement.y()).c_str(),
                 detail::format_double(e.nearest_placement.z()).c_str());
    return 2;
  } catch (const EmptyOverlap& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DegenerateNormalization& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
