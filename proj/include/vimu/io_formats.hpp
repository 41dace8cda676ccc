#pragma once

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vimu/errors.hpp"
#include "vimu/evalkit.hpp"
#include "vimu/geometry.hpp"
#include "vimu/imu_model.hpp"
#include "vimu/liekf.hpp"
#include "vimu/sim_world.hpp"
#include "vimu/vimu_fusion.hpp"

namespace vimu {

// Rotations farther than this from orthonormal are rejected; anything beyond
// round-off but within tolerance is re-projected and noted.
inline constexpr double kRotationRejectTol = 1e-6;
inline constexpr double kRotationReprojectTol = 1e-12;

namespace detail {

// Shortest round-trippable decimal form.
inline std::string format_double(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline void write_atomic(const std::filesystem::path& path,
                         const std::string& content) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw ValidationError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline double parse_double(const std::string& path, int line_no,
                           const std::string& field) {
  const char* s = field.c_str();
  char* end = nullptr;
  const double x = std::strtod(s, &end);
  if (end == s || *end != '\0')
    throw ParseError(path, line_no, "not a number: '" + field + "'");
  return x;
}

inline long parse_int(const std::string& path, int line_no,
                      const std::string& field) {
  const char* s = field.c_str();
  char* end = nullptr;
  const long x = std::strtol(s, &end, 10);
  if (end == s || *end != '\0')
    throw ParseError(path, line_no, "not an integer: '" + field + "'");
  return x;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// ---- raw IMU streams ------------------------------------------------------
// CSV with header t_s,imu_id,gx,gy,gz,ax,ay,az. Rows are written in (t, id)
// order, one row per sample, shortest round-trippable doubles throughout, so
// a read/write cycle is byte-identical.

inline constexpr const char* kImuStreamHeader = "t_s,imu_id,gx,gy,gz,ax,ay,az";

inline void write_imu_streams(const std::string& path,
                              const std::map<int, std::vector<ImuSample>>& streams) {
  struct Row {
    double t;
    int id;
    const ImuSample* s;
  };
  std::vector<Row> rows;
  for (const auto& [id, stream] : streams)
    for (const ImuSample& s : stream) rows.push_back({s.t, id, &s});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
    return a.t != b.t ? a.t < b.t : a.id < b.id;
  });

  std::string out(kImuStreamHeader);
  out += '\n';
  for (const Row& r : rows) {
    out += detail::format_double(r.t);
    out += ',';
    out += std::to_string(r.id);
    for (int i = 0; i < 3; ++i) {
      out += ',';
      out += detail::format_double(r.s->gyro[i]);
    }
    for (int i = 0; i < 3; ++i) {
      out += ',';
      out += detail::format_double(r.s->accel[i]);
    }
    out += '\n';
  }
  detail::write_atomic(path, out);
}

inline std::map<int, std::vector<ImuSample>> read_imu_streams(
    const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line)) throw ParseError(path, 1, "empty file");
  ++line_no;
  if (line != kImuStreamHeader)
    throw ParseError(path, line_no, "expected header '" +
                                        std::string(kImuStreamHeader) + "'");

  std::map<int, std::vector<ImuSample>> streams;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != 8)
      throw ParseError(path, line_no, "expected 8 fields, got " +
                                          std::to_string(fields.size()));
    ImuSample s;
    s.t = detail::parse_double(path, line_no, fields[0]);
    const int id = static_cast<int>(detail::parse_int(path, line_no, fields[1]));
    for (int i = 0; i < 3; ++i)
      s.gyro[i] = detail::parse_double(path, line_no, fields[2 + i]);
    for (int i = 0; i < 3; ++i)
      s.accel[i] = detail::parse_double(path, line_no, fields[5 + i]);

    auto& stream = streams[id];
    if (!stream.empty() && !(s.t > stream.back().t))
      throw NonMonotonicTimestamps(path + ":" + std::to_string(line_no) +
                                   ": timestamps for imu " + std::to_string(id) +
                                   " not strictly increasing");
    stream.push_back(s);
  }
  return streams;
}

// ---- fused stream ----------------------------------------------------------

inline constexpr const char* kVimuStreamHeader = "t_s,gx,gy,gz,ax,ay,az";

inline void write_vimu_stream(const std::string& path,
                              const std::vector<VimuSample>& samples) {
  std::string out(kVimuStreamHeader);
  out += '\n';
  for (const VimuSample& s : samples) {
    out += detail::format_double(s.t);
    for (int i = 0; i < 3; ++i) {
      out += ',';
      out += detail::format_double(s.gyro[i]);
    }
    for (int i = 0; i < 3; ++i) {
      out += ',';
      out += detail::format_double(s.accel[i]);
    }
    out += '\n';
  }
  detail::write_atomic(path, out);
}

inline std::vector<VimuSample> read_vimu_stream(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line)) throw ParseError(path, 1, "empty file");
  ++line_no;
  if (line != kVimuStreamHeader)
    throw ParseError(path, line_no, "expected header '" +
                                        std::string(kVimuStreamHeader) + "'");

  std::vector<VimuSample> samples;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != 7)
      throw ParseError(path, line_no, "expected 7 fields, got " +
                                          std::to_string(fields.size()));
    VimuSample s;
    s.t = detail::parse_double(path, line_no, fields[0]);
    for (int i = 0; i < 3; ++i)
      s.gyro[i] = detail::parse_double(path, line_no, fields[1 + i]);
    for (int i = 0; i < 3; ++i)
      s.accel[i] = detail::parse_double(path, line_no, fields[4 + i]);
    if (!samples.empty() && !(s.t > samples.back().t))
      throw NonMonotonicTimestamps(path + ":" + std::to_string(line_no) +
                                   ": timestamps not strictly increasing");
    samples.push_back(s);
  }
  return samples;
}

// ---- ground truth, estimates, landmarks, errors ----------------------------

inline constexpr const char* kGroundTruthHeader =
    "t_s,c00,c01,c02,c10,c11,c12,c20,c21,c22,vx,vy,vz,px,py,pz,"
    "wx,wy,wz,ax,ay,az,alx,aly,alz";

inline void write_ground_truth(const std::string& path, const GroundTruth& gt) {
  std::string out(kGroundTruthHeader);
  out += '\n';
  for (const GroundTruthSample& s : gt.samples) {
    out += detail::format_double(s.t);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        out += ',';
        out += detail::format_double(s.C(r, c));
      }
    auto push3 = [&](const Vec3& v) {
      for (int i = 0; i < 3; ++i) {
        out += ',';
        out += detail::format_double(v[i]);
      }
    };
    push3(s.v);
    push3(s.p);
    push3(s.omega);
    push3(s.a_body);
    push3(s.alpha);
    out += '\n';
  }
  detail::write_atomic(path, out);
}

inline GroundTruth read_ground_truth(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::string line;
  int line_no = 0;

  if (!std::getline(in, line)) throw ParseError(path, 1, "empty file");
  ++line_no;
  if (line != kGroundTruthHeader)
    throw ParseError(path, line_no, "unexpected ground-truth header");

  GroundTruth gt;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != 25)
      throw ParseError(path, line_no, "expected 25 fields, got " +
                                          std::to_string(fields.size()));
    GroundTruthSample s;
    int k = 0;
    s.t = detail::parse_double(path, line_no, fields[k++]);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        s.C(r, c) = detail::parse_double(path, line_no, fields[k++]);
    auto pull3 = [&](Vec3& v) {
      for (int i = 0; i < 3; ++i)
        v[i] = detail::parse_double(path, line_no, fields[k++]);
    };
    pull3(s.v);
    pull3(s.p);
    pull3(s.omega);
    pull3(s.a_body);
    pull3(s.alpha);
    gt.samples.push_back(s);
  }
  if (gt.samples.size() >= 2)
    gt.rate_hz = 1.0 / (gt.samples[1].t - gt.samples[0].t);
  return gt;
}

inline constexpr const char* kEstimateHeader =
    "t_s,c00,c01,c02,c10,c11,c12,c20,c21,c22,vx,vy,vz,px,py,pz,"
    "bgx,bgy,bgz,bax,bay,baz";

inline void write_estimates(const std::string& path,
                            const std::vector<TimedState>& est) {
  std::string out(kEstimateHeader);
  out += '\n';
  for (const TimedState& e : est) {
    out += detail::format_double(e.t);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        out += ',';
        out += detail::format_double(e.state.C(r, c));
      }
    auto push3 = [&](const Vec3& v) {
      for (int i = 0; i < 3; ++i) {
        out += ',';
        out += detail::format_double(v[i]);
      }
    };
    push3(e.state.v);
    push3(e.state.p);
    push3(e.state.b_g);
    push3(e.state.b_a);
    out += '\n';
  }
  detail::write_atomic(path, out);
}

inline constexpr const char* kLandmarkHeader = "t_s,u_px,v_px,lx,ly,lz,sigma_px";

inline void write_landmarks(const std::string& path,
                            const std::vector<LandmarkObs>& obs) {
  std::string out(kLandmarkHeader);
  out += '\n';
  for (const LandmarkObs& o : obs) {
    out += detail::format_double(o.t);
    out += ',';
    out += detail::format_double(o.pixel.x());
    out += ',';
    out += detail::format_double(o.pixel.y());
    for (int i = 0; i < 3; ++i) {
      out += ',';
      out += detail::format_double(o.landmark[i]);
    }
    out += ',';
    out += detail::format_double(o.sigma_px);
    out += '\n';
  }
  detail::write_atomic(path, out);
}

inline constexpr const char* kErrorHeader = "t_s,rot_err_rad,pos_err_m";

inline void write_error_series(const std::string& path, const ErrorSeries& e) {
  std::string out(kErrorHeader);
  out += '\n';
  for (std::size_t i = 0; i < e.t.size(); ++i) {
    out += detail::format_double(e.t[i]);
    out += ',';
    out += detail::format_double(e.rot[i]);
    out += ',';
    out += detail::format_double(e.pos[i]);
    out += '\n';
  }
  detail::write_atomic(path, out);
}

// ---- rig configuration ------------------------------------------------------
// Line-oriented, '#' starts a comment. Per line:
//   imu <id> rot <9 row-major | 4 quaternion wxyz> pos <x y z>
//       [noise <sg sa sbg sba>] [rate <hz>]
//   camera <fx fy cx cy width height pixel_noise>
//   target <x y z>
// Positions are stored as written; rig_for_target() re-expresses them
// relative to the target (default: centroid of the sensor positions).

struct Rig {
  std::vector<RigImu> imus;
  CameraModel camera;
  bool has_camera = false;
  Vec3 target = Vec3::Zero();
  bool has_target = false;
  std::vector<std::string> notes;  // e.g. re-projected rotations
};

inline Vec3 resolved_target(const Rig& rig) {
  if (rig.has_target) return rig.target;
  Vec3 c = Vec3::Zero();
  for (const RigImu& imu : rig.imus) c += imu.extrinsics.r;
  return c / static_cast<double>(rig.imus.size());
}

inline std::vector<RigImu> rig_for_target(const Rig& rig) {
  const Vec3 target = resolved_target(rig);
  std::vector<RigImu> out = rig.imus;
  for (RigImu& imu : out) imu.extrinsics.r -= target;
  return out;
}

inline Rig load_rig(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  std::string raw;
  int line_no = 0;
  Rig rig;

  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    std::istringstream ls(hash == std::string::npos ? raw : raw.substr(0, hash));
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    auto need = [&](std::size_t i) -> const std::string& {
      if (i >= tok.size())
        throw ParseError(path, line_no, "unexpected end of line");
      return tok[i];
    };

    if (tok[0] == "imu") {
      RigImu imu;
      imu.id = static_cast<int>(detail::parse_int(path, line_no, need(1)));
      for (const RigImu& other : rig.imus)
        if (other.id == imu.id)
          throw ValidationError(path + ":" + std::to_string(line_no) +
                                ": duplicate imu id " + std::to_string(imu.id));
      std::size_t i = 2;
      bool have_rot = false, have_pos = false;
      while (i < tok.size()) {
        const std::string& key = tok[i];
        if (key == "rot") {
          // Peek: 9 numbers (matrix) or 4 (quaternion); decided by what
          // follows before the next keyword.
          std::size_t count = 0;
          while (i + 1 + count < tok.size() && tok[i + 1 + count] != "pos" &&
                 tok[i + 1 + count] != "noise" && tok[i + 1 + count] != "rate")
            ++count;
          if (count == 9) {
            Mat3 m;
            for (int r = 0; r < 3; ++r)
              for (int c = 0; c < 3; ++c)
                m(r, c) = detail::parse_double(path, line_no, need(i + 1 + 3 * r + c));
            imu.extrinsics.C = m;
          } else if (count == 4) {
            Eigen::Quaterniond q(detail::parse_double(path, line_no, need(i + 1)),
                                 detail::parse_double(path, line_no, need(i + 2)),
                                 detail::parse_double(path, line_no, need(i + 3)),
                                 detail::parse_double(path, line_no, need(i + 4)));
            if (q.norm() < 1e-12)
              throw ValidationError(path + ":" + std::to_string(line_no) +
                                    ": zero quaternion");
            q.normalize();
            imu.extrinsics.C = q.toRotationMatrix();
          } else {
            throw ParseError(path, line_no,
                             "rot expects 9 (matrix) or 4 (quaternion) numbers, got " +
                                 std::to_string(count));
          }
          const double dev =
              (imu.extrinsics.C * imu.extrinsics.C.transpose() - Mat3::Identity())
                  .norm();
          if (dev > kRotationRejectTol)
            throw ValidationError(path + ":" + std::to_string(line_no) +
                                  ": imu " + std::to_string(imu.id) +
                                  " rotation is not orthonormal (|RR^T - I| = " +
                                  std::to_string(dev) + ")");
          if (dev > kRotationReprojectTol) {
            const Mat3 fixed = project_to_rotation(imu.extrinsics.C);
            rig.notes.push_back("imu " + std::to_string(imu.id) +
                                ": rotation re-projected, correction " +
                                detail::format_double((fixed - imu.extrinsics.C).norm()));
            imu.extrinsics.C = fixed;
          }
          have_rot = true;
          i += 1 + count;
        } else if (key == "pos") {
          for (int a = 0; a < 3; ++a)
            imu.extrinsics.r[a] = detail::parse_double(path, line_no, need(i + 1 + a));
          have_pos = true;
          i += 4;
        } else if (key == "noise") {
          imu.noise.sigma_g = detail::parse_double(path, line_no, need(i + 1));
          imu.noise.sigma_a = detail::parse_double(path, line_no, need(i + 2));
          imu.noise.sigma_bg = detail::parse_double(path, line_no, need(i + 3));
          imu.noise.sigma_ba = detail::parse_double(path, line_no, need(i + 4));
          i += 5;
        } else if (key == "rate") {
          imu.noise.rate_hz = detail::parse_double(path, line_no, need(i + 1));
          i += 2;
        } else {
          throw ParseError(path, line_no, "unknown imu attribute '" + key + "'");
        }
      }
      if (!have_rot || !have_pos)
        throw ParseError(path, line_no, "imu line needs rot and pos");
      imu.noise.validate();
      rig.imus.push_back(imu);
    } else if (tok[0] == "camera") {
      if (tok.size() != 8)
        throw ParseError(path, line_no, "camera expects 7 numbers");
      rig.camera.fx = detail::parse_double(path, line_no, tok[1]);
      rig.camera.fy = detail::parse_double(path, line_no, tok[2]);
      rig.camera.cx = detail::parse_double(path, line_no, tok[3]);
      rig.camera.cy = detail::parse_double(path, line_no, tok[4]);
      rig.camera.width = static_cast<int>(detail::parse_int(path, line_no, tok[5]));
      rig.camera.height = static_cast<int>(detail::parse_int(path, line_no, tok[6]));
      rig.camera.pixel_noise = detail::parse_double(path, line_no, tok[7]);
      rig.has_camera = true;
    } else if (tok[0] == "target") {
      if (tok.size() != 4)
        throw ParseError(path, line_no, "target expects 3 numbers");
      for (int a = 0; a < 3; ++a)
        rig.target[a] = detail::parse_double(path, line_no, tok[1 + a]);
      rig.has_target = true;
    } else {
      throw ParseError(path, line_no, "unknown directive '" + tok[0] + "'");
    }
  }
  if (rig.imus.empty())
    throw ValidationError(path + ": rig has no imu lines");
  return rig;
}

inline void save_rig(const std::string& path, const Rig& rig) {
  std::string out;
  for (const RigImu& imu : rig.imus) {
    out += "imu " + std::to_string(imu.id) + " rot";
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        out += " " + detail::format_double(imu.extrinsics.C(r, c));
    out += " pos";
    for (int a = 0; a < 3; ++a)
      out += " " + detail::format_double(imu.extrinsics.r[a]);
    out += " noise " + detail::format_double(imu.noise.sigma_g) + " " +
           detail::format_double(imu.noise.sigma_a) + " " +
           detail::format_double(imu.noise.sigma_bg) + " " +
           detail::format_double(imu.noise.sigma_ba);
    out += " rate " + detail::format_double(imu.noise.rate_hz);
    out += '\n';
  }
  if (rig.has_camera) {
    out += "camera " + detail::format_double(rig.camera.fx) + " " +
           detail::format_double(rig.camera.fy) + " " +
           detail::format_double(rig.camera.cx) + " " +
           detail::format_double(rig.camera.cy) + " " +
           std::to_string(rig.camera.width) + " " +
           std::to_string(rig.camera.height) + " " +
           detail::format_double(rig.camera.pixel_noise);
    out += '\n';
  }
  if (rig.has_target) {
    out += "target " + detail::format_double(rig.target.x()) + " " +
           detail::format_double(rig.target.y()) + " " +
           detail::format_double(rig.target.z());
    out += '\n';
  }
  detail::write_atomic(path, out);
}

// ---- scenario ---------------------------------------------------------------
// Line-oriented, '#' comments. Keys: duration, imu_rate, cam_rate, gravity,
// landmarks, camera, noise (per-sample sg sa sbg sba), rig_seed, and
// omega_sin / accel_sin <axis> <amplitude> <freq_hz> <phase>.

inline Scenario load_scenario(const std::string& path) {
  std::istringstream in(detail::read_file(path));
  Scenario sc = default_scenario();
  bool omega_cleared = false, accel_cleared = false;
  std::string raw;
  int line_no = 0;

  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    std::istringstream ls(hash == std::string::npos ? raw : raw.substr(0, hash));
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    auto want = [&](std::size_t n) {
      if (tok.size() != n + 1)
        throw ParseError(path, line_no, tok[0] + " expects " + std::to_string(n) +
                                            " values");
    };

    if (tok[0] == "duration") {
      want(1);
      sc.trajectory.duration_s = detail::parse_double(path, line_no, tok[1]);
    } else if (tok[0] == "imu_rate") {
      want(1);
      sc.imu_rate_hz = detail::parse_double(path, line_no, tok[1]);
      sc.imu_noise.rate_hz = sc.imu_rate_hz;
    } else if (tok[0] == "cam_rate") {
      want(1);
      sc.cam_rate_hz = detail::parse_double(path, line_no, tok[1]);
    } else if (tok[0] == "gravity") {
      want(3);
      for (int a = 0; a < 3; ++a)
        sc.trajectory.gravity[a] = detail::parse_double(path, line_no, tok[1 + a]);
    } else if (tok[0] == "landmarks") {
      want(1);
      sc.landmarks_per_frame =
          static_cast<int>(detail::parse_int(path, line_no, tok[1]));
    } else if (tok[0] == "camera") {
      want(7);
      sc.camera.fx = detail::parse_double(path, line_no, tok[1]);
      sc.camera.fy = detail::parse_double(path, line_no, tok[2]);
      sc.camera.cx = detail::parse_double(path, line_no, tok[3]);
      sc.camera.cy = detail::parse_double(path, line_no, tok[4]);
      sc.camera.width = static_cast<int>(detail::parse_int(path, line_no, tok[5]));
      sc.camera.height = static_cast<int>(detail::parse_int(path, line_no, tok[6]));
      sc.camera.pixel_noise = detail::parse_double(path, line_no, tok[7]);
    } else if (tok[0] == "noise") {
      want(4);
      sc.imu_noise.sigma_g = detail::parse_double(path, line_no, tok[1]);
      sc.imu_noise.sigma_a = detail::parse_double(path, line_no, tok[2]);
      sc.imu_noise.sigma_bg = detail::parse_double(path, line_no, tok[3]);
      sc.imu_noise.sigma_ba = detail::parse_double(path, line_no, tok[4]);
    } else if (tok[0] == "rig_seed") {
      want(1);
      sc.rig_seed =
          static_cast<std::uint64_t>(detail::parse_int(path, line_no, tok[1]));
    } else if (tok[0] == "omega_sin" || tok[0] == "accel_sin") {
      want(4);
      int axis = -1;
      if (tok[1] == "x") axis = 0;
      else if (tok[1] == "y") axis = 1;
      else if (tok[1] == "z") axis = 2;
      else throw ParseError(path, line_no, "axis must be x, y, or z");
      Sinusoid s;
      s.amplitude = detail::parse_double(path, line_no, tok[2]);
      s.freq_hz = detail::parse_double(path, line_no, tok[3]);
      s.phase = detail::parse_double(path, line_no, tok[4]);
      // The first sinusoid line of each kind replaces the defaults.
      if (tok[0] == "omega_sin") {
        if (!omega_cleared) {
          for (auto& bank : sc.trajectory.omega_bank) bank.clear();
          omega_cleared = true;
        }
        sc.trajectory.omega_bank[axis].push_back(s);
      } else {
        if (!accel_cleared) {
          for (auto& bank : sc.trajectory.accel_bank) bank.clear();
          accel_cleared = true;
        }
        sc.trajectory.accel_bank[axis].push_back(s);
      }
    } else {
      throw ParseError(path, line_no, "unknown directive '" + tok[0] + "'");
    }
  }
  sc.imu_noise.validate();
  return sc;
}

// ---- evaluation report ------------------------------------------------------

struct ReportEntry {
  std::string config;
  std::vector<std::uint64_t> seeds;
  double rot_mae = 0.0;
  double rot_rmse = 0.0;
  double pos_mae = 0.0;
  double pos_rmse = 0.0;
  NoiseSpec fused_sigma;
  std::vector<double> weights_gyro;
  std::vector<double> weights_accel;
};

inline ReportEntry make_report_entry(const std::string& config,
                                     const std::vector<RunSummary>& runs,
                                     const VimuConfig& cfg,
                                     const std::vector<std::uint64_t>& seeds) {
  ReportEntry e;
  e.config = config;
  e.seeds = seeds;
  for (const RunSummary& r : runs) {
    e.rot_mae += r.rot_mae;
    e.rot_rmse += r.rot_rmse;
    e.pos_mae += r.pos_mae;
    e.pos_rmse += r.pos_rmse;
  }
  const double n = static_cast<double>(runs.size());
  e.rot_mae /= n;
  e.rot_rmse /= n;
  e.pos_mae /= n;
  e.pos_rmse /= n;
  e.fused_sigma = cfg.fused_noise;
  e.weights_gyro = cfg.w_gyro;
  e.weights_accel = cfg.w_accel;
  return e;
}

namespace detail {

inline nlohmann::json to_json(const ReportEntry& e) {
  nlohmann::json j;
  j["config"] = e.config;
  j["seeds"] = e.seeds;
  j["rot_mae"] = e.rot_mae;
  j["rot_rmse"] = e.rot_rmse;
  j["pos_mae"] = e.pos_mae;
  j["pos_rmse"] = e.pos_rmse;
  j["fused_sigma"] = {{"gyro", e.fused_sigma.sigma_g},
                      {"accel", e.fused_sigma.sigma_a},
                      {"gyro_walk", e.fused_sigma.sigma_bg},
                      {"accel_walk", e.fused_sigma.sigma_ba},
                      {"rate_hz", e.fused_sigma.rate_hz}};
  j["weights_gyro"] = e.weights_gyro;
  j["weights_accel"] = e.weights_accel;
  return j;
}

inline ReportEntry entry_from_json(const nlohmann::json& j) {
  ReportEntry e;
  e.config = j.at("config").get<std::string>();
  e.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  e.rot_mae = j.at("rot_mae").get<double>();
  e.rot_rmse = j.at("rot_rmse").get<double>();
  e.pos_mae = j.at("pos_mae").get<double>();
  e.pos_rmse = j.at("pos_rmse").get<double>();
  const auto& f = j.at("fused_sigma");
  e.fused_sigma.sigma_g = f.at("gyro").get<double>();
  e.fused_sigma.sigma_a = f.at("accel").get<double>();
  e.fused_sigma.sigma_bg = f.at("gyro_walk").get<double>();
  e.fused_sigma.sigma_ba = f.at("accel_walk").get<double>();
  e.fused_sigma.rate_hz = f.at("rate_hz").get<double>();
  e.weights_gyro = j.at("weights_gyro").get<std::vector<double>>();
  e.weights_accel = j.at("weights_accel").get<std::vector<double>>();
  return e;
}

}  // namespace detail

inline void write_report_json(const std::string& path,
                              const std::vector<ReportEntry>& entries,
                              const TrendReport* trends = nullptr) {
  nlohmann::json j;
  j["configs"] = nlohmann::json::array();
  for (const ReportEntry& e : entries) j["configs"].push_back(detail::to_json(e));
  if (trends) {
    j["trends"] = {{"rot_monotone", trends->rot_monotone},
                   {"pos_monotone", trends->pos_monotone},
                   {"rot_asym", trends->rot_asym},
                   {"pos_asym", trends->pos_asym},
                   {"bootstrap_fraction", trends->bootstrap_fraction},
                   {"pass", trends->pass}};
  }
  detail::write_atomic(path, j.dump(2) + "\n");
}

inline std::vector<ReportEntry> read_report_json(const std::string& path,
                                                 TrendReport* trends = nullptr) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path, 0, e.what());
  }
  std::vector<ReportEntry> entries;
  for (const auto& je : j.at("configs")) entries.push_back(detail::entry_from_json(je));
  if (trends && j.contains("trends")) {
    const auto& jt = j.at("trends");
    trends->rot_monotone = jt.at("rot_monotone").get<bool>();
    trends->pos_monotone = jt.at("pos_monotone").get<bool>();
    trends->rot_asym = jt.at("rot_asym").get<bool>();
    trends->pos_asym = jt.at("pos_asym").get<bool>();
    trends->bootstrap_fraction = jt.at("bootstrap_fraction").get<double>();
    trends->pass = jt.at("pass").get<bool>();
  }
  return entries;
}

}  // namespace vimu
