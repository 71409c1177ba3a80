// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#include "curvesplat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "curvesplat/fitting.hpp"
#include "curvesplat/metrics.hpp"
#include "curvesplat/optim.hpp"
#include "curvesplat/rasterizer.hpp"
#include "json.hpp"

namespace curvesplat {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kManifestVersion = 1;

// Platform-independent draws: the raw 64-bit stream is specified exactly,
// unlike the std distributions.
double unit_rand(std::mt19937_64& rng) { return (double)(rng() >> 11) * 0x1.0p-53; }
double rrange(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_rand(rng);
}
double gauss(std::mt19937_64& rng) {
  const double u = ((double)(rng() >> 11) + 0.5) * 0x1.0p-53;  // (0,1)
  const double v = unit_rand(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * kPi * v);
}
Quat rand_quat(std::mt19937_64& rng) {
  Quat q{rrange(rng, -1, 1), rrange(rng, -1, 1), rrange(rng, -1, 1),
         rrange(rng, -1, 1)};
  const double n = q.norm();
  if (n < 1e-9) return Quat{1, 0, 0, 0};
  return Quat{q.w / n, q.x / n, q.y / n, q.z / n};
}

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }
Vec3 vec3_from(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) {
    fail(ErrorCode::InvalidArgument,
         std::string(what) + " must be a 3-element array");
  }
  return Vec3{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const char* what) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || it.key() == k;
    if (!ok) {
      fail(ErrorCode::InvalidArgument,
           std::string("unknown key '") + it.key() + "' in " + what);
    }
  }
}

// Uniform-arclength samples along the piecewise-linear path through the
// waypoints. A zero-length path collapses to the first waypoint.
std::vector<Vec3> densify_polyline(const std::vector<Vec3>& wp, int samples) {
  std::vector<double> cum(wp.size(), 0.0);
  for (size_t i = 1; i < wp.size(); ++i) {
    cum[i] = cum[i - 1] + (wp[i] - wp[i - 1]).norm();
  }
  const double total = cum.back();
  std::vector<Vec3> out((size_t)samples);
  for (int s = 0; s < samples; ++s) {
    if (total < 1e-12) {
      out[(size_t)s] = wp.front();
      continue;
    }
    const double d = total * (double)s / (double)(samples - 1);
    size_t seg = 1;
    while (seg + 1 < wp.size() && cum[seg] < d) ++seg;
    const double len = cum[seg] - cum[seg - 1];
    const double f = len > 0.0 ? (d - cum[seg - 1]) / len : 0.0;
    out[(size_t)s] = wp[seg - 1] + (wp[seg] - wp[seg - 1]) * f;
  }
  return out;
}

Vec3 lerp_path(const std::vector<Vec3>& wp, double s) {
  if (wp.size() == 1) return wp.front();
  const double x = std::clamp(s, 0.0, 1.0) * (double)(wp.size() - 1);
  const size_t seg = std::min((size_t)x, wp.size() - 2);
  return wp[seg] + (wp[seg + 1] - wp[seg]) * (x - (double)seg);
}

BezierCurve identity_time_curve() {
  return make_curve1({0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0});
}

ColorBlock rgb_block(double r, double g, double b) {
  ColorBlock c{};
  c[0] = r;
  c[1] = g;
  c[2] = b;
  return c;
}

std::string frame_name(const char* stem, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", stem, i, ext);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create directory '" + dir + "'");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot write '" + path + "'");
  return f;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void SyntheticSceneSpec::validate() const {
  auto bad = [](const std::string& m) {
    fail(ErrorCode::InvalidArgument, "scene spec: " + m);
  };
  if (ground_half_extent <= 0) bad("ground_half_extent must be positive");
  if (ground_count <= 0) bad("ground_count must be positive");
  if (box_count < 0) bad("box_count must be non-negative");
  if (box_count > 0 &&
      (box_half.x <= 0 || box_half.y <= 0 || box_half.z <= 0)) {
    bad("box_half must be positive");
  }
  if (box_count > 0 && box_gaussians <= 0) bad("box_gaussians must be positive");
  if (static_scale <= 0) bad("static_scale must be positive");
  if (sky_resolution < 1) bad("sky_resolution must be at least 1");
  if (frame_count < 8) bad("frame_count must be at least 8");
  if (frame_rate <= 0) bad("frame_rate must be positive");
  if (annotation_noise < 0) bad("annotation_noise must be non-negative");
  if (image_noise < 0) bad("image_noise must be non-negative");
  if (camera.width <= 0 || camera.height <= 0) bad("camera size must be positive");
  if (camera.fx <= 0 || camera.fy <= 0) bad("camera focal must be positive");
  if (camera.eye_waypoints.empty()) bad("camera needs at least one waypoint");
  for (size_t k = 0; k < objects.size(); ++k) {
    const ObjectSpec& o = objects[k];
    const std::string tag = "object " + std::to_string(k + 1) + ": ";
    if (o.waypoints.size() < 2) bad(tag + "needs at least 2 waypoints");
    if (o.cluster_count < 1) bad(tag + "cluster_count must be positive");
    if (o.half_extent.x <= 0 || o.half_extent.y <= 0 || o.half_extent.z <= 0) {
      bad(tag + "half_extent must be positive");
    }
    if (o.gaussian_scale <= 0) bad(tag + "gaussian_scale must be positive");
    if (!o.speed_knots.empty()) {
      if (o.speed_knots.size() < 2) bad(tag + "speed_knots needs >= 2 values");
      if (o.speed_knots.front() != 0.0 || o.speed_knots.back() != 1.0) {
        bad(tag + "speed_knots must start at 0 and end at 1");
      }
      for (size_t i = 1; i < o.speed_knots.size(); ++i) {
        if (o.speed_knots[i] < o.speed_knots[i - 1]) {
          bad(tag + "speed_knots must be non-decreasing");
        }
      }
    }
  }
}

std::string spec_to_json(const SyntheticSceneSpec& spec) {
  json j;
  j["ground_half_extent"] = spec.ground_half_extent;
  j["ground_count"] = spec.ground_count;
  j["box_count"] = spec.box_count;
  j["box_half"] = vec3_json(spec.box_half);
  j["box_gaussians"] = spec.box_gaussians;
  j["static_scale"] = spec.static_scale;
  j["sky_resolution"] = spec.sky_resolution;
  j["frame_count"] = spec.frame_count;
  j["frame_rate"] = spec.frame_rate;
  j["annotation_noise"] = spec.annotation_noise;
  j["image_noise"] = spec.image_noise;
  json cam;
  cam["width"] = spec.camera.width;
  cam["height"] = spec.camera.height;
  cam["fx"] = spec.camera.fx;
  cam["fy"] = spec.camera.fy;
  cam["eye_waypoints"] = json::array();
  for (const Vec3& e : spec.camera.eye_waypoints) {
    cam["eye_waypoints"].push_back(vec3_json(e));
  }
  j["camera"] = cam;
  j["objects"] = json::array();
  for (const ObjectSpec& o : spec.objects) {
    json jo;
    jo["waypoints"] = json::array();
    for (const Vec3& w : o.waypoints) jo["waypoints"].push_back(vec3_json(w));
    if (!o.speed_knots.empty()) jo["speed_knots"] = o.speed_knots;
    jo["cluster_count"] = o.cluster_count;
    jo["half_extent"] = vec3_json(o.half_extent);
    jo["gaussian_scale"] = o.gaussian_scale;
    jo["base_color"] = vec3_json(o.base_color);
    j["objects"].push_back(jo);
  }
  return j.dump(2) + "\n";
}

SyntheticSceneSpec spec_from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    fail(ErrorCode::InvalidArgument, "scene spec is not valid JSON");
  }
  check_keys(j,
             {"ground_half_extent", "ground_count", "box_count", "box_half",
              "box_gaussians", "static_scale", "sky_resolution", "frame_count",
              "frame_rate", "annotation_noise", "image_noise", "camera",
              "objects"},
             "scene spec");
  SyntheticSceneSpec s;
  if (j.contains("ground_half_extent")) s.ground_half_extent = j["ground_half_extent"];
  if (j.contains("ground_count")) s.ground_count = j["ground_count"];
  if (j.contains("box_count")) s.box_count = j["box_count"];
  if (j.contains("box_half")) s.box_half = vec3_from(j["box_half"], "box_half");
  if (j.contains("box_gaussians")) s.box_gaussians = j["box_gaussians"];
  if (j.contains("static_scale")) s.static_scale = j["static_scale"];
  if (j.contains("sky_resolution")) s.sky_resolution = j["sky_resolution"];
  if (j.contains("frame_count")) s.frame_count = j["frame_count"];
  if (j.contains("frame_rate")) s.frame_rate = j["frame_rate"];
  if (j.contains("annotation_noise")) s.annotation_noise = j["annotation_noise"];
  if (j.contains("image_noise")) s.image_noise = j["image_noise"];
  if (j.contains("camera")) {
    const json& c = j["camera"];
    check_keys(c, {"width", "height", "fx", "fy", "eye_waypoints"}, "camera");
    if (c.contains("width")) s.camera.width = c["width"];
    if (c.contains("height")) s.camera.height = c["height"];
    if (c.contains("fx")) s.camera.fx = c["fx"];
    if (c.contains("fy")) s.camera.fy = c["fy"];
    if (c.contains("eye_waypoints")) {
      s.camera.eye_waypoints.clear();
      for (const json& e : c["eye_waypoints"]) {
        s.camera.eye_waypoints.push_back(vec3_from(e, "eye waypoint"));
      }
    }
  }
  if (j.contains("objects")) {
    for (const json& jo : j["objects"]) {
      check_keys(jo,
                 {"waypoints", "speed_knots", "cluster_count", "half_extent",
                  "gaussian_scale", "base_color"},
                 "object");
      ObjectSpec o;
      o.waypoints.clear();
      if (jo.contains("waypoints")) {
        for (const json& w : jo["waypoints"]) {
          o.waypoints.push_back(vec3_from(w, "waypoint"));
        }
      }
      if (jo.contains("speed_knots")) {
        o.speed_knots = jo["speed_knots"].get<std::vector<double>>();
      }
      if (jo.contains("cluster_count")) o.cluster_count = jo["cluster_count"];
      if (jo.contains("half_extent")) {
        o.half_extent = vec3_from(jo["half_extent"], "half_extent");
      }
      if (jo.contains("gaussian_scale")) o.gaussian_scale = jo["gaussian_scale"];
      if (jo.contains("base_color")) {
        o.base_color = vec3_from(jo["base_color"], "base_color");
      }
      s.objects.push_back(o);
    }
  }
  s.validate();
  return s;
}

SyntheticSceneSpec load_spec(const std::string& path) {
  return spec_from_json(read_text(path));
}

SyntheticSceneSpec demo_spec() {
  SyntheticSceneSpec s;
  s.ground_half_extent = 9.0;
  s.ground_count = 600;
  s.static_scale = 0.42;
  s.box_count = 3;
  s.box_half = Vec3{0.7, 0.7, 0.7};
  s.box_gaussians = 36;
  s.sky_resolution = 8;
  s.frame_count = 40;
  s.frame_rate = 10.0;
  s.annotation_noise = 0.05;
  s.image_noise = 0.0;
  s.camera.width = 128;
  s.camera.height = 96;
  s.camera.fx = s.camera.fy = 110.0;
  s.camera.eye_waypoints = {Vec3{-0.4, -0.1, 0.0}, Vec3{0.5, -0.22, 0.6}};
  // Both objects stay fully in view for the whole sequence so every part of
  // their trajectories is photometrically supervised.
  ObjectSpec a;
  a.waypoints = {Vec3{-1.6, 0.7, 9.0}, Vec3{0.3, 0.7, 8.2},
                 Vec3{2.2, 0.7, 7.5}};
  a.cluster_count = 30;
  a.half_extent = Vec3{1.3, 0.65, 0.65};
  a.gaussian_scale = 0.2;
  a.base_color = Vec3{0.82, 0.22, 0.18};
  ObjectSpec b;
  b.waypoints = {Vec3{3.4, 0.8, 12.8}, Vec3{0.0, 0.8, 13.2},
                 Vec3{-3.4, 0.8, 13.6}};
  b.speed_knots = {0.0, 0.45, 0.8, 1.0};
  b.cluster_count = 26;
  b.half_extent = Vec3{1.1, 0.55, 0.55};
  b.gaussian_scale = 0.18;
  b.base_color = Vec3{0.2, 0.35, 0.8};
  s.objects = {a, b};
  return s;
}

Split split_every_4th(int frame_count) {
  Split sp;
  if (frame_count < 4) {
    std::cerr << "warning: fewer than 4 frames; keeping all in train\n";
    for (int i = 0; i < frame_count; ++i) sp.train.push_back(i);
    return sp;
  }
  for (int i = 0; i < frame_count; ++i) {
    (i % 4 == 0 ? sp.test : sp.train).push_back(i);
  }
  return sp;
}

Scene build_ground_truth(const SyntheticSceneSpec& spec, uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  Scene scene;
  scene.sh_degree = 0;
  scene.trajectory_degree = 3;

  const double ge = spec.ground_half_extent;
  const double ground_y = 1.4;
  for (int i = 0; i < spec.ground_count; ++i) {
    StaticGaussian g;
    g.position = Vec3{rrange(rng, -ge, ge), ground_y + rrange(rng, -0.04, 0.04),
                      rrange(rng, 2.5, 2.5 + 2.0 * ge)};
    g.q = rand_quat(rng);
    g.log_scale = Vec3{std::log(spec.static_scale * rrange(rng, 0.75, 1.3)),
                       std::log(spec.static_scale * rrange(rng, 0.75, 1.3)),
                       std::log(spec.static_scale * rrange(rng, 0.75, 1.3))};
    g.opacity_logit = 2.5;
    g.color = rgb_block(0.34 + rrange(rng, -0.08, 0.08),
                        0.42 + rrange(rng, -0.08, 0.08),
                        0.28 + rrange(rng, -0.08, 0.08));
    scene.statics.push_back(g);
  }
  const Vec3 palette[3] = {Vec3{0.72, 0.6, 0.2}, Vec3{0.25, 0.5, 0.7},
                           Vec3{0.6, 0.3, 0.6}};
  for (int b = 0; b < spec.box_count; ++b) {
    const Vec3 center{rrange(rng, -0.65 * ge, 0.65 * ge),
                      ground_y - spec.box_half.y,
                      rrange(rng, 4.0, 4.0 + 1.3 * ge)};
    const Vec3 base = palette[b % 3];
    for (int i = 0; i < spec.box_gaussians; ++i) {
      StaticGaussian g;
      g.position =
          center + Vec3{rrange(rng, -spec.box_half.x, spec.box_half.x),
                        rrange(rng, -spec.box_half.y, spec.box_half.y),
                        rrange(rng, -spec.box_half.z, spec.box_half.z)};
      g.q = rand_quat(rng);
      const double sc = spec.static_scale * 0.8;
      g.log_scale = Vec3{std::log(sc * rrange(rng, 0.8, 1.2)),
                         std::log(sc * rrange(rng, 0.8, 1.2)),
                         std::log(sc * rrange(rng, 0.8, 1.2))};
      g.opacity_logit = 2.5;
      g.color = rgb_block(
          std::clamp(base.x + rrange(rng, -0.08, 0.08), 0.02, 0.98),
          std::clamp(base.y + rrange(rng, -0.08, 0.08), 0.02, 0.98),
          std::clamp(base.z + rrange(rng, -0.08, 0.08), 0.02, 0.98));
      scene.statics.push_back(g);
    }
  }

  const double tau_max = (double)(spec.frame_count - 1) / spec.frame_rate;
  for (size_t k = 0; k < spec.objects.size(); ++k) {
    const ObjectSpec& o = spec.objects[k];
    ObjectTrack track;
    track.group = (int)k + 1;
    const std::vector<Vec3> dense = densify_polyline(o.waypoints, 33);
    bool moving = false;
    for (const Vec3& p : dense) moving = moving || (p - dense[0]).norm() > 1e-12;
    if (moving) {
      track.center_curve = fit3(dense, 3).curve;
    } else {
      track.center_curve = make_curve3(
          3, {dense[0], dense[0], dense[0], dense[0]});
    }
    track.time_curve =
        o.speed_knots.empty() ? identity_time_curve() : make_curve1(o.speed_knots);
    track.time_monotone = true;  // knots validated non-decreasing
    track.tau_min = 0.0;
    track.tau_max = tau_max;
    const Vec3 d0 = derivative3(track.center_curve, 0.0);
    const double wn = std::sqrt(d0.x * d0.x + d0.y * d0.y);
    track.yaw_ref = wn >= 1e-6 ? std::atan2(d0.y, d0.x) : 0.0;
    scene.tracks.push_back(track);

    // Offsets are recentered so the cluster centroid sits exactly on the
    // center curve; annotation clouds then average to center + noise.
    std::vector<Vec3> offsets((size_t)o.cluster_count);
    Vec3 mean{0, 0, 0};
    for (Vec3& d : offsets) {
      d = Vec3{rrange(rng, -o.half_extent.x, o.half_extent.x),
               rrange(rng, -o.half_extent.y, o.half_extent.y),
               rrange(rng, -o.half_extent.z, o.half_extent.z)};
      mean += d;
    }
    mean = mean * (1.0 / (double)o.cluster_count);
    for (Vec3& d : offsets) d = d - mean;
    for (const Vec3& d : offsets) {
      DynamicGaussian g;
      std::vector<double> pts;
      for (int c = 0; c < 4; ++c) {
        pts.push_back(d.x);
        pts.push_back(d.y);
        pts.push_back(d.z);
      }
      g.offset_curve = BezierCurve(3, 3, pts);
      g.q = rand_quat(rng);
      g.log_scale =
          Vec3{std::log(o.gaussian_scale * rrange(rng, 0.8, 1.25)),
               std::log(o.gaussian_scale * rrange(rng, 0.8, 1.25)),
               std::log(o.gaussian_scale * rrange(rng, 0.8, 1.25))};
      g.opacity_logit = 3.0;
      g.color = rgb_block(
          std::clamp(o.base_color.x + rrange(rng, -0.12, 0.12), 0.02, 0.98),
          std::clamp(o.base_color.y + rrange(rng, -0.12, 0.12), 0.02, 0.98),
          std::clamp(o.base_color.z + rrange(rng, -0.12, 0.12), 0.02, 0.98));
      g.group = (int)k + 1;
      scene.dynamics.push_back(g);
    }
  }

  scene.sky = SkyCubemap(spec.sky_resolution, 0.5);
  // Face order +x,-x,+y,-y,+z,-z; y points down, so -y is the zenith.
  const Vec3 face_base[6] = {Vec3{0.62, 0.68, 0.82}, Vec3{0.58, 0.64, 0.78},
                             Vec3{0.5, 0.45, 0.38},  Vec3{0.42, 0.6, 0.9},
                             Vec3{0.66, 0.72, 0.86}, Vec3{0.6, 0.66, 0.8}};
  const int res = spec.sky_resolution;
  for (int f = 0; f < 6; ++f) {
    for (int y = 0; y < res; ++y) {
      for (int x = 0; x < res; ++x) {
        const double v = res > 1 ? (double)y / (double)(res - 1) : 0.5;
        const double u = res > 1 ? (double)x / (double)(res - 1) : 0.5;
        const double ramp = 0.08 * (v - 0.5) + 0.03 * (u - 0.5);
        double* t = &scene.sky.faces[(size_t)f][((size_t)y * res + x) * 3];
        t[0] = std::clamp(face_base[f].x + ramp, 0.05, 0.95);
        t[1] = std::clamp(face_base[f].y + ramp, 0.05, 0.95);
        t[2] = std::clamp(face_base[f].z + 0.5 * ramp, 0.05, 0.95);
      }
    }
  }
  scene.validate();
  return scene;
}

namespace {

struct ObjectNoise {
  double span = 0.0;
  double amp = 0.0;
  int freq[3] = {1, 1, 1};
  double phase[3] = {0, 0, 0};
  double rms = 0.0;

  Vec3 at(int frame, int frame_count) const {
    const double u =
        frame_count > 1 ? (double)frame / (double)(frame_count - 1) : 0.0;
    return Vec3{amp * std::sin(2.0 * kPi * (freq[0] * u + phase[0])),
                amp * std::sin(2.0 * kPi * (freq[1] * u + phase[1])),
                amp * std::sin(2.0 * kPi * (freq[2] * u + phase[2]))};
  }
};

json manifest_json(const Dataset& ds) {
  json j;
  j["version"] = kManifestVersion;
  j["width"] = ds.width;
  j["height"] = ds.height;
  j["fx"] = ds.fx;
  j["fy"] = ds.fy;
  j["cx"] = ds.cx;
  j["cy"] = ds.cy;
  j["frame_count"] = ds.frame_count;
  j["frame_rate"] = ds.frame_rate;
  j["seed"] = ds.seed;
  j["annotation_noise"] = ds.annotation_noise;
  j["image_noise"] = ds.image_noise;
  j["sparse_depth_fraction"] = ds.sparse_depth_fraction;
  j["dyn_mask_threshold"] = ds.dyn_mask_threshold;
  j["sky_mask_threshold"] = ds.sky_mask_threshold;
  j["extent"] = ds.extent;
  j["gt_scene"] = "scene_gt.json";
  j["static_points"] = "static_points.csv";
  j["timestamps"] = json::array();
  j["eyes"] = json::array();
  j["frames"] = json::array();
  for (int i = 0; i < ds.frame_count; ++i) {
    const DatasetFrame& f = ds.frames[(size_t)i];
    j["timestamps"].push_back(f.timestamp);
    j["eyes"].push_back(vec3_json(f.camera.center_world()));
    json jf;
    jf["image"] = frame_name("frame", i, "ppm");
    jf["depth"] = frame_name("depth", i, "pfm");
    jf["depth_valid"] = frame_name("depthvalid", i, "pgm");
    jf["sky"] = frame_name("sky", i, "pgm");
    jf["dyn"] = frame_name("dyn", i, "pgm");
    j["frames"].push_back(jf);
  }
  j["train"] = ds.split.train;
  j["test"] = ds.split.test;
  j["objects"] = json::array();
  for (const ObjectAnnotation& a : ds.annotations) {
    json ja;
    ja["group"] = a.group;
    ja["csv"] = a.csv;
    ja["span"] = a.span;
    ja["noise_rms"] = a.noise_rms;
    j["objects"].push_back(ja);
  }
  return j;
}

}  // namespace

void write_dataset(const Dataset& ds, const std::string& out_dir) {
  ensure_dir(out_dir);
  const std::string root = out_dir + "/";
  {
    std::ofstream f = open_out(root + "manifest.json");
    f << manifest_json(ds).dump(2) << "\n";
  }
  save_scene(root + "scene_gt.json", ds.gt);
  for (int i = 0; i < ds.frame_count; ++i) {
    const DatasetFrame& f = ds.frames[(size_t)i];
    write_ppm(root + frame_name("frame", i, "ppm"), f.sup.gt);
    write_pfm(root + frame_name("depth", i, "pfm"), f.sup.inv_depth);
    write_pgm_mask(root + frame_name("depthvalid", i, "pgm"), f.sup.depth_valid);
    write_pgm_mask(root + frame_name("sky", i, "pgm"), f.sup.sky_mask);
    write_pgm_mask(root + frame_name("dyn", i, "pgm"), f.sup.dyn_mask);
  }
  {
    std::ofstream f = open_out(root + "static_points.csv");
    f << "x,y,z\n";
    for (const Vec3& p : ds.static_points) {
      f << g17(p.x) << "," << g17(p.y) << "," << g17(p.z) << "\n";
    }
  }
  for (size_t k = 0; k < ds.annotations.size(); ++k) {
    const ObjectObservations& obs = ds.objects[k];
    std::ofstream f = open_out(root + ds.annotations[k].csv);
    f << "frame,timestamp,x,y,z\n";
    for (size_t i = 0; i < obs.points.size(); ++i) {
      for (const Vec3& p : obs.points[i]) {
        f << i << "," << g17(obs.taus[i]) << "," << g17(p.x) << ","
          << g17(p.y) << "," << g17(p.z) << "\n";
      }
    }
  }
}

Dataset generate_dataset(const SyntheticSceneSpec& spec, uint64_t seed,
                         const std::string& out_dir) {
  spec.validate();
  Dataset ds;
  ds.root = out_dir;
  ds.width = spec.camera.width;
  ds.height = spec.camera.height;
  ds.fx = spec.camera.fx;
  ds.fy = spec.camera.fy;
  ds.cx = spec.camera.width / 2.0;
  ds.cy = spec.camera.height / 2.0;
  ds.frame_count = spec.frame_count;
  ds.frame_rate = spec.frame_rate;
  ds.seed = seed;
  ds.annotation_noise = spec.annotation_noise;
  ds.image_noise = spec.image_noise;
  ds.gt = build_ground_truth(spec, seed);
  ds.extent = scene_extent(ds.gt);
  ds.split = split_every_4th(spec.frame_count);

  const int n = spec.frame_count;
  ds.frames.resize((size_t)n);
  for (int i = 0; i < n; ++i) {
    DatasetFrame& f = ds.frames[(size_t)i];
    f.timestamp = (double)i / spec.frame_rate;
    f.camera.width = ds.width;
    f.camera.height = ds.height;
    f.camera.fx = ds.fx;
    f.camera.fy = ds.fy;
    f.camera.cx = ds.cx;
    f.camera.cy = ds.cy;
    f.camera.tau = f.timestamp;
    const double s = n > 1 ? (double)i / (double)(n - 1) : 0.0;
    const Vec3 eye = lerp_path(spec.camera.eye_waypoints, s);
    f.camera.R = Mat3{};
    f.camera.t = eye * -1.0;
  }

  // Annotation noise parameters, one stream independent of frame order.
  std::mt19937_64 noise_rng(seed * 0x9e3779b97f4a7c15ULL + 0xa50a5ULL);
  std::vector<ObjectNoise> noises(spec.objects.size());
  for (size_t k = 0; k < spec.objects.size(); ++k) {
    ObjectNoise& on = noises[k];
    on.span = 2.0 * spec.objects[k].half_extent.norm();
    on.amp = spec.annotation_noise * on.span * std::sqrt(2.0 / 3.0);
    for (int a = 0; a < 3; ++a) {
      // Integer cycle counts keep the perturbation mean near zero, so the
      // injected error is almost entirely time-varying (correctable).
      on.freq[a] = 1 + (int)(noise_rng() % 2);
      on.phase[a] = unit_rand(noise_rng);
    }
    double acc = 0.0;
    for (int i = 0; i < n; ++i) acc += on.at(i, n).dot(on.at(i, n));
    on.rms = std::sqrt(acc / (double)n);
  }

  // Frames are independent; per-frame RNG substreams keep the result
  // identical for any schedule.
  const RasterConfig rc;  // projection config for reference rendering
  (void)rc;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < n; ++i) {
    DatasetFrame& f = ds.frames[(size_t)i];
    const RenderOutput full = render_reference(ds.gt, f.camera, RenderSubset::All);
    const RenderOutput dyn =
        render_reference(ds.gt, f.camera, RenderSubset::DynamicOnly);
    std::mt19937_64 frng(seed * 0x9e3779b97f4a7c15ULL + 0xf00dULL + (uint64_t)i);
    Image3 img = full.color;
    if (spec.image_noise > 0.0) {
      for (double& v : img.v) {
        v = std::clamp(v + spec.image_noise * gauss(frng), 0.0, 1.0);
      }
    }
    f.sup.gt = quantize_image(img);
    f.sup.dyn_mask = Image1(ds.width, ds.height, 0.0);
    f.sup.sky_mask = Image1(ds.width, ds.height, 0.0);
    for (int p = 0; p < (int)full.opacity.pixels(); ++p) {
      if (dyn.opacity.v[(size_t)p] > ds.dyn_mask_threshold) {
        f.sup.dyn_mask.v[(size_t)p] = 1.0;
      }
      if (full.opacity.v[(size_t)p] < ds.sky_mask_threshold) {
        f.sup.sky_mask.v[(size_t)p] = 1.0;
      }
    }
    const int npix = ds.width * ds.height;
    const int k = std::max(1, (int)std::lround(ds.sparse_depth_fraction * npix));
    std::vector<int> idx((size_t)npix);
    for (int p = 0; p < npix; ++p) idx[(size_t)p] = p;
    for (int p = 0; p < k; ++p) {
      const int r = p + (int)(frng() % (uint64_t)(npix - p));
      std::swap(idx[(size_t)p], idx[(size_t)r]);
    }
    f.sup.depth_valid = Image1(ds.width, ds.height, 0.0);
    f.sup.inv_depth = Image1(ds.width, ds.height, 0.0);
    for (int p = 0; p < k; ++p) {
      const size_t at = (size_t)idx[(size_t)p];
      f.sup.depth_valid.v[at] = 1.0;
      // Stored as float32 in the PFM; keep the in-memory copy identical.
      f.sup.inv_depth.v[at] = (double)(float)full.invdepth.v[at];
    }
  }

  // Annotation clouds: every primitive of the group, shifted by the
  // object's smooth center perturbation.
  ds.objects.resize(spec.objects.size());
  ds.annotations.resize(spec.objects.size());
  for (size_t k = 0; k < spec.objects.size(); ++k) {
    ObjectObservations& obs = ds.objects[k];
    obs.group = (int)k + 1;
    obs.taus.resize((size_t)n);
    obs.points.assign((size_t)n, {});
    const ObjectTrack& track = ds.gt.tracks[k];
    for (int i = 0; i < n; ++i) {
      obs.taus[(size_t)i] = ds.frames[(size_t)i].timestamp;
      const Vec3 p = noises[k].at(i, n);
      for (const DynamicGaussian& g : ds.gt.dynamics) {
        if (g.group != obs.group) continue;
        obs.points[(size_t)i].push_back(
            dynamic_position(g, track, obs.taus[(size_t)i]) + p);
      }
    }
    ObjectAnnotation& a = ds.annotations[k];
    a.group = obs.group;
    a.span = noises[k].span;
    a.noise_rms = noises[k].rms;
    a.csv = "object_" + std::to_string(obs.group) + ".csv";
  }

  ds.static_points.clear();
  for (const StaticGaussian& g : ds.gt.statics) {
    ds.static_points.push_back(g.position);
  }

  write_dataset(ds, out_dir);
  return load_dataset(out_dir);
}

Dataset load_dataset(const std::string& root) {
  const std::string base = root + "/";
  json j = json::parse(read_text(base + "manifest.json"), nullptr, false);
  if (j.is_discarded()) {
    fail(ErrorCode::Io, "manifest.json is not valid JSON in '" + root + "'");
  }
  if (!j.contains("version") || j["version"].get<int>() != kManifestVersion) {
    fail(ErrorCode::InvalidArgument, "unsupported manifest version in '" + root + "'");
  }
  Dataset ds;
  ds.root = root;
  ds.width = j["width"];
  ds.height = j["height"];
  ds.fx = j["fx"];
  ds.fy = j["fy"];
  ds.cx = j["cx"];
  ds.cy = j["cy"];
  ds.frame_count = j["frame_count"];
  ds.frame_rate = j["frame_rate"];
  ds.seed = j["seed"];
  ds.annotation_noise = j["annotation_noise"];
  ds.image_noise = j["image_noise"];
  ds.sparse_depth_fraction = j["sparse_depth_fraction"];
  ds.dyn_mask_threshold = j["dyn_mask_threshold"];
  ds.sky_mask_threshold = j["sky_mask_threshold"];
  ds.extent = j["extent"];
  ds.split.train = j["train"].get<std::vector<int>>();
  ds.split.test = j["test"].get<std::vector<int>>();
  if ((int)j["frames"].size() != ds.frame_count ||
      (int)j["timestamps"].size() != ds.frame_count ||
      (int)j["eyes"].size() != ds.frame_count) {
    fail(ErrorCode::InvalidArgument, "manifest frame counts are inconsistent");
  }
  ds.frames.resize((size_t)ds.frame_count);
  for (int i = 0; i < ds.frame_count; ++i) {
    DatasetFrame& f = ds.frames[(size_t)i];
    f.timestamp = j["timestamps"][(size_t)i];
    f.camera.width = ds.width;
    f.camera.height = ds.height;
    f.camera.fx = ds.fx;
    f.camera.fy = ds.fy;
    f.camera.cx = ds.cx;
    f.camera.cy = ds.cy;
    f.camera.tau = f.timestamp;
    f.camera.R = Mat3{};
    f.camera.t = vec3_from(j["eyes"][(size_t)i], "eye") * -1.0;
    const json& jf = j["frames"][(size_t)i];
    f.sup.gt = read_ppm(base + jf["image"].get<std::string>());
    f.sup.inv_depth = read_pfm(base + jf["depth"].get<std::string>());
    f.sup.depth_valid = read_pgm_mask(base + jf["depth_valid"].get<std::string>());
    f.sup.sky_mask = read_pgm_mask(base + jf["sky"].get<std::string>());
    f.sup.dyn_mask = read_pgm_mask(base + jf["dyn"].get<std::string>());
  }
  ds.gt = load_scene(base + j["gt_scene"].get<std::string>());

  {
    std::istringstream in(read_text(base + j["static_points"].get<std::string>()));
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) !=
        std::vector<std::string>{"x", "y", "z"}) {
      fail(ErrorCode::Io, "static_points.csv: bad header");
    }
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> c = split_csv_line(line);
      if (c.size() != 3) fail(ErrorCode::Io, "static_points.csv: bad row");
      ds.static_points.push_back(
          Vec3{std::stod(c[0]), std::stod(c[1]), std::stod(c[2])});
    }
  }

  for (const json& ja : j["objects"]) {
    ObjectAnnotation a;
    a.group = ja["group"];
    a.csv = ja["csv"].get<std::string>();
    a.span = ja["span"];
    a.noise_rms = ja["noise_rms"];
    ds.annotations.push_back(a);

    ObjectObservations obs;
    obs.group = a.group;
    obs.taus.assign((size_t)ds.frame_count, 0.0);
    obs.points.assign((size_t)ds.frame_count, {});
    std::istringstream in(read_text(base + a.csv));
    std::string line;
    if (!std::getline(in, line) ||
        split_csv_line(line) != std::vector<std::string>{"frame", "timestamp",
                                                         "x", "y", "z"}) {
      fail(ErrorCode::Io, a.csv + ": bad header");
    }
    std::vector<char> seen((size_t)ds.frame_count, 0);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> c = split_csv_line(line);
      if (c.size() != 5) fail(ErrorCode::Io, a.csv + ": bad row");
      const int frame = std::stoi(c[0]);
      if (frame < 0 || frame >= ds.frame_count) {
        fail(ErrorCode::Io, a.csv + ": frame index out of range");
      }
      obs.taus[(size_t)frame] = std::stod(c[1]);
      seen[(size_t)frame] = 1;
      obs.points[(size_t)frame].push_back(
          Vec3{std::stod(c[2]), std::stod(c[3]), std::stod(c[4])});
    }
    for (int i = 0; i < ds.frame_count; ++i) {
      if (!seen[(size_t)i]) {
        fail(ErrorCode::Io, a.csv + ": no rows for frame " + std::to_string(i));
      }
    }
    ds.objects.push_back(std::move(obs));
  }
  return ds;
}

Vec3 track_center_at(const ObjectTrack& track, double tau) {
  const TimeSample ts = time_to_bezier(track, tau);
  return evaluate3(track.center_curve, ts.t);
}

namespace {

std::string fmt(double v, const char* spec) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

SplitMetrics split_metrics(const Scene& model, const Dataset& ds,
                           const std::vector<int>& idx,
                           const RasterConfig& rc) {
  SplitMetrics m;
  m.frames = (int)idx.size();
  if (idx.empty()) return m;
  std::vector<double> psnrs(idx.size()), ssims(idx.size());
  std::vector<std::optional<double>> dyns(idx.size());
  for (size_t k = 0; k < idx.size(); ++k) {
    const DatasetFrame& f = ds.frames[(size_t)idx[k]];
    const RenderOutput out = render(model, f.camera, rc, RenderSubset::All);
    const Image3 q = quantize_image(out.color);
    psnrs[k] = psnr(q, f.sup.gt);
    ssims[k] = ssim_metric(q, f.sup.gt);
    dyns[k] = dyn_psnr(q, f.sup.gt, f.sup.dyn_mask);
  }
  for (double v : psnrs) m.psnr += v;
  for (double v : ssims) m.ssim += v;
  m.psnr /= (double)idx.size();
  m.ssim /= (double)idx.size();
  m.dyn_psnr = aggregate_frames(dyns);
  return m;
}

}  // namespace

std::string EvalResult::table() const {
  auto row = [](const std::string& name, const SplitMetrics& m) {
    std::string dyn = m.dyn_psnr ? fmt(*m.dyn_psnr, "%8.3f") : "       -";
    if (m.frames == 0) return name + "            (no frames)\n";
    return name + fmt(m.psnr, "%8.3f") + fmt(m.ssim, "%9.4f") + dyn +
           "   " + std::to_string(m.frames) + "\n";
  };
  std::string out;
  out += "split              PSNR     SSIM  Dyn-PSNR   frames\n";
  out += row("reconstruction ", recon);
  out += row("nvs            ", nvs);
  out += "trajectory RMSE (extent " + fmt(extent, "%.3f") + " m):\n";
  for (const TrajectoryError& t : trajectories) {
    out += "  object " + std::to_string(t.group) + ": " +
           fmt(t.rmse_m, "%.4f") + " m  (" + fmt(100.0 * t.fraction, "%.3f") +
           "% of extent)\n";
  }
  return out;
}

std::string EvalResult::csv() const {
  auto cell = [](const std::optional<double>& v) {
    return v ? fmt(*v, "%.9g") : std::string();
  };
  std::string out = "split,psnr,ssim,dyn_psnr,frames\n";
  out += "reconstruction," + fmt(recon.psnr, "%.9g") + "," +
         fmt(recon.ssim, "%.9g") + "," + cell(recon.dyn_psnr) + "," +
         std::to_string(recon.frames) + "\n";
  out += "nvs," + fmt(nvs.psnr, "%.9g") + "," + fmt(nvs.ssim, "%.9g") + "," +
         cell(nvs.dyn_psnr) + "," + std::to_string(nvs.frames) + "\n";
  out += "object,rmse_m,fraction_of_extent\n";
  for (const TrajectoryError& t : trajectories) {
    out += std::to_string(t.group) + "," + fmt(t.rmse_m, "%.9g") + "," +
           fmt(t.fraction, "%.9g") + "\n";
  }
  return out;
}

EvalResult evaluate_run(const std::string& run_dir, const Dataset& ds) {
  const std::string ckpt = run_dir + "/checkpoint.json";
  if (!fs::exists(ckpt)) fail(ErrorCode::Io, "missing checkpoint '" + ckpt + "'");
  const Scene model = load_scene(ckpt);

  RasterConfig rc;
  rc.alpha_skip = 0.0;
  rc.t_floor = 0.0;
  rc.f32_accum = false;

  EvalResult res;
  res.extent = ds.extent;
  res.recon = split_metrics(model, ds, ds.split.train, rc);
  res.nvs = split_metrics(model, ds, ds.split.test, rc);

  for (const ObjectTrack& gt_track : ds.gt.tracks) {
    const ObjectTrack* learned = nullptr;
    for (const ObjectTrack& t : model.tracks) {
      if (t.group == gt_track.group) learned = &t;
    }
    if (!learned) {
      fail(ErrorCode::ContractViolation,
           "checkpoint has no track for group " + std::to_string(gt_track.group));
    }
    double acc = 0.0;
    for (const DatasetFrame& f : ds.frames) {
      const Vec3 d = track_center_at(*learned, f.timestamp) -
                     track_center_at(gt_track, f.timestamp);
      acc += d.dot(d);
    }
    TrajectoryError te;
    te.group = gt_track.group;
    te.rmse_m = std::sqrt(acc / (double)ds.frame_count);
    te.fraction = ds.extent > 0.0 ? te.rmse_m / ds.extent : 0.0;
    res.trajectories.push_back(te);
  }
  return res;
}

}  // namespace curvesplat
