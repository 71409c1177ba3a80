// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <string>
#include <vector>

#include "curvesplat/bezier.hpp"
#include "curvesplat/cubemap.hpp"
#include "curvesplat/geometry.hpp"

namespace curvesplat {

// Color block: spherical-harmonic coefficients. Degree 0 uses entries 0..2
// as plain RGB in [0,1]. Degree 1 adds three direction bands per channel
// (entries 3..11, band-major), evaluated along the camera-to-primitive
// direction. Evaluation is not clamped; display-time quantization clamps.
using ColorBlock = std::array<double, 12>;

inline int color_coeff_count(int sh_degree) { return sh_degree == 0 ? 3 : 12; }

Vec3 evaluate_color(const ColorBlock& block, int sh_degree, const Vec3& unit_dir);
// d_block += basis * d_rgb; d_unit_dir += band-1 linear term.
void evaluate_color_adjoint(const ColorBlock& block, int sh_degree,
                            const Vec3& unit_dir, const Vec3& d_rgb,
                            ColorBlock& d_block, Vec3& d_unit_dir);

struct StaticGaussian {
  Vec3 position;                 // meters
  Quat q;                        // unit after each optimizer step
  Vec3 log_scale;                // exp() gives s, meters
  double opacity_logit = 0.0;    // sigmoid() gives o in (0,1)
  ColorBlock color{};
};

struct DynamicGaussian {
  BezierCurve offset_curve;      // dim 3, world meters
  Quat q;                        // base rotation
  Vec3 log_scale;
  double opacity_logit = 0.0;
  ColorBlock color{};
  int group = 0;                 // resolves to an ObjectTrack
};

struct ObjectTrack {
  int group = 0;
  BezierCurve center_curve;      // dim 3
  BezierCurve time_curve;        // dim 1, maps normalized tau to t
  double tau_min = 0.0, tau_max = 1.0;  // seconds
  double yaw_ref = 0.0;          // yaw at the first fitted parameter; frozen
  bool time_monotone = true;     // recorded at construction

  ObjectTrack()
      : center_curve(3, 3, std::vector<double>(12, 0.0)),
        time_curve(1, 1, std::vector<double>{0.0, 1.0}) {}
};

struct Scene {
  int sh_degree = 0;
  int trajectory_degree = 3;
  std::vector<StaticGaussian> statics;
  std::vector<DynamicGaussian> dynamics;
  std::vector<ObjectTrack> tracks;  // index group-1; groups dense from 1
  SkyCubemap sky;

  const ObjectTrack& track_for(int group) const;
  // Checks group density/resolvability and curve degrees.
  void validate() const;
};

// Normalized-time lookup. t is the clamped curve parameter; dtdtau is zeroed
// wherever a clamp is active (object frozen at the trajectory endpoint).
struct TimeSample {
  double t = 0.0;
  double dtdtau = 0.0;       // 1/seconds
  double tau_hat = 0.0;      // clamped normalized timestamp
  bool tau_clamped = false;  // raw tau_hat fell outside [0,1]
  bool t_clamped = false;    // raw curve value fell outside [0,1]
  bool clamped = false;      // either of the above
};

TimeSample time_to_bezier(const ObjectTrack& track, double tau);

Vec3 dynamic_position(const DynamicGaussian& g, const ObjectTrack& track,
                      double tau);
Vec3 dynamic_velocity(const DynamicGaussian& g, const ObjectTrack& track,
                      double tau);
// Tangent-following rotation: R_z(yaw - yaw_ref) applied to the base
// rotation; falls back to the base rotation when the xy tangent is shorter
// than 1e-6 (stateless fallback, so the result is a pure function of
// (gaussian, track, tau)).
Quat dynamic_rotation(const DynamicGaussian& g, const ObjectTrack& track,
                      double tau);

// Sigma = R diag(s)^2 R^T.
Mat3 covariance_3d(const Quat& q, const Vec3& s);

// One resolved primitive, carrying the intermediate state the backward pass
// needs to re-derive the parameter chains.
struct Renderable {
  Vec3 position;
  Quat rotation;            // effective rotation (normalized input)
  Vec3 scale;               // exp(log_scale)
  double opacity = 0.0;     // sigmoid(opacity_logit)
  ColorBlock color{};
  Vec3 velocity;            // world m/s, zero for statics
  bool is_dynamic = false;
  int group = 0;            // 0 for statics
  int source_index = 0;     // index into statics or dynamics
  TimeSample ts;            // dynamics only
  bool yaw_active = false;  // tangent long enough for the yaw rule
  double dyaw = 0.0;        // yaw - yaw_ref when active
};

// Statics then dynamics, each in storage order. Pure function of its inputs.
std::vector<Renderable> gather_renderables(const Scene& scene, double tau);

// Per-renderable gradients produced by the rasterizer adjoint.
struct RenderableGrads {
  Vec3 d_position;
  Mat3 d_cov;               // dL/dSigma3D, symmetric
  double d_opacity = 0.0;   // dL/do, post-sigmoid
  ColorBlock d_color{};
  Vec3 d_velocity;

  RenderableGrads() : d_cov{} { d_cov.m.fill(0.0); }
};

// Gradient storage mirroring the learnable parameters.
struct SceneGrads {
  std::vector<Vec3> static_position;
  std::vector<Vec3> static_log_scale;
  std::vector<double> static_opacity_logit;
  std::vector<ColorBlock> static_color;
  std::vector<Quat> static_q;
  std::vector<std::vector<double>> offset_ctrl;  // per dynamic, (n+1)*3
  std::vector<Vec3> dyn_log_scale;
  std::vector<double> dyn_opacity_logit;
  std::vector<ColorBlock> dyn_color;
  std::vector<Quat> dyn_q;
  std::vector<std::vector<double>> center_ctrl;  // per track, (n+1)*3
  std::vector<std::vector<double>> time_values;  // per track, n+1
  std::vector<std::vector<double>> sky_faces;    // 6 faces like SkyCubemap

  void init_zero(const Scene& scene);
  void add_scaled(const SceneGrads& other, double w);
};

// Chains per-renderable gradients back to parameters. Serial and
// deterministic; accumulates into grads.
void scatter_gradients(const Scene& scene, double tau,
                       const std::vector<Renderable>& renderables,
                       const std::vector<RenderableGrads>& rg,
                       SceneGrads& grads);

// Shared helper for losses that differentiate through t directly: routes
// (d_t, d_dtdtau) into the track's time-curve values.
void scatter_time_gradient(const ObjectTrack& track, const TimeSample& ts,
                           double d_t, double d_dtdtau,
                           std::vector<double>& d_time_values);

// Scene construction from per-object observations (Gaussian groups).
struct ObjectObservations {
  int group = 0;
  std::vector<double> taus;                // one per frame, strictly increasing
  std::vector<std::vector<Vec3>> points;   // per-frame cloud
};

struct InitOptions {
  int trajectory_degree = 3;
  int sh_degree = 0;
  int sky_res = 16;
  int points_per_object = 0;  // 0 = every (frame, point) pair
  int max_static_points = 0;  // 0 = all
  double opacity_init = 0.1;
};

// Per object: per-frame centers are the cloud means; the center curve is
// fitted over them, the time curve over (tau_i, fitted t_i); each selected
// point becomes a DynamicGaussian with a constant offset curve equal to
// point minus its own frame's fitted center. Isotropic scales come from the
// in-frame nearest-neighbor distance.
Scene init_scene_from_groups(const std::vector<ObjectObservations>& objects,
                             const std::vector<Vec3>& static_points,
                             const InitOptions& opts);

// Versioned checkpoint; the loader rejects unknown versions.
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);
void save_scene(const std::string& path, const Scene& scene);
Scene load_scene(const std::string& path);

}  // namespace curvesplat
