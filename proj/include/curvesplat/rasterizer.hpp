// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "curvesplat/camera.hpp"
#include "curvesplat/image.hpp"
#include "curvesplat/scene.hpp"

namespace curvesplat {

struct RasterConfig {
  int tile = 16;                     // tile edge, pixels
  double alpha_skip = 1.0 / 255.0;   // contributions below this are skipped
  double t_floor = 1e-4;             // stop once transmittance would drop below
  double depth_cull = 0.2;           // cull closer than this, meters
  double dilation = 0.3;             // added to both screen-cov diagonals, px^2
  bool f32_accum = false;            // accumulate blending in float
};

enum class RenderSubset { All, DynamicOnly, StaticOnly };

// Screen-space projection of one primitive. cov is dilated.
struct Projected {
  Vec2 xi;             // pixel coordinates of the mean
  Sym2 cov;            // 2x2 screen covariance, dilation included
  double depth = 0.0;  // camera-space z
  bool culled = false;
  Vec3 cam;            // camera-space position
};

// EWA projection with first-order (Jacobian) depth linearization. Culls when
// depth <= cfg.depth_cull or the 3-sigma ellipse misses the image.
Projected project(const Vec3& position, const Mat3& cov3, const Camera& cam,
                  const RasterConfig& cfg);

struct RenderOutput {
  Image3 color;     // sky-composited when subset == All
  Image1 invdepth;  // alpha-blended inverse view depth
  Image1 opacity;   // accumulated alpha
  Image3 velocity;  // alpha-blended world velocity, dynamics only
};

// Tiled front-to-back alpha blending over (depth, input index)-sorted
// primitives. Deterministic for any thread count: tiles own disjoint pixels.
RenderOutput render(const Scene& scene, const Camera& cam,
                    const RasterConfig& cfg, RenderSubset subset);

// Serial per-pixel oracle: no tiling, no footprint boxes, no skip or stop
// thresholds, double accumulation. Same projection and culling as render().
RenderOutput render_reference(const Scene& scene, const Camera& cam,
                              RenderSubset subset);

struct RenderCotangents {
  Image3 d_color;
  Image1 d_invdepth;
  Image1 d_opacity;
  Image3 d_velocity;

  RenderCotangents() = default;
  RenderCotangents(int w, int h)
      : d_color(w, h), d_invdepth(w, h), d_opacity(w, h), d_velocity(w, h) {}
};

// Reverse-mode gradients of <cotangents, render outputs> with respect to all
// scene parameters (including the sky cubemap). fwd must be the output of
// render() with identical arguments. Per-tile gradient buffers are merged in
// fixed tile order, so results are bitwise reproducible for any thread
// count. Internal gradient math always runs in double.
SceneGrads render_adjoint(const Scene& scene, const Camera& cam,
                          const RasterConfig& cfg, RenderSubset subset,
                          const RenderOutput& fwd,
                          const RenderCotangents& cot);

}  // namespace curvesplat
