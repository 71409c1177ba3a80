// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "curvesplat/geometry.hpp"

namespace curvesplat {

// Pinhole camera. World-to-camera: x_cam = R x_world + t. The sample point
// of pixel (row y, col x) is at image coordinates (x, y) exactly.
struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  Mat3 R;         // world-to-camera rotation
  Vec3 t;         // world-to-camera translation
  int width = 0, height = 0;
  double tau = 0.0;  // timestamp, seconds

  Vec3 to_camera(const Vec3& p_world) const { return R * p_world + t; }
  Vec3 center_world() const { return R.transposed_mul(t) * -1.0; }
  // World-space direction of the ray through pixel coords (x, y); not
  // normalized (cubemap sampling is scale invariant).
  Vec3 pixel_ray_world(double x, double y) const {
    Vec3 d{(x - cx) / fx, (y - cy) / fy, 1.0};
    return R.transposed_mul(d);
  }
};

}  // namespace curvesplat
