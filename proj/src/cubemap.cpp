// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#include "curvesplat/cubemap.hpp"

#include <algorithm>
#include <cmath>

#include "curvesplat/core.hpp"

namespace curvesplat {

Vec3 sample_cubemap(const SkyCubemap& sky, const Vec3& direction,
                    CubemapFootprint* footprint) {
  const double ax = std::abs(direction.x), ay = std::abs(direction.y),
               az = std::abs(direction.z);
  if (ax == 0.0 && ay == 0.0 && az == 0.0)
    fail(ErrorCode::ContractViolation, "cubemap sample with zero direction");

  // Face selection by dominant axis; (u, v) in [-1, 1] on the face.
  int face;
  double u, v, m;
  if (ax >= ay && ax >= az) {
    m = ax;
    face = direction.x > 0 ? 0 : 1;
    u = direction.x > 0 ? -direction.z : direction.z;
    v = -direction.y;
  } else if (ay >= az) {
    m = ay;
    face = direction.y > 0 ? 2 : 3;
    u = direction.x;
    v = direction.y > 0 ? direction.z : -direction.z;
  } else {
    m = az;
    face = direction.z > 0 ? 4 : 5;
    u = direction.z > 0 ? direction.x : -direction.x;
    v = -direction.y;
  }
  u /= m;
  v /= m;

  // Clamped bilinear on the face grid; texel centers at (i + 0.5) / res.
  const int res = sky.res;
  double sx = (u + 1.0) * 0.5 * res - 0.5;
  double sy = (v + 1.0) * 0.5 * res - 0.5;
  int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
  double fx = sx - x0, fy = sy - y0;
  int x1 = std::clamp(x0 + 1, 0, res - 1), y1 = std::clamp(y0 + 1, 0, res - 1);
  x0 = std::clamp(x0, 0, res - 1);
  y0 = std::clamp(y0, 0, res - 1);

  CubemapFootprint fp;
  fp.face = face;
  fp.idx[0] = y0 * res + x0;
  fp.idx[1] = y0 * res + x1;
  fp.idx[2] = y1 * res + x0;
  fp.idx[3] = y1 * res + x1;
  fp.w[0] = (1 - fx) * (1 - fy);
  fp.w[1] = fx * (1 - fy);
  fp.w[2] = (1 - fx) * fy;
  fp.w[3] = fx * fy;

  const std::vector<double>& f = sky.faces[face];
  Vec3 out{0, 0, 0};
  for (int k = 0; k < 4; ++k) {
    const double* texel = &f[size_t(fp.idx[k]) * 3];
    out.x += fp.w[k] * texel[0];
    out.y += fp.w[k] * texel[1];
    out.z += fp.w[k] * texel[2];
  }
  if (footprint) *footprint = fp;
  return out;
}

void sample_cubemap_adjoint(const CubemapFootprint& footprint,
                            const Vec3& d_color, SkyCubemap& grad) {
  std::vector<double>& f = grad.faces[footprint.face];
  for (int k = 0; k < 4; ++k) {
    double* texel = &f[size_t(footprint.idx[k]) * 3];
    texel[0] += footprint.w[k] * d_color.x;
    texel[1] += footprint.w[k] * d_color.y;
    texel[2] += footprint.w[k] * d_color.z;
  }
}

}  // namespace curvesplat
