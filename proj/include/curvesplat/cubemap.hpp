// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "curvesplat/geometry.hpp"

namespace curvesplat {

// Trainable sky cubemap. Face order: +x, -x, +y, -y, +z, -z. Each face is
// res x res RGB, row-major, texels in [0,1] (clamped after optimizer steps).
struct SkyCubemap {
  int res = 0;
  std::array<std::vector<double>, 6> faces;

  SkyCubemap() = default;
  explicit SkyCubemap(int r, double fill = 0.5) : res(r) {
    for (auto& f : faces) f.assign(size_t(r) * r * 3, fill);
  }
  size_t texel_count() const { return size_t(res) * res * 3 * 6; }
};

// Bilinear footprint of one directional sample: four texels on one face.
struct CubemapFootprint {
  int face = 0;
  int idx[4] = {0, 0, 0, 0};  // texel index within the face (pixel, not *3)
  double w[4] = {0, 0, 0, 0};
};

// Dominant-axis face selection, clamped bilinear interpolation within the
// face; invariant to scaling of direction. Throws ContractViolation on a
// zero direction. footprint (when given) receives the touched texels and
// weights for the adjoint.
Vec3 sample_cubemap(const SkyCubemap& sky, const Vec3& direction,
                    CubemapFootprint* footprint = nullptr);

// Accumulates d_color into per-texel gradients laid out like the faces.
void sample_cubemap_adjoint(const CubemapFootprint& footprint,
                            const Vec3& d_color, SkyCubemap& grad);

}  // namespace curvesplat
