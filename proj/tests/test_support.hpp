// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <vector>

#include "curvesplat/bezier.hpp"
#include "curvesplat/geometry.hpp"

namespace curvesplat::testing {

using Rng = std::mt19937_64;

inline double urand(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 random_vec3(Rng& rng, double lo, double hi) {
  return {urand(rng, lo, hi), urand(rng, lo, hi), urand(rng, lo, hi)};
}

inline Vec3 random_unit_vec3(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v{n(rng), n(rng), n(rng)};
  while (v.norm() < 1e-6) v = Vec3{n(rng), n(rng), n(rng)};
  return v.normalized();
}

inline Quat random_quat(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q{n(rng), n(rng), n(rng), n(rng)};
  while (q.norm() < 1e-6) q = Quat{n(rng), n(rng), n(rng), n(rng)};
  return q.normalized();
}

inline BezierCurve random_cubic3(Rng& rng, double lo = -10.0, double hi = 10.0) {
  std::vector<Vec3> cp;
  for (int i = 0; i < 4; ++i) cp.push_back(random_vec3(rng, lo, hi));
  return make_curve3(3, cp);
}

}  // namespace curvesplat::testing
