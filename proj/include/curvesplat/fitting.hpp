// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "curvesplat/bezier.hpp"
#include "curvesplat/geometry.hpp"

namespace curvesplat {

// Chord-length parameterization of a point sequence. values[0] == 0 and
// values.back() == 1 exactly; interior values are cumulative chord ratios.
struct ChordParams {
  std::vector<double> values;
  // Consecutive duplicate points produce repeated parameter values. Accepted,
  // but flagged so callers can warn.
  bool duplicate_points = false;
};

// points is row-major, count x dim. Throws DegenerateInput when the total
// chord length is zero.
ChordParams chord_length_params(const std::vector<double>& points, int dim);

// Least-squares control points for fixed parameters, solved through an
// in-repo Householder QR of the Bernstein design matrix. Throws
// IllConditioned when the R-diagonal condition estimate exceeds 1e12.
BezierCurve solve_control_points(const std::vector<double>& points, int dim,
                                 const std::vector<double>& params, int degree);

// Parameter of a local minimum of squared distance from point (dim values) to
// the curve. Newton iteration on the distance derivative seeded at init
// (at most 20 steps, parameter tolerance 1e-10), with a 50-evaluation
// golden-section fallback on divergence. The returned parameter is clamped to
// [0,1] and never has larger distance than init.
double nearest_parameter(const BezierCurve& curve, const double* point,
                         double init);

struct FitResult {
  BezierCurve curve;
  std::vector<double> params;  // per-point, aligned with the input order
  double residual = 0.0;       // root-mean-square distance
  int iterations = 0;
};

// Alternating fit: chord-length init, then repeat (solve control points,
// re-project parameters) until the residual improves by less than tol or
// max_iter rounds ran. The residual sequence is non-increasing by
// construction; residual_history (when given) receives one value per round.
FitResult fit(const std::vector<double>& points, int dim, int degree,
              double tol = 1e-9, int max_iter = 50,
              std::vector<double>* residual_history = nullptr);

FitResult fit3(const std::vector<Vec3>& points, int degree, double tol = 1e-9,
               int max_iter = 50);

// Explicit time mapping t = f(tau_hat): timestamps are normalized to [0,1]
// and a dim-1 curve is least-squares fitted to params with the endpoint
// control values pinned to params.front() and params.back(). monotone (when
// given) reports whether f' >= -1e-12 on a dense grid. Throws
// InsufficientData when fewer than degree+1 samples are given and
// InvalidArgument when timestamps are not strictly increasing.
BezierCurve fit_time_mapping(const std::vector<double>& timestamps,
                             const std::vector<double>& params, int degree,
                             bool* monotone = nullptr);

}  // namespace curvesplat
