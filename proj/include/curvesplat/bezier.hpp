// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "curvesplat/core.hpp"
#include "curvesplat/geometry.hpp"

namespace curvesplat {

// Highest supported polynomial degree. Binomial coefficients are tabulated
// exactly as integers up to this cap; trajectories in this project are cubic.
inline constexpr int kMaxDegree = 20;

// Bernstein basis polynomial b_{i,n}(t) = C(n,i) t^i (1-t)^(n-i).
double bernstein(int i, int n, double t);

// d/dt b_{i,n}(t) = C(n,i) (i - n t) t^(i-1) (1-t)^(n-i-1), with the
// 0^0-ambiguous endpoints resolved by the polynomial limit.
double bernstein_derivative(int i, int n, double t);

// Fills weights[0..n] with all basis values at t. weights must hold n+1.
void bernstein_all(int n, double t, double* weights);
void bernstein_derivative_all(int n, double t, double* weights);

// Degree-n control polygon in d dimensions. Control points are stored flat,
// point i occupying pts[i*dim .. i*dim+dim).
struct BezierCurve {
  int degree = 0;
  int dim = 0;
  std::vector<double> pts;

  BezierCurve() = default;
  BezierCurve(int degree_, int dim_, std::vector<double> pts_);

  double ctrl(int i, int c) const { return pts[i * dim + c]; }
  double& ctrl(int i, int c) { return pts[i * dim + c]; }

  Vec3 ctrl3(int i) const { return {pts[i * 3], pts[i * 3 + 1], pts[i * 3 + 2]}; }
  void set_ctrl3(int i, const Vec3& p) {
    pts[i * 3] = p.x;
    pts[i * 3 + 1] = p.y;
    pts[i * 3 + 2] = p.z;
  }
};

BezierCurve make_curve3(int degree, const std::vector<Vec3>& control_points);
BezierCurve make_curve1(const std::vector<double>& control_values);

// Weighted control-point sum at parameter t; out must hold curve.dim values.
void evaluate(const BezierCurve& curve, double t, double* out);
void derivative(const BezierCurve& curve, double t, double* out);
void second_derivative(const BezierCurve& curve, double t, double* out);

Vec3 evaluate3(const BezierCurve& curve, double t);
Vec3 derivative3(const BezierCurve& curve, double t);
Vec3 second_derivative3(const BezierCurve& curve, double t);
double evaluate1(const BezierCurve& curve, double t);
double derivative1(const BezierCurve& curve, double t);

// Reverse-mode companion of evaluate: given the cotangent of the output
// point, yields gradients for every control point plus the parameter.
struct EvaluateAdjoint {
  std::vector<double> d_control_points;  // (degree+1) * dim, same layout as pts
  double d_t = 0.0;
};
EvaluateAdjoint evaluate_adjoint(const BezierCurve& curve, double t,
                                 std::span<const double> cotangent);

// C0 chain of curves over a global parameter in [0,1]. boundaries has one
// entry per segment end, starting at 0 and ending at 1.
struct PiecewiseBezier {
  std::vector<BezierCurve> segments;
  std::vector<double> boundaries;
};

// Validates segment/boundary consistency (shared dim, strictly increasing
// boundaries, adjacent endpoints within 1e-9).
PiecewiseBezier make_piecewise(std::vector<BezierCurve> segments,
                               std::vector<double> boundaries);

// Evaluates the piecewise curve at global parameter t. Out-of-range t is
// clamped; *clamped (if given) reports whether clamping fired.
void evaluate_piecewise(const PiecewiseBezier& pw, double t, double* out,
                        bool* clamped = nullptr);

// JSON round-trip: {"degree": n, "dim": d, "control_points": [[..], ..]}.
std::string curve_to_json(const BezierCurve& curve);
BezierCurve curve_from_json(const std::string& text);

}  // namespace curvesplat
