// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#include "curvesplat/bezier.hpp"

#include <array>
#include <cmath>
#include <cstdint>

#include <json.hpp>

namespace curvesplat {

namespace {

// C(n,i) for n <= kMaxDegree, computed once from Pascal's triangle.
// Values fit comfortably in 64-bit integers for n <= 20.
struct BinomialTable {
  std::array<std::array<int64_t, kMaxDegree + 1>, kMaxDegree + 1> c{};
  BinomialTable() {
    for (int n = 0; n <= kMaxDegree; ++n) {
      c[n][0] = 1;
      c[n][n] = 1;
      for (int i = 1; i < n; ++i) c[n][i] = c[n - 1][i - 1] + c[n - 1][i];
    }
  }
};
const BinomialTable kBinomial;

void check_basis_args(int i, int n) {
  if (n < 0 || n > kMaxDegree)
    fail(ErrorCode::InvalidArgument,
         "degree " + std::to_string(n) + " outside [0, " +
             std::to_string(kMaxDegree) + "]");
  if (i < 0 || i > n)
    fail(ErrorCode::InvalidIndex, "basis index " + std::to_string(i) +
                                      " outside [0, " + std::to_string(n) + "]");
}

// x^k by repeated multiplication; exact for k == 0 (returns 1).
double ipow(double x, int k) {
  double r = 1.0;
  for (int j = 0; j < k; ++j) r *= x;
  return r;
}

}  // namespace

double bernstein(int i, int n, double t) {
  check_basis_args(i, n);
  return double(kBinomial.c[n][i]) * ipow(t, i) * ipow(1.0 - t, n - i);
}

double bernstein_derivative(int i, int n, double t) {
  check_basis_args(i, n);
  if (n == 0) return 0.0;
  // The closed form has 0^0-shaped factors at the endpoints; the polynomial
  // limits are hard-coded there.
  if (t == 0.0) {
    if (i == 0) return -double(n);
    if (i == 1) return double(n);
    return 0.0;
  }
  if (t == 1.0) {
    if (i == n) return double(n);
    if (i == n - 1) return -double(n);
    return 0.0;
  }
  // The factored form (i - n t) t^(i-1) (1-t)^(n-i-1) would need negative
  // powers at the first and last basis function; expand those two instead.
  if (i == 0) return -double(n) * ipow(1.0 - t, n - 1);
  if (i == n) return double(n) * ipow(t, n - 1);
  return double(kBinomial.c[n][i]) * (double(i) - double(n) * t) *
         ipow(t, i - 1) * ipow(1.0 - t, n - i - 1);
}

void bernstein_all(int n, double t, double* weights) {
  for (int i = 0; i <= n; ++i) weights[i] = bernstein(i, n, t);
}

void bernstein_derivative_all(int n, double t, double* weights) {
  for (int i = 0; i <= n; ++i) weights[i] = bernstein_derivative(i, n, t);
}

BezierCurve::BezierCurve(int degree_, int dim_, std::vector<double> pts_)
    : degree(degree_), dim(dim_), pts(std::move(pts_)) {
  if (degree < 1 || degree > kMaxDegree)
    fail(ErrorCode::InvalidArgument,
         "curve degree " + std::to_string(degree) + " outside [1, " +
             std::to_string(kMaxDegree) + "]");
  if (dim < 1) fail(ErrorCode::InvalidArgument, "curve dim must be >= 1");
  if (pts.size() != size_t(degree + 1) * size_t(dim))
    fail(ErrorCode::InvalidArgument,
         "control point buffer holds " + std::to_string(pts.size()) +
             " values, expected " + std::to_string((degree + 1) * dim));
  for (double v : pts)
    if (!std::isfinite(v))
      fail(ErrorCode::InvalidArgument, "non-finite control point");
}

BezierCurve make_curve3(int degree, const std::vector<Vec3>& control_points) {
  std::vector<double> flat;
  flat.reserve(control_points.size() * 3);
  for (const Vec3& p : control_points) {
    flat.push_back(p.x);
    flat.push_back(p.y);
    flat.push_back(p.z);
  }
  return BezierCurve(degree, 3, std::move(flat));
}

BezierCurve make_curve1(const std::vector<double>& control_values) {
  return BezierCurve(int(control_values.size()) - 1, 1, control_values);
}

void evaluate(const BezierCurve& curve, double t, double* out) {
  const int n = curve.degree, d = curve.dim;
  std::array<double, kMaxDegree + 1> w;
  bernstein_all(n, t, w.data());
  for (int c = 0; c < d; ++c) out[c] = 0.0;
  for (int i = 0; i <= n; ++i)
    for (int c = 0; c < d; ++c) out[c] += w[i] * curve.pts[i * d + c];
}

void derivative(const BezierCurve& curve, double t, double* out) {
  const int n = curve.degree, d = curve.dim;
  std::array<double, kMaxDegree + 1> w;
  bernstein_derivative_all(n, t, w.data());
  for (int c = 0; c < d; ++c) out[c] = 0.0;
  for (int i = 0; i <= n; ++i)
    for (int c = 0; c < d; ++c) out[c] += w[i] * curve.pts[i * d + c];
}

void second_derivative(const BezierCurve& curve, double t, double* out) {
  // d2/dt2 p(t) = n(n-1) sum_i b_{i,n-2}(t) (p_{i+2} - 2 p_{i+1} + p_i)
  const int n = curve.degree, d = curve.dim;
  for (int c = 0; c < d; ++c) out[c] = 0.0;
  if (n < 2) return;
  std::array<double, kMaxDegree + 1> w;
  bernstein_all(n - 2, t, w.data());
  double f = double(n) * double(n - 1);
  for (int i = 0; i <= n - 2; ++i)
    for (int c = 0; c < d; ++c)
      out[c] += f * w[i] *
                (curve.pts[(i + 2) * d + c] - 2.0 * curve.pts[(i + 1) * d + c] +
                 curve.pts[i * d + c]);
}

Vec3 evaluate3(const BezierCurve& curve, double t) {
  Vec3 v;
  evaluate(curve, t, &v.x);
  return v;
}
Vec3 derivative3(const BezierCurve& curve, double t) {
  Vec3 v;
  derivative(curve, t, &v.x);
  return v;
}
Vec3 second_derivative3(const BezierCurve& curve, double t) {
  Vec3 v;
  second_derivative(curve, t, &v.x);
  return v;
}
double evaluate1(const BezierCurve& curve, double t) {
  double v;
  evaluate(curve, t, &v);
  return v;
}
double derivative1(const BezierCurve& curve, double t) {
  double v;
  derivative(curve, t, &v);
  return v;
}

EvaluateAdjoint evaluate_adjoint(const BezierCurve& curve, double t,
                                 std::span<const double> cotangent) {
  const int n = curve.degree, d = curve.dim;
  if (int(cotangent.size()) != d)
    fail(ErrorCode::InvalidArgument, "cotangent dim mismatch");
  EvaluateAdjoint adj;
  adj.d_control_points.assign(size_t(n + 1) * size_t(d), 0.0);
  std::array<double, kMaxDegree + 1> w;
  bernstein_all(n, t, w.data());
  for (int i = 0; i <= n; ++i)
    for (int c = 0; c < d; ++c)
      adj.d_control_points[i * d + c] = w[i] * cotangent[c];
  std::vector<double> der(d);
  derivative(curve, t, der.data());
  adj.d_t = 0.0;
  for (int c = 0; c < d; ++c) adj.d_t += cotangent[c] * der[c];
  return adj;
}

PiecewiseBezier make_piecewise(std::vector<BezierCurve> segments,
                               std::vector<double> boundaries) {
  if (segments.empty())
    fail(ErrorCode::InvalidArgument, "piecewise curve needs >= 1 segment");
  if (boundaries.size() != segments.size() + 1)
    fail(ErrorCode::InvalidArgument,
         "boundaries must have one more entry than segments");
  if (boundaries.front() != 0.0 || boundaries.back() != 1.0)
    fail(ErrorCode::InvalidArgument, "boundaries must start at 0 and end at 1");
  for (size_t k = 0; k + 1 < boundaries.size(); ++k)
    if (!(boundaries[k] < boundaries[k + 1]))
      fail(ErrorCode::InvalidArgument, "boundaries must be strictly increasing");
  const int d = segments.front().dim;
  for (const auto& s : segments)
    if (s.dim != d)
      fail(ErrorCode::InvalidArgument, "piecewise segments must share dim");
  for (size_t k = 0; k + 1 < segments.size(); ++k) {
    const BezierCurve& a = segments[k];
    const BezierCurve& b = segments[k + 1];
    for (int c = 0; c < d; ++c) {
      double end = a.pts[a.degree * d + c];
      double start = b.pts[c];
      if (std::abs(end - start) > 1e-9)
        fail(ErrorCode::InvalidArgument,
             "C0 break between segments " + std::to_string(k) + " and " +
                 std::to_string(k + 1));
    }
  }
  PiecewiseBezier pw;
  pw.segments = std::move(segments);
  pw.boundaries = std::move(boundaries);
  return pw;
}

void evaluate_piecewise(const PiecewiseBezier& pw, double t, double* out,
                        bool* clamped) {
  bool clip = false;
  if (t < 0.0) {
    t = 0.0;
    clip = true;
  } else if (t > 1.0) {
    t = 1.0;
    clip = true;
  }
  if (clamped) *clamped = clip;
  // Find segment k with boundaries[k] <= t <= boundaries[k+1].
  size_t k = 0;
  while (k + 1 < pw.segments.size() && t > pw.boundaries[k + 1]) ++k;
  double lo = pw.boundaries[k], hi = pw.boundaries[k + 1];
  double local = (t - lo) / (hi - lo);
  evaluate(pw.segments[k], local, out);
}

std::string curve_to_json(const BezierCurve& curve) {
  nlohmann::json j;
  j["degree"] = curve.degree;
  j["dim"] = curve.dim;
  nlohmann::json cps = nlohmann::json::array();
  for (int i = 0; i <= curve.degree; ++i) {
    nlohmann::json p = nlohmann::json::array();
    for (int c = 0; c < curve.dim; ++c) p.push_back(curve.ctrl(i, c));
    cps.push_back(std::move(p));
  }
  j["control_points"] = std::move(cps);
  return j.dump();
}

BezierCurve curve_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  int degree = j.at("degree").get<int>();
  int dim = j.at("dim").get<int>();
  std::vector<double> pts;
  for (const auto& p : j.at("control_points"))
    for (const auto& v : p) pts.push_back(v.get<double>());
  return BezierCurve(degree, dim, std::move(pts));
}

}  // namespace curvesplat
