// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "curvesplat/bezier.hpp"
#include "test_support.hpp"

using namespace curvesplat;
using curvesplat::testing::Rng;
using curvesplat::testing::random_cubic3;
using curvesplat::testing::random_vec3;
using curvesplat::testing::urand;

TEST_CASE("bernstein basis values") {
  CHECK(bernstein(0, 3, 0.0) == 1.0);
  CHECK(bernstein(3, 3, 1.0) == 1.0);
  CHECK(bernstein(1, 3, 0.5) == doctest::Approx(0.375).epsilon(1e-15));

  double sum = 0.0;
  for (int i = 0; i <= 3; ++i) sum += bernstein(i, 3, 0.37);
  CHECK(std::abs(sum - 1.0) <= 1e-15);

  CHECK_THROWS_AS(bernstein(4, 3, 0.5), Error);
  CHECK_THROWS_AS(bernstein_derivative(5, 4, 0.5), Error);
}

TEST_CASE("bernstein derivative endpoints and identities") {
  CHECK(bernstein_derivative(0, 3, 0.0) == -3.0);
  CHECK(bernstein_derivative(1, 3, 0.0) == 3.0);
  CHECK(bernstein_derivative(2, 3, 0.0) == 0.0);
  CHECK(bernstein_derivative(3, 3, 1.0) == 3.0);
  CHECK(bernstein_derivative(2, 3, 1.0) == -3.0);

  double sum = 0.0;
  for (int i = 0; i <= 3; ++i) sum += bernstein_derivative(i, 3, 0.42);
  CHECK(std::abs(sum) <= 1e-14);
}

TEST_CASE("bernstein derivative matches central difference") {
  const double h = 1e-6;
  double fd = (bernstein(2, 3, 0.3 + h) - bernstein(2, 3, 0.3 - h)) / (2 * h);
  CHECK(std::abs(bernstein_derivative(2, 3, 0.3) - fd) <= 1e-8);

  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 1 + int(urand(rng, 0.0, 9.0));
    int i = int(urand(rng, 0.0, double(n) + 0.999));
    double t = urand(rng, 0.02, 0.98);
    double fd2 = (bernstein(i, n, t + h) - bernstein(i, n, t - h)) / (2 * h);
    CHECK(std::abs(bernstein_derivative(i, n, t) - fd2) <= 1e-8);
  }
}

TEST_CASE("evaluate endpoint interpolation is exact") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    BezierCurve c = random_cubic3(rng);
    Vec3 at0 = evaluate3(c, 0.0);
    Vec3 at1 = evaluate3(c, 1.0);
    CHECK(at0.x == c.ctrl3(0).x);
    CHECK(at0.y == c.ctrl3(0).y);
    CHECK(at0.z == c.ctrl3(0).z);
    CHECK(at1.x == c.ctrl3(3).x);
    CHECK(at1.y == c.ctrl3(3).y);
    CHECK(at1.z == c.ctrl3(3).z);
  }
}

TEST_CASE("evaluate has linear precision") {
  Vec3 p0{1, 2, 3}, p3{7, -4, 9};
  std::vector<Vec3> cp{p0, p0 + (p3 - p0) * (1.0 / 3.0),
                       p0 + (p3 - p0) * (2.0 / 3.0), p3};
  BezierCurve c = make_curve3(3, cp);
  for (double t : {0.1, 0.35, 0.5, 0.77}) {
    Vec3 expect = p0 + (p3 - p0) * t;
    Vec3 got = evaluate3(c, t);
    CHECK((got - expect).norm() <= 1e-12);
    Vec3 d = derivative3(c, t);
    CHECK((d - (p3 - p0)).norm() <= 1e-12);
  }
}

TEST_CASE("derivative endpoint tangents and FD oracle") {
  Rng rng(13);
  BezierCurve c = random_cubic3(rng);
  Vec3 d0 = derivative3(c, 0.0);
  Vec3 expect = (c.ctrl3(1) - c.ctrl3(0)) * 3.0;
  CHECK((d0 - expect).norm() <= 1e-12);

  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    BezierCurve r = random_cubic3(rng);
    double t = trial == 0 ? 0.61 : urand(rng, 0.01, 0.99);
    Vec3 fd = (evaluate3(r, t + h) - evaluate3(r, t - h)) * (1.0 / (2 * h));
    CHECK((derivative3(r, t) - fd).norm() <= 1e-6);
  }
}

TEST_CASE("second derivative matches FD of derivative") {
  Rng rng(17);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    BezierCurve r = random_cubic3(rng);
    double t = urand(rng, 0.05, 0.95);
    Vec3 fd = (derivative3(r, t + h) - derivative3(r, t - h)) * (1.0 / (2 * h));
    CHECK((second_derivative3(r, t) - fd).norm() <= 1e-5);
  }
}

TEST_CASE("evaluate is affine equivariant") {
  Rng rng(19);
  for (int trial = 0; trial < 100; ++trial) {
    BezierCurve c = random_cubic3(rng);
    Mat3 a;
    for (int k = 0; k < 9; ++k) a.m[k] = urand(rng, -2.0, 2.0);
    Vec3 b = random_vec3(rng, -5.0, 5.0);
    std::vector<Vec3> mapped;
    for (int i = 0; i <= 3; ++i) mapped.push_back(a * c.ctrl3(i) + b);
    BezierCurve cm = make_curve3(3, mapped);
    double t = urand(rng, 0.0, 1.0);
    Vec3 lhs = evaluate3(cm, t);
    Vec3 rhs = a * evaluate3(c, t) + b;
    CHECK((lhs - rhs).norm() <= 1e-10);
  }
}

TEST_CASE("partition of unity up to degree 10") {
  Rng rng(23);
  for (int n = 1; n <= 10; ++n) {
    for (int trial = 0; trial < 200; ++trial) {
      double t = urand(rng, 0.0, 1.0);
      double sum = 0.0;
      for (int i = 0; i <= n; ++i) sum += bernstein(i, n, t);
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("convex hull box property") {
  Rng rng(29);
  for (int trial = 0; trial < 100; ++trial) {
    BezierCurve c = random_cubic3(rng);
    Vec3 lo = c.ctrl3(0), hi = c.ctrl3(0);
    for (int i = 1; i <= 3; ++i) {
      Vec3 p = c.ctrl3(i);
      for (int k = 0; k < 3; ++k) {
        lo[k] = std::min(lo[k], p[k]);
        hi[k] = std::max(hi[k], p[k]);
      }
    }
    for (int s = 0; s <= 20; ++s) {
      Vec3 p = evaluate3(c, s / 20.0);
      for (int k = 0; k < 3; ++k) {
        CHECK(p[k] >= lo[k] - 1e-12);
        CHECK(p[k] <= hi[k] + 1e-12);
      }
    }
  }
}

TEST_CASE("evaluate_adjoint matches finite differences") {
  Rng rng(31);
  BezierCurve c = random_cubic3(rng);

  std::vector<double> zero{0.0, 0.0, 0.0};
  EvaluateAdjoint adj0 = evaluate_adjoint(c, 0.4, zero);
  for (double g : adj0.d_control_points) CHECK(g == 0.0);
  CHECK(adj0.d_t == 0.0);

  std::vector<double> cot{0.7, -1.2, 0.4};
  EvaluateAdjoint adj_t0 = evaluate_adjoint(c, 0.0, cot);
  for (int ccomp = 0; ccomp < 3; ++ccomp)
    CHECK(adj_t0.d_control_points[ccomp] == cot[ccomp]);
  for (size_t k = 3; k < adj_t0.d_control_points.size(); ++k)
    CHECK(adj_t0.d_control_points[k] == 0.0);

  const double h = 1e-6;
  for (int trial = 0; trial < 25; ++trial) {
    BezierCurve r = random_cubic3(rng, -3.0, 3.0);
    double t = urand(rng, 0.05, 0.95);
    std::vector<double> w{urand(rng, -1, 1), urand(rng, -1, 1), urand(rng, -1, 1)};
    EvaluateAdjoint adj = evaluate_adjoint(r, t, w);
    // scalar functional f = dot(w, evaluate(r, t))
    auto f = [&](const BezierCurve& q, double tt) {
      Vec3 v = evaluate3(q, tt);
      return w[0] * v.x + w[1] * v.y + w[2] * v.z;
    };
    for (size_t k = 0; k < r.pts.size(); ++k) {
      BezierCurve plus = r, minus = r;
      plus.pts[k] += h;
      minus.pts[k] -= h;
      double fd = (f(plus, t) - f(minus, t)) / (2 * h);
      CHECK(std::abs(adj.d_control_points[k] - fd) <= 1e-7);
    }
    double fd_t = (f(r, t + h) - f(r, t - h)) / (2 * h);
    CHECK(std::abs(adj.d_t - fd_t) <= 1e-7);
  }
}

TEST_CASE("piecewise evaluation") {
  // Two cubics meeting at (1,0,0), boundary at global t = 0.4.
  std::vector<Vec3> a{{0, 0, 0}, {0.4, 0.5, 0}, {0.8, 0.5, 0}, {1, 0, 0}};
  std::vector<Vec3> b{{1, 0, 0}, {1.2, -0.5, 0}, {1.8, -0.5, 0}, {2, 0, 0}};
  PiecewiseBezier pw = make_piecewise({make_curve3(3, a), make_curve3(3, b)},
                                      {0.0, 0.4, 1.0});

  Vec3 at_boundary;
  evaluate_piecewise(pw, 0.4, &at_boundary.x);
  CHECK((at_boundary - Vec3{1, 0, 0}).norm() <= 1e-12);

  // Single-segment piecewise behaves exactly like evaluate.
  PiecewiseBezier single = make_piecewise({make_curve3(3, a)}, {0.0, 1.0});
  for (double t : {0.0, 0.25, 0.7, 1.0}) {
    Vec3 got;
    evaluate_piecewise(single, t, &got.x);
    CHECK((got - evaluate3(single.segments[0], t)).norm() == 0.0);
  }

  // Dense sampling: adjacent samples differ by no more than a local
  // Lipschitz bound times the spacing.
  double max_deriv = 0.0;
  for (int s = 0; s <= 400; ++s) {
    double t = s / 400.0;
    Vec3 d;
    size_t k = t <= 0.4 ? 0 : 1;
    double lo = pw.boundaries[k], hi = pw.boundaries[k + 1];
    derivative(pw.segments[k], (t - lo) / (hi - lo), &d.x);
    max_deriv = std::max(max_deriv, d.norm() / (hi - lo));
  }
  Vec3 prev;
  evaluate_piecewise(pw, 0.0, &prev.x);
  for (int s = 1; s <= 400; ++s) {
    Vec3 cur;
    evaluate_piecewise(pw, s / 400.0, &cur.x);
    CHECK((cur - prev).norm() <= max_deriv * (1.0 / 400.0) * 1.01 + 1e-12);
    prev = cur;
  }

  // Clamping flags out-of-range parameters.
  bool clamped = false;
  Vec3 v;
  evaluate_piecewise(pw, -0.5, &v.x, &clamped);
  CHECK(clamped);
  CHECK((v - Vec3{0, 0, 0}).norm() <= 1e-12);
  evaluate_piecewise(pw, 0.5, &v.x, &clamped);
  CHECK(!clamped);

  // C0 violation is rejected.
  std::vector<Vec3> broken{{1.1, 0, 0}, {1.2, 0, 0}, {1.8, 0, 0}, {2, 0, 0}};
  CHECK_THROWS_AS(
      make_piecewise({make_curve3(3, a), make_curve3(3, broken)}, {0.0, 0.4, 1.0}),
      Error);
}

TEST_CASE("curve JSON round-trips bit-exactly") {
  Rng rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    BezierCurve c = random_cubic3(rng, -100.0, 100.0);
    BezierCurve back = curve_from_json(curve_to_json(c));
    CHECK(back.degree == c.degree);
    CHECK(back.dim == c.dim);
    REQUIRE(back.pts.size() == c.pts.size());
    for (size_t k = 0; k < c.pts.size(); ++k) {
      CHECK(std::memcmp(&back.pts[k], &c.pts[k], sizeof(double)) == 0);
    }
  }
}
