// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#include "curvesplat/fitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <string>

#include "curvesplat/core.hpp"

namespace curvesplat {

namespace {

size_t point_count(const std::vector<double>& points, int dim) {
  if (dim < 1) fail(ErrorCode::InvalidArgument, "point dim must be >= 1");
  if (points.empty() || points.size() % size_t(dim) != 0)
    fail(ErrorCode::InvalidArgument,
         "point buffer size " + std::to_string(points.size()) +
             " is not a multiple of dim " + std::to_string(dim));
  return points.size() / size_t(dim);
}

double dist2(const double* a, const double* b, int dim) {
  double s = 0.0;
  for (int c = 0; c < dim; ++c) {
    double d = a[c] - b[c];
    s += d * d;
  }
  return s;
}

// Householder QR least squares: minimizes |A x - b| column by column.
// a is row-major rows x cols (destroyed), b row-major rows x nrhs
// (destroyed), x row-major cols x nrhs. cond_estimate receives
// max|R_jj| / min|R_jj| (infinity on a zero diagonal entry).
void lstsq_qr(std::vector<double>& a, std::vector<double>& b, int rows,
              int cols, int nrhs, std::vector<double>& x,
              double* cond_estimate) {
  std::vector<double> v(rows);
  for (int j = 0; j < cols; ++j) {
    double norm = 0.0;
    for (int i = j; i < rows; ++i) norm += a[i * cols + j] * a[i * cols + j];
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;  // R_jj stays 0; reported via cond_estimate
    double alpha = a[j * cols + j] >= 0.0 ? -norm : norm;
    double vtv = 0.0;
    v[j] = a[j * cols + j] - alpha;
    vtv += v[j] * v[j];
    for (int i = j + 1; i < rows; ++i) {
      v[i] = a[i * cols + j];
      vtv += v[i] * v[i];
    }
    if (vtv == 0.0) continue;
    for (int l = j; l < cols; ++l) {
      double s = 0.0;
      for (int i = j; i < rows; ++i) s += v[i] * a[i * cols + l];
      s = 2.0 * s / vtv;
      for (int i = j; i < rows; ++i) a[i * cols + l] -= s * v[i];
    }
    for (int l = 0; l < nrhs; ++l) {
      double s = 0.0;
      for (int i = j; i < rows; ++i) s += v[i] * b[i * nrhs + l];
      s = 2.0 * s / vtv;
      for (int i = j; i < rows; ++i) b[i * nrhs + l] -= s * v[i];
    }
  }
  double dmax = 0.0, dmin = std::numeric_limits<double>::infinity();
  for (int j = 0; j < cols; ++j) {
    double d = std::abs(a[j * cols + j]);
    dmax = std::max(dmax, d);
    dmin = std::min(dmin, d);
  }
  *cond_estimate = dmin == 0.0 ? std::numeric_limits<double>::infinity()
                               : dmax / dmin;
  x.assign(size_t(cols) * size_t(nrhs), 0.0);
  if (!std::isfinite(*cond_estimate)) return;
  for (int j = cols - 1; j >= 0; --j) {
    for (int l = 0; l < nrhs; ++l) {
      double s = b[j * nrhs + l];
      for (int k = j + 1; k < cols; ++k) s -= a[j * cols + k] * x[k * nrhs + l];
      x[j * nrhs + l] = s / a[j * cols + j];
    }
  }
}

std::string describe_clustering(const std::vector<double>& params) {
  double lo = params[0], hi = params[0];
  std::set<long long> distinct;
  for (double t : params) {
    lo = std::min(lo, t);
    hi = std::max(hi, t);
    distinct.insert(llround(t * 1e12));
  }
  return std::to_string(params.size()) + " params with " +
         std::to_string(distinct.size()) + " distinct values in [" +
         std::to_string(lo) + ", " + std::to_string(hi) + "]";
}

double rms_at(const BezierCurve& curve, const std::vector<double>& points,
              int dim, const std::vector<double>& params) {
  size_t m = params.size();
  std::vector<double> p(dim);
  double s = 0.0;
  for (size_t i = 0; i < m; ++i) {
    evaluate(curve, params[i], p.data());
    s += dist2(p.data(), &points[i * dim], dim);
  }
  return std::sqrt(s / double(m));
}

}  // namespace

ChordParams chord_length_params(const std::vector<double>& points, int dim) {
  size_t m = point_count(points, dim);
  if (m < 2) fail(ErrorCode::InvalidArgument, "need at least 2 points");
  ChordParams out;
  out.values.resize(m);
  out.values[0] = 0.0;
  double total = 0.0;
  for (size_t i = 1; i < m; ++i) {
    double seg = std::sqrt(dist2(&points[i * dim], &points[(i - 1) * dim], dim));
    if (seg == 0.0) out.duplicate_points = true;
    total += seg;
    out.values[i] = total;
  }
  if (total == 0.0)
    fail(ErrorCode::DegenerateInput,
         "all points identical: zero total chord length");
  for (size_t i = 1; i + 1 < m; ++i) out.values[i] /= total;
  out.values[m - 1] = 1.0;
  return out;
}

BezierCurve solve_control_points(const std::vector<double>& points, int dim,
                                 const std::vector<double>& params,
                                 int degree) {
  size_t m = point_count(points, dim);
  if (params.size() != m)
    fail(ErrorCode::InvalidArgument, "params/points count mismatch");
  if (m < size_t(degree + 1))
    fail(ErrorCode::InsufficientData,
         "need at least degree+1 points, got " + std::to_string(m));
  for (double t : params)
    if (!(t >= 0.0 && t <= 1.0))
      fail(ErrorCode::InvalidArgument, "param outside [0,1]");

  const int rows = int(m), cols = degree + 1;
  std::vector<double> design(size_t(rows) * cols);
  for (int i = 0; i < rows; ++i)
    bernstein_all(degree, params[i], &design[size_t(i) * cols]);
  std::vector<double> rhs(points);
  std::vector<double> ctrl;
  double cond = 0.0;
  lstsq_qr(design, rhs, rows, cols, dim, ctrl, &cond);
  if (cond > 1e12)
    fail(ErrorCode::IllConditioned,
         "design matrix condition estimate " + std::to_string(cond) + ": " +
             describe_clustering(params));
  return BezierCurve(degree, dim, std::move(ctrl));
}

double nearest_parameter(const BezierCurve& curve, const double* point,
                         double init) {
  if (!(init >= 0.0 && init <= 1.0))
    fail(ErrorCode::InvalidArgument, "init parameter outside [0,1]");
  const int dim = curve.dim;
  std::vector<double> p(dim), d1(dim), d2(dim);
  auto sq = [&](double t) {
    evaluate(curve, t, p.data());
    return dist2(p.data(), point, dim);
  };

  double best_t = init;
  double best_d = sq(init);
  bool diverged = false;
  double t = init;
  for (int iter = 0; iter < 20; ++iter) {
    evaluate(curve, t, p.data());
    derivative(curve, t, d1.data());
    second_derivative(curve, t, d2.data());
    double g = 0.0, h = 0.0;
    for (int c = 0; c < dim; ++c) {
      double e = p[c] - point[c];
      g += 2.0 * e * d1[c];
      h += 2.0 * (d1[c] * d1[c] + e * d2[c]);
    }
    if (g == 0.0) break;
    if (!(h > 0.0) || !std::isfinite(g)) {
      diverged = true;
      break;
    }
    double next = std::clamp(t - g / h, 0.0, 1.0);
    if (std::abs(next - t) < 1e-10) {
      t = next;
      break;
    }
    t = next;
  }
  double dt = sq(t);
  if (dt <= best_d) {
    best_t = t;
    best_d = dt;
  } else {
    diverged = true;
  }

  if (diverged) {
    // Golden-section over the full parameter range, 50 evaluations.
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = 0.0, b = 1.0;
    double c = b - gr * (b - a), d = a + gr * (b - a);
    double fc = sq(c), fd = sq(d);
    for (int evals = 2; evals < 50; ++evals) {
      if (fc < fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - gr * (b - a);
        fc = sq(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + gr * (b - a);
        fd = sq(d);
      }
    }
    double tg = fc < fd ? c : fd < fc ? d : 0.5 * (c + d);
    double dg = sq(tg);
    if (dg < best_d) {
      best_t = tg;
      best_d = dg;
    }
  }
  return best_t;
}

namespace {

// One alternation round: least-squares control points at the current params,
// then per-point re-projection. The first and last params stay pinned at 0
// and 1; without that the iteration can drift the data into a sub-range of
// the curve domain, which leaves the fitted control points underdetermined.
// Each interior point is re-projected from two seeds, its previous parameter
// and the argmin of a coarse curve scan, so samples near a self-intersection
// can jump branches instead of stalling. Returns the RMS after the round.
double alternation_round(const std::vector<double>& points, int dim,
                         int degree, std::vector<double>& params,
                         BezierCurve& curve) {
  const size_t m = params.size();
  curve = solve_control_points(points, dim, params, degree);
  const int kScan = 33;
  std::vector<double> scan(size_t(kScan) * dim);
  for (int s = 0; s < kScan; ++s)
    evaluate(curve, s / double(kScan - 1), &scan[size_t(s) * dim]);
  params.front() = 0.0;
  params.back() = 1.0;
#pragma omp parallel for schedule(static)
  for (long long i = 1; i < (long long)m - 1; ++i) {
    const double* p = &points[size_t(i) * dim];
    int arg = 0;
    double best = dist2(&scan[0], p, dim);
    for (int s = 1; s < kScan; ++s) {
      double d = dist2(&scan[size_t(s) * dim], p, dim);
      if (d < best) {
        best = d;
        arg = s;
      }
    }
    double t1 = nearest_parameter(curve, p, params[i]);
    double t2 = nearest_parameter(curve, p, arg / double(kScan - 1));
    std::vector<double> q(dim);
    evaluate(curve, t1, q.data());
    double d1 = dist2(q.data(), p, dim);
    evaluate(curve, t2, q.data());
    params[i] = dist2(q.data(), p, dim) < d1 ? t2 : t1;
  }
  return rms_at(curve, points, dim, params);
}

// One start of the alternating fit. Plain alternation converges linearly
// with a rate that approaches 1 on strongly curved data, so each iteration
// also tries an Anderson-extrapolated parameter vector (window 4) and keeps
// it only when the residual still decreases; the safeguard preserves both
// the fixed points and the monotone-residual invariant.
FitResult fit_one_start(const std::vector<double>& points, int dim, int degree,
                        std::vector<double> start, double tol, int max_iter,
                        double floor_res, std::vector<double>* history) {
  const size_t m = start.size();
  FitResult out;
  out.params = std::move(start);
  std::vector<std::vector<double>> xs, gs;  // iterates and their images
  double prev = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= max_iter; ++iter) {
    std::vector<double> x = out.params;
    double r;
    try {
      r = alternation_round(points, dim, degree, out.params, out.curve);
    } catch (const Error&) {
      // Re-projection collapsed the parameters; the rounds completed so far
      // are still a valid (monotone) fit state.
      if (iter > 1) break;
      throw;
    }
    xs.push_back(std::move(x));
    gs.push_back(out.params);
    if (xs.size() > 5) {
      xs.erase(xs.begin());
      gs.erase(gs.begin());
    }
    const size_t w = xs.size();
    if (w >= 3 && r > floor_res) {
      const size_t nv = w - 1;
      std::vector<double> design(m * nv), rhs(m);
      for (size_t i = 0; i < m; ++i) {
        double fk = gs[w - 1][i] - xs[w - 1][i];
        for (size_t j = 0; j < nv; ++j)
          design[i * nv + j] = (gs[j][i] - xs[j][i]) - fk;
        rhs[i] = -fk;
      }
      std::vector<double> coef;
      double cond = 0.0;
      lstsq_qr(design, rhs, int(m), int(nv), 1, coef, &cond);
      if (cond < 1e12) {
        std::vector<double> acc(m);
        for (size_t i = 0; i < m; ++i) {
          double v = gs[w - 1][i];
          for (size_t j = 0; j < nv; ++j)
            v += coef[j] * (gs[j][i] - gs[w - 1][i]);
          acc[i] = std::clamp(v, 0.0, 1.0);
        }
        std::vector<double> save = out.params;
        BezierCurve csave = out.curve;
        out.params = acc;
        double r2 = std::numeric_limits<double>::infinity();
        try {
          r2 = alternation_round(points, dim, degree, out.params, out.curve);
        } catch (const Error&) {
          // A failed extrapolation probe is just a rejected candidate.
        }
        if (r2 <= r) {
          r = r2;
          xs.back() = std::move(acc);
          gs.back() = out.params;
        } else {
          out.params = std::move(save);
          out.curve = std::move(csave);
        }
      }
    }
    out.residual = r;
    out.iterations = iter;
    if (history) history->push_back(r);
    if (std::abs(prev - r) < tol || r < floor_res) break;
    prev = r;
  }
  return out;
}

}  // namespace

FitResult fit(const std::vector<double>& points, int dim, int degree,
              double tol, int max_iter,
              std::vector<double>* residual_history) {
  if (!(tol > 0.0)) fail(ErrorCode::InvalidArgument, "tol must be > 0");
  const size_t m = point_count(points, dim);
  if (m < size_t(degree + 1))
    fail(ErrorCode::InsufficientData,
         "need at least degree+1 points, got " + std::to_string(m));

  double scale = 1.0;
  for (double v : points) scale = std::max(scale, std::abs(v));
  const double floor_res = 1e-12 * scale;

  const std::vector<double> chord = chord_length_params(points, dim).values;
  // The alternation can settle into a non-global joint minimum; a handful of
  // deterministic restarts (uniform params, then jittered copies of the best
  // params so far) picks the best basin. The reported history is the winning
  // start's, which is monotone by construction.
  std::mt19937_64 jitter_rng(17);
  FitResult best;
  std::vector<double> best_history;
  best.residual = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 6; ++s) {
    std::vector<double> start;
    if (s == 0) {
      start = chord;
    } else if (s == 1) {
      start.resize(m);
      for (size_t i = 0; i < m; ++i) start[i] = double(i) / double(m - 1);
    } else {
      start = best.params.empty() ? chord : best.params;
      std::uniform_real_distribution<double> d(-0.08, 0.08);
      for (double& v : start) v = std::clamp(v + d(jitter_rng), 0.0, 1.0);
      start.front() = 0.0;
      start.back() = 1.0;
    }
    std::vector<double> history;
    // A start whose very first round is ill-conditioned is a discarded
    // candidate, not a failure of the fit; the error propagates only when
    // every start dies.
    try {
      FitResult r = fit_one_start(points, dim, degree, std::move(start), tol,
                                  max_iter, floor_res, &history);
      if (r.residual < best.residual) {
        best = std::move(r);
        best_history = std::move(history);
      }
    } catch (const Error&) {
      if (s == 5 && !std::isfinite(best.residual)) throw;
    }
    if (best.residual < floor_res) break;
  }
  if (!std::isfinite(best.residual)) {
    fail(ErrorCode::IllConditioned, "every fit start was ill-conditioned");
  }
  if (residual_history) *residual_history = std::move(best_history);
  return best;
}

FitResult fit3(const std::vector<Vec3>& points, int degree, double tol,
               int max_iter) {
  std::vector<double> flat;
  flat.reserve(points.size() * 3);
  for (const Vec3& p : points) {
    flat.push_back(p.x);
    flat.push_back(p.y);
    flat.push_back(p.z);
  }
  return fit(flat, 3, degree, tol, max_iter);
}

BezierCurve fit_time_mapping(const std::vector<double>& timestamps,
                             const std::vector<double>& params, int degree,
                             bool* monotone) {
  const size_t m = timestamps.size();
  if (params.size() != m)
    fail(ErrorCode::InvalidArgument, "timestamps/params count mismatch");
  if (m < size_t(degree + 1))
    fail(ErrorCode::InsufficientData,
         "time mapping of degree " + std::to_string(degree) + " needs " +
             std::to_string(degree + 1) + " samples, got " +
             std::to_string(m));
  for (size_t i = 1; i < m; ++i)
    if (!(timestamps[i] > timestamps[i - 1]))
      fail(ErrorCode::InvalidArgument, "timestamps must be strictly increasing");

  const double t0 = timestamps.front(), span = timestamps.back() - t0;
  std::vector<double> tau(m);
  for (size_t i = 0; i < m; ++i) tau[i] = (timestamps[i] - t0) / span;
  tau.back() = 1.0;

  std::vector<double> ctrl(degree + 1);
  ctrl.front() = params.front();
  ctrl.back() = params.back();
  const int interior = degree - 1;
  if (interior > 0) {
    // Pinned endpoints move to the right-hand side.
    std::vector<double> design(m * size_t(interior)), rhs(m);
    std::vector<double> w(degree + 1);
    for (size_t i = 0; i < m; ++i) {
      bernstein_all(degree, tau[i], w.data());
      for (int j = 1; j < degree; ++j) design[i * interior + (j - 1)] = w[j];
      rhs[i] = params[i] - w[0] * ctrl.front() - w[degree] * ctrl.back();
    }
    std::vector<double> x;
    double cond = 0.0;
    lstsq_qr(design, rhs, int(m), interior, 1, x, &cond);
    if (cond > 1e12)
      fail(ErrorCode::IllConditioned,
           "time-mapping design matrix condition estimate " +
               std::to_string(cond));
    for (int j = 1; j < degree; ++j) ctrl[j] = x[j - 1];
  }
  BezierCurve curve(degree, 1, std::move(ctrl));
  if (monotone) {
    *monotone = true;
    for (int s = 0; s <= 1024; ++s) {
      double d;
      derivative(curve, s / 1024.0, &d);
      if (d < -1e-12) {
        *monotone = false;
        break;
      }
    }
  }
  return curve;
}

}  // namespace curvesplat
