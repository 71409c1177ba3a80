// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#include "curvesplat/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <vector>

#include "curvesplat/bezier.hpp"

namespace curvesplat {

namespace {

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
constexpr double kLogClamp = 1e-6;

double sgn(double x) { return (x > 0.0) ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

bool mask_on(double m) { return m > 0.5; }

// Normalized 11x11 Gaussian window, sigma 1.5.
const std::array<double, kWin * kWin>& ssim_window() {
  static const std::array<double, kWin * kWin> w = [] {
    std::array<double, kWin * kWin> out{};
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
      for (int j = 0; j < kWin; ++j) {
        const double di = i - kHalf, dj = j - kHalf;
        out[(size_t)(i * kWin + j)] =
            std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
        sum += out[(size_t)(i * kWin + j)];
      }
    }
    for (double& x : out) x /= sum;
    return out;
  }();
  return w;
}

void check_same_shape(int wa, int ha, int wb, int hb, const char* what) {
  if (wa != wb || ha != hb) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(what) + ": image shapes differ");
  }
}

}  // namespace

TermCoefficients term_coefficients(const LossWeights& w) {
  TermCoefficients c;
  c.l1 = 1.0 - w.lambda_r;
  c.ssim = w.lambda_r;
  c.sky = w.lambda_o_sky;
  c.icc = w.lambda_icc;
  c.dr = w.lambda_dr;
  c.vel = w.lambda_v;
  c.depth = w.lambda_d;
  return c;
}

double l1_loss(const Image3& a, const Image3& b, const Image1* mask,
               Image3* d_a, double w) {
  check_same_shape(a.width, a.height, b.width, b.height, "l1_loss");
  if (mask != nullptr) {
    check_same_shape(a.width, a.height, mask->width, mask->height, "l1_loss");
  }
  long long count = 0;
  double sum = 0.0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (mask != nullptr && !mask_on(mask->at(y, x))) continue;
      count += 3;
      for (int c = 0; c < 3; ++c) sum += std::abs(a.at(y, x, c) - b.at(y, x, c));
    }
  }
  if (count == 0) {
    std::cerr << "warning: l1_loss: empty mask, loss is 0\n";
    return 0.0;
  }
  if (d_a != nullptr) {
    const double s = w / (double)count;
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        if (mask != nullptr && !mask_on(mask->at(y, x))) continue;
        for (int c = 0; c < 3; ++c) {
          d_a->at(y, x, c) += s * sgn(a.at(y, x, c) - b.at(y, x, c));
        }
      }
    }
  }
  return sum / (double)count;
}

double l1_loss(const Image1& a, const Image1& b, const Image1* mask,
               Image1* d_a, double w) {
  check_same_shape(a.width, a.height, b.width, b.height, "l1_loss");
  if (mask != nullptr) {
    check_same_shape(a.width, a.height, mask->width, mask->height, "l1_loss");
  }
  long long count = 0;
  double sum = 0.0;
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      if (mask != nullptr && !mask_on(mask->at(y, x))) continue;
      ++count;
      sum += std::abs(a.at(y, x) - b.at(y, x));
    }
  }
  if (count == 0) {
    std::cerr << "warning: l1_loss: empty mask, loss is 0\n";
    return 0.0;
  }
  if (d_a != nullptr) {
    const double s = w / (double)count;
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        if (mask != nullptr && !mask_on(mask->at(y, x))) continue;
        d_a->at(y, x) += s * sgn(a.at(y, x) - b.at(y, x));
      }
    }
  }
  return sum / (double)count;
}

double ssim_loss(const Image3& a, const Image3& b, Image3* d_a, double w) {
  check_same_shape(a.width, a.height, b.width, b.height, "ssim_loss");
  const int h = a.height, wd = a.width;
  if (h < kWin || wd < kWin) {
    throw Error(ErrorCode::InvalidArgument, "ssim_loss: image below 11x11");
  }
  const auto& win = ssim_window();
  const int nvy = h - kWin + 1, nvx = wd - kWin + 1;
  const size_t ncent = (size_t)nvy * nvx * 3;

  // Per-center statistics, stored so the value reduction and the adjoint
  // gather are order-fixed regardless of thread count.
  std::vector<double> s_val(ncent), mux_v(ncent), muy_v(ncent);
  std::vector<double> dmux_v, dsxx_v, dsxy_v;
  if (d_a != nullptr) {
    dmux_v.resize(ncent);
    dsxx_v.resize(ncent);
    dsxy_v.resize(ncent);
  }

#pragma omp parallel for schedule(static)
  for (long long ci = 0; ci < (long long)ncent; ++ci) {
    const int c = (int)(ci % 3);
    const int xc = (int)((ci / 3) % nvx);
    const int yc = (int)(ci / 3 / nvx);
    double mux = 0, muy = 0, saa = 0, sbb = 0, sab = 0;
    for (int i = 0; i < kWin; ++i) {
      for (int j = 0; j < kWin; ++j) {
        const double wk = win[(size_t)(i * kWin + j)];
        const double av = a.at(yc + i, xc + j, c);
        const double bv = b.at(yc + i, xc + j, c);
        mux += wk * av;
        muy += wk * bv;
        saa += wk * av * av;
        sbb += wk * bv * bv;
        sab += wk * av * bv;
      }
    }
    const double sxx = saa - mux * mux;
    const double syy = sbb - muy * muy;
    const double sxy = sab - mux * muy;
    const double a1 = 2.0 * mux * muy + kC1;
    const double a2 = 2.0 * sxy + kC2;
    const double b1 = mux * mux + muy * muy + kC1;
    const double b2 = sxx + syy + kC2;
    const double s = (a1 * a2) / (b1 * b2);
    s_val[(size_t)ci] = s;
    mux_v[(size_t)ci] = mux;
    muy_v[(size_t)ci] = muy;
    if (d_a != nullptr) {
      dmux_v[(size_t)ci] = 2.0 * muy * a2 / (b1 * b2) - 2.0 * mux * s / b1;
      dsxx_v[(size_t)ci] = -s / b2;
      dsxy_v[(size_t)ci] = 2.0 * a1 / (b1 * b2);
    }
  }

  double mean_s = 0.0;
  for (double s : s_val) mean_s += s;
  mean_s /= (double)ncent;

  if (d_a != nullptr) {
    const double scale = -w / (double)ncent;  // loss = 1 - mean(S)
#pragma omp parallel for schedule(static)
    for (long long pi = 0; pi < (long long)(a.pixels() * 3); ++pi) {
      const int c = (int)(pi % 3);
      const int x = (int)((pi / 3) % wd);
      const int y = (int)(pi / 3 / wd);
      const int yc0 = std::max(0, y - kWin + 1), yc1 = std::min(nvy - 1, y);
      const int xc0 = std::max(0, x - kWin + 1), xc1 = std::min(nvx - 1, x);
      double acc = 0.0;
      for (int yc = yc0; yc <= yc1; ++yc) {
        for (int xc = xc0; xc <= xc1; ++xc) {
          const size_t ci = ((size_t)yc * nvx + xc) * 3 + c;
          const double wk = win[(size_t)((y - yc) * kWin + (x - xc))];
          const double av = a.at(y, x, c), bv = b.at(y, x, c);
          acc += wk * (dmux_v[ci] + dsxx_v[ci] * 2.0 * (av - mux_v[ci]) +
                       dsxy_v[ci] * (bv - muy_v[ci]));
        }
      }
      d_a->v[(size_t)pi] += scale * acc;
    }
  }
  return 1.0 - mean_s;
}

double depth_loss(const Image1& inv_depth, const Image1& valid,
                  const Image1& rendered, Image1* d_rendered, double w) {
  check_same_shape(inv_depth.width, inv_depth.height, rendered.width,
                   rendered.height, "depth_loss");
  check_same_shape(inv_depth.width, inv_depth.height, valid.width, valid.height,
                   "depth_loss");
  long long count = 0;
  double sum = 0.0;
  for (size_t i = 0; i < inv_depth.v.size(); ++i) {
    if (!mask_on(valid.v[i])) continue;
    ++count;
    sum += std::abs(inv_depth.v[i] - rendered.v[i]);
  }
  if (count == 0) {
    std::cerr << "warning: depth_loss: no valid depth pixels, loss is 0\n";
    return 0.0;
  }
  if (d_rendered != nullptr) {
    const double s = w / (double)count;
    for (size_t i = 0; i < inv_depth.v.size(); ++i) {
      if (!mask_on(valid.v[i])) continue;
      d_rendered->v[i] += s * sgn(rendered.v[i] - inv_depth.v[i]);
    }
  }
  return sum / (double)count;
}

double sky_opacity_loss(const Image1& sky_mask, const Image1& opacity,
                        Image1* d_opacity, double w) {
  check_same_shape(sky_mask.width, sky_mask.height, opacity.width,
                   opacity.height, "sky_opacity_loss");
  long long count = 0;
  double sum = 0.0;
  for (size_t i = 0; i < sky_mask.v.size(); ++i) {
    if (!mask_on(sky_mask.v[i])) continue;
    ++count;
    sum -= std::log(std::max(1.0 - opacity.v[i], kLogClamp));
  }
  if (count == 0) return 0.0;
  if (d_opacity != nullptr) {
    const double s = w / (double)count;
    for (size_t i = 0; i < sky_mask.v.size(); ++i) {
      if (!mask_on(sky_mask.v[i])) continue;
      const double rem = 1.0 - opacity.v[i];
      if (rem > kLogClamp) d_opacity->v[i] += s / rem;
    }
  }
  return sum / (double)count;
}

double inter_curve_consistency(const Scene& scene, double tau,
                               SceneGrads* grads, double w) {
  if (scene.dynamics.empty()) return 0.0;
  const size_t n_dyn = scene.dynamics.size();
  std::vector<double> vals(n_dyn);
  std::vector<double> bw((size_t)kMaxDegree + 1);

  for (size_t i = 0; i < n_dyn; ++i) {
    const DynamicGaussian& g = scene.dynamics[i];
    const ObjectTrack& tr = scene.track_for(g.group);
    const TimeSample ts = time_to_bezier(tr, tau);
    const Vec3 del = evaluate3(g.offset_curve, ts.t);
    const int n = g.offset_curve.degree;
    const Vec3 p0 = g.offset_curve.ctrl3(0);
    const Vec3 pn = g.offset_curve.ctrl3(n);
    const double nd = del.norm(), n0 = p0.norm(), nn = pn.norm();
    const double x = nd - 0.5 * (n0 + nn);
    vals[i] = std::abs(x);

    if (grads != nullptr) {
      const double s = sgn(x) * w / (double)n_dyn;
      std::vector<double>& oc = grads->offset_ctrl[i];
      if (nd > 1e-12) {
        const Vec3 dir = del * (1.0 / nd);
        bernstein_all(n, ts.t, bw.data());
        for (int k = 0; k <= n; ++k) {
          oc[(size_t)k * 3 + 0] += s * dir.x * bw[(size_t)k];
          oc[(size_t)k * 3 + 1] += s * dir.y * bw[(size_t)k];
          oc[(size_t)k * 3 + 2] += s * dir.z * bw[(size_t)k];
        }
        const double d_t = s * dir.dot(derivative3(g.offset_curve, ts.t));
        scatter_time_gradient(tr, ts, d_t, 0.0,
                              grads->time_values[(size_t)(g.group - 1)]);
      }
      if (n0 > 1e-12) {
        const Vec3 d0 = p0 * (-0.5 * s / n0);
        oc[0] += d0.x;
        oc[1] += d0.y;
        oc[2] += d0.z;
      }
      if (nn > 1e-12) {
        const Vec3 dn = pn * (-0.5 * s / nn);
        oc[(size_t)n * 3 + 0] += dn.x;
        oc[(size_t)n * 3 + 1] += dn.y;
        oc[(size_t)n * 3 + 2] += dn.z;
      }
    }
  }
  // Value-sorted summation keeps the mean independent of primitive order.
  std::vector<double> sorted = vals;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  return sum / (double)n_dyn;
}

double dynamic_rendering_loss(const Image3& gt, const Image1& dyn_mask,
                              const RenderOutput& dyn, double lambda_r,
                              RenderCotangents* cot, double w) {
  check_same_shape(gt.width, gt.height, dyn.color.width, dyn.color.height,
                   "dynamic_rendering_loss");
  check_same_shape(gt.width, gt.height, dyn_mask.width, dyn_mask.height,
                   "dynamic_rendering_loss");
  Image3 masked_gt(gt.width, gt.height, 0.0);
  Image1 mask_img(gt.width, gt.height, 0.0);
  for (int y = 0; y < gt.height; ++y) {
    for (int x = 0; x < gt.width; ++x) {
      const double m = mask_on(dyn_mask.at(y, x)) ? 1.0 : 0.0;
      mask_img.at(y, x) = m;
      for (int c = 0; c < 3; ++c) masked_gt.at(y, x, c) = m * gt.at(y, x, c);
    }
  }
  Image3* dc = cot != nullptr ? &cot->d_color : nullptr;
  Image1* doo = cot != nullptr ? &cot->d_opacity : nullptr;
  const double v_l1 =
      l1_loss(dyn.color, masked_gt, nullptr, dc, w * (1.0 - lambda_r));
  const double v_ssim = ssim_loss(dyn.color, masked_gt, dc, w * lambda_r);
  const double v_o = l1_loss(dyn.opacity, mask_img, nullptr, doo, w);
  return (1.0 - lambda_r) * v_l1 + lambda_r * v_ssim + v_o;
}

double velocity_loss(const Image3& velocity, const Image1& dyn_mask,
                     Image3* d_velocity, double w) {
  check_same_shape(velocity.width, velocity.height, dyn_mask.width,
                   dyn_mask.height, "velocity_loss");
  double sq = 0.0;
  for (int y = 0; y < velocity.height; ++y) {
    for (int x = 0; x < velocity.width; ++x) {
      const double rem = mask_on(dyn_mask.at(y, x)) ? 0.0 : 1.0;
      for (int c = 0; c < 3; ++c) {
        const double t = velocity.at(y, x, c) * rem;
        sq += t * t;
      }
    }
  }
  const double npix = (double)velocity.pixels();
  const double nrm = std::sqrt(sq);
  if (d_velocity != nullptr && nrm > 0.0) {
    const double s = w / (nrm * npix);
    for (int y = 0; y < velocity.height; ++y) {
      for (int x = 0; x < velocity.width; ++x) {
        const double rem = mask_on(dyn_mask.at(y, x)) ? 0.0 : 1.0;
        for (int c = 0; c < 3; ++c) {
          d_velocity->at(y, x, c) += s * rem * velocity.at(y, x, c);
        }
      }
    }
  }
  return nrm / npix;
}

const char* LossBreakdown::csv_header() {
  return "iter,l1,ssim,sky,icc,dr,vel,depth,total";
}

std::string LossBreakdown::csv_row(long long iter) const {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g", iter, l1, ssim,
                sky, icc, dr, vel, depth, total);
  return std::string(buf);
}

LossBreakdown total_loss_weighted(const RenderOutput& full,
                                  const RenderOutput& dyn,
                                  const FrameSupervision& sup,
                                  const Scene& scene, double tau,
                                  const TermCoefficients& c,
                                  double lambda_r_dyn,
                                  RenderCotangents* cot_full,
                                  RenderCotangents* cot_dyn,
                                  SceneGrads* direct_grads) {
  LossBreakdown out;
  Image3* d_fc = cot_full != nullptr ? &cot_full->d_color : nullptr;
  Image1* d_fd = cot_full != nullptr ? &cot_full->d_invdepth : nullptr;
  Image1* d_fo = cot_full != nullptr ? &cot_full->d_opacity : nullptr;
  Image3* d_dv = cot_dyn != nullptr ? &cot_dyn->d_velocity : nullptr;

  out.l1 = l1_loss(full.color, sup.gt, nullptr, d_fc, c.l1);
  out.ssim = ssim_loss(full.color, sup.gt, d_fc, c.ssim);
  out.sky = sky_opacity_loss(sup.sky_mask, full.opacity, d_fo, c.sky);
  out.icc = inter_curve_consistency(scene, tau, direct_grads, c.icc);
  out.dr = dynamic_rendering_loss(sup.gt, sup.dyn_mask, dyn, lambda_r_dyn,
                                  cot_dyn, c.dr);
  out.vel = velocity_loss(dyn.velocity, sup.dyn_mask, d_dv, c.vel);
  out.depth = depth_loss(sup.inv_depth, sup.depth_valid, full.invdepth, d_fd,
                         c.depth);
  out.total = c.l1 * out.l1 + c.ssim * out.ssim + c.sky * out.sky +
              c.icc * out.icc + c.dr * out.dr + c.vel * out.vel +
              c.depth * out.depth;
  return out;
}

LossBreakdown total_loss(const RenderOutput& full, const RenderOutput& dyn,
                         const FrameSupervision& sup, const Scene& scene,
                         double tau, const LossWeights& weights,
                         RenderCotangents* cot_full, RenderCotangents* cot_dyn,
                         SceneGrads* direct_grads) {
  return total_loss_weighted(full, dyn, sup, scene, tau,
                             term_coefficients(weights), weights.lambda_r,
                             cot_full, cot_dyn, direct_grads);
}

}  // namespace curvesplat
