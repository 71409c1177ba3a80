// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#include "curvesplat/rasterizer.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "curvesplat/core.hpp"
#include "curvesplat/cubemap.hpp"

namespace curvesplat {
namespace {

// Footprint cut in squared sigmas: wide enough that every contribution at or
// above max(alpha_skip, 1e-14) lies inside the box, never tighter than 3
// sigma. The 1e-14 floor keeps boxes finite when skipping is disabled while
// staying far below the reference-agreement tolerance.
double sigma_cut2(double opacity, const RasterConfig& cfg) {
  const double floor_a = std::max(cfg.alpha_skip, 1e-14);
  return 2.0 * std::max(std::log(opacity / floor_a), 4.5);
}

struct Splat {
  Vec2 xi;
  Sym2 cov;      // dilated screen covariance
  Sym2 conic;    // its inverse
  double depth = 0.0;
  double invz = 0.0;
  double opacity = 0.0;
  Vec3 rgb;      // SH-evaluated color
  Vec3 vel;
  Vec3 camp;     // camera-space position
  Vec3 dir;      // unit camera-to-primitive direction (world)
  double dir_len = 0.0;
  double a[2][3] = {};  // projection A = J R
  int idx = 0;   // index into the renderables array
};

std::vector<Renderable> gather_subset(const Scene& scene, double tau,
                                      RenderSubset subset) {
  std::vector<Renderable> rs = gather_renderables(scene, tau);
  if (subset == RenderSubset::All) return rs;
  const bool want_dynamic = subset == RenderSubset::DynamicOnly;
  std::vector<Renderable> out;
  out.reserve(rs.size());
  for (const Renderable& r : rs) {
    if (r.is_dynamic == want_dynamic) out.push_back(r);
  }
  return out;
}

// Projects every renderable and keeps the visible ones in input order.
std::vector<Splat> build_splats(const std::vector<Renderable>& rs,
                                const Scene& scene, const Camera& cam,
                                const RasterConfig& cfg) {
  std::vector<Splat> splats;
  std::vector<Projected> proj(rs.size());
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < (long long)rs.size(); ++i) {
    proj[i] = project(rs[i].position,
                      covariance_3d(rs[i].rotation, rs[i].scale), cam, cfg);
  }
  const Vec3 center = cam.center_world();
  splats.reserve(rs.size());
  for (size_t i = 0; i < rs.size(); ++i) {
    if (proj[i].culled) continue;
    Splat s;
    s.xi = proj[i].xi;
    s.cov = proj[i].cov;
    s.conic = proj[i].cov.inverse();
    s.depth = proj[i].depth;
    s.invz = 1.0 / proj[i].depth;
    s.opacity = rs[i].opacity;
    const Vec3 u = rs[i].position - center;
    s.dir_len = u.norm();
    s.dir = u * (1.0 / s.dir_len);
    s.rgb = evaluate_color(rs[i].color, scene.sh_degree, s.dir);
    s.vel = rs[i].velocity;
    s.camp = proj[i].cam;
    const double z = proj[i].cam.z;
    const double j00 = cam.fx / z;
    const double j02 = -cam.fx * proj[i].cam.x / (z * z);
    const double j11 = cam.fy / z;
    const double j12 = -cam.fy * proj[i].cam.y / (z * z);
    for (int c = 0; c < 3; ++c) {
      s.a[0][c] = j00 * cam.R(0, c) + j02 * cam.R(2, c);
      s.a[1][c] = j11 * cam.R(1, c) + j12 * cam.R(2, c);
    }
    s.idx = (int)i;
    splats.push_back(s);
  }
  return splats;
}

// (depth, input index) total order shared by every pixel.
bool splat_before(const Splat& a, const Splat& b) {
  if (a.depth != b.depth) return a.depth < b.depth;
  return a.idx < b.idx;
}

// Bin splat footprints into tiles. Entries stay sorted because splats are
// appended in globally sorted order.
std::vector<std::vector<int>> bin_tiles(const std::vector<Splat>& order,
                                        const RasterConfig& cfg, int ntx,
                                        int nty) {
  std::vector<std::vector<int>> bins((size_t)ntx * nty);
  for (size_t k = 0; k < order.size(); ++k) {
    const Splat& s = order[k];
    const double cut = sigma_cut2(s.opacity, cfg);
    const double rx = std::sqrt(cut * s.cov.xx);
    const double ry = std::sqrt(cut * s.cov.yy);
    const int tx0 = std::clamp((int)std::floor((s.xi.x - rx) / cfg.tile), 0,
                               ntx - 1);
    const int tx1 = std::clamp((int)std::floor((s.xi.x + rx) / cfg.tile), 0,
                               ntx - 1);
    const int ty0 = std::clamp((int)std::floor((s.xi.y - ry) / cfg.tile), 0,
                               nty - 1);
    const int ty1 = std::clamp((int)std::floor((s.xi.y + ry) / cfg.tile), 0,
                               nty - 1);
    if (s.xi.x + rx < -0.5 || s.xi.y + ry < -0.5) continue;
    for (int ty = ty0; ty <= ty1; ++ty) {
      for (int tx = tx0; tx <= tx1; ++tx) {
        bins[(size_t)ty * ntx + tx].push_back((int)k);
      }
    }
  }
  return bins;
}

void check_camera(const Camera& cam, const RasterConfig& cfg) {
  if (cam.width <= 0 || cam.height <= 0) {
    fail(ErrorCode::InvalidArgument, "camera image size must be positive");
  }
  if (cfg.tile < 1) fail(ErrorCode::InvalidArgument, "tile size must be >= 1");
}

template <typename Acc>
void blend_tile(const std::vector<Splat>& splats, const std::vector<int>& bin,
                const Scene& scene, const Camera& cam, const RasterConfig& cfg,
                RenderSubset subset, int x0, int y0, int x1, int y1,
                RenderOutput& out) {
  const Acc floor_t = (Acc)cfg.t_floor;
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      Acc t = (Acc)1;
      Acc c0 = 0, c1 = 0, c2 = 0, d = 0, o = 0, v0 = 0, v1 = 0, v2 = 0;
      for (int k : bin) {
        const Splat& s = splats[(size_t)k];
        const double dx = x - s.xi.x;
        const double dy = y - s.xi.y;
        const double power = -0.5 * s.conic.quad(Vec2{dx, dy});
        const double alpha = s.opacity * std::exp(power);
        if (alpha < cfg.alpha_skip) continue;
        const Acc a = (Acc)alpha;
        const Acc tn = t * ((Acc)1 - a);
        if (tn < floor_t) break;  // contribution skipped as well
        const Acc w = a * t;
        c0 += w * (Acc)s.rgb.x;
        c1 += w * (Acc)s.rgb.y;
        c2 += w * (Acc)s.rgb.z;
        d += w * (Acc)s.invz;
        o += w;
        v0 += w * (Acc)s.vel.x;
        v1 += w * (Acc)s.vel.y;
        v2 += w * (Acc)s.vel.z;
        t = tn;
      }
      double cr = (double)c0, cg = (double)c1, cb = (double)c2;
      if (subset == RenderSubset::All) {
        const Vec3 dir = cam.pixel_ray_world((double)x, (double)y);
        const Vec3 sky = sample_cubemap(scene.sky, dir);
        const double rem = 1.0 - (double)o;
        cr += rem * sky.x;
        cg += rem * sky.y;
        cb += rem * sky.z;
      }
      out.color.at(y, x, 0) = cr;
      out.color.at(y, x, 1) = cg;
      out.color.at(y, x, 2) = cb;
      out.invdepth.at(y, x) = (double)d;
      out.opacity.at(y, x) = (double)o;
      out.velocity.at(y, x, 0) = (double)v0;
      out.velocity.at(y, x, 1) = (double)v1;
      out.velocity.at(y, x, 2) = (double)v2;
    }
  }
}

}  // namespace

Projected project(const Vec3& position, const Mat3& cov3, const Camera& cam,
                  const RasterConfig& cfg) {
  Projected out;
  out.cam = cam.to_camera(position);
  const double z = out.cam.z;
  out.depth = z;
  if (z <= cfg.depth_cull) {
    out.culled = true;
    return out;
  }
  out.xi = Vec2{cam.fx * out.cam.x / z + cam.cx,
                cam.fy * out.cam.y / z + cam.cy};
  const double j00 = cam.fx / z;
  const double j02 = -cam.fx * out.cam.x / (z * z);
  const double j11 = cam.fy / z;
  const double j12 = -cam.fy * out.cam.y / (z * z);
  double a[2][3];
  for (int c = 0; c < 3; ++c) {
    a[0][c] = j00 * cam.R(0, c) + j02 * cam.R(2, c);
    a[1][c] = j11 * cam.R(1, c) + j12 * cam.R(2, c);
  }
  double t[2][3];
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 3; ++c) {
      t[r][c] = a[r][0] * cov3(0, c) + a[r][1] * cov3(1, c) +
                a[r][2] * cov3(2, c);
    }
  }
  const double pxx = t[0][0] * a[0][0] + t[0][1] * a[0][1] + t[0][2] * a[0][2];
  const double pxy = t[0][0] * a[1][0] + t[0][1] * a[1][1] + t[0][2] * a[1][2];
  const double pyy = t[1][0] * a[1][0] + t[1][1] * a[1][1] + t[1][2] * a[1][2];
  out.cov = Sym2{pxx + cfg.dilation, pxy, pyy + cfg.dilation};
  const double rx = 3.0 * std::sqrt(out.cov.xx);
  const double ry = 3.0 * std::sqrt(out.cov.yy);
  if (out.xi.x + rx < -0.5 || out.xi.x - rx > cam.width - 0.5 ||
      out.xi.y + ry < -0.5 || out.xi.y - ry > cam.height - 0.5) {
    out.culled = true;
  }
  return out;
}

RenderOutput render(const Scene& scene, const Camera& cam,
                    const RasterConfig& cfg, RenderSubset subset) {
  check_camera(cam, cfg);
  const int w = cam.width, h = cam.height;
  RenderOutput out{Image3(w, h), Image1(w, h), Image1(w, h), Image3(w, h)};
  const std::vector<Renderable> rs = gather_subset(scene, cam.tau, subset);
  std::vector<Splat> splats = build_splats(rs, scene, cam, cfg);
  std::sort(splats.begin(), splats.end(), splat_before);
  const int ntx = (w + cfg.tile - 1) / cfg.tile;
  const int nty = (h + cfg.tile - 1) / cfg.tile;
  const std::vector<std::vector<int>> bins = bin_tiles(splats, cfg, ntx, nty);
#pragma omp parallel for schedule(dynamic)
  for (long long ti = 0; ti < (long long)bins.size(); ++ti) {
    const int tx = (int)(ti % ntx), ty = (int)(ti / ntx);
    const int x0 = tx * cfg.tile, y0 = ty * cfg.tile;
    const int x1 = std::min(x0 + cfg.tile, w), y1 = std::min(y0 + cfg.tile, h);
    if (cfg.f32_accum) {
      blend_tile<float>(splats, bins[ti], scene, cam, cfg, subset, x0, y0, x1,
                        y1, out);
    } else {
      blend_tile<double>(splats, bins[ti], scene, cam, cfg, subset, x0, y0, x1,
                         y1, out);
    }
  }
  return out;
}

RenderOutput render_reference(const Scene& scene, const Camera& cam,
                              RenderSubset subset) {
  RasterConfig cfg;  // projection constants only; thresholds unused below
  check_camera(cam, cfg);
  const int w = cam.width, h = cam.height;
  RenderOutput out{Image3(w, h), Image1(w, h), Image1(w, h), Image3(w, h)};
  const std::vector<Renderable> rs = gather_subset(scene, cam.tau, subset);
  std::vector<Splat> splats = build_splats(rs, scene, cam, cfg);
  std::sort(splats.begin(), splats.end(), splat_before);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double t = 1.0;
      double c[3] = {0, 0, 0}, d = 0, o = 0, v[3] = {0, 0, 0};
      for (const Splat& s : splats) {
        const double dx = x - s.xi.x;
        const double dy = y - s.xi.y;
        const double power = -0.5 * s.conic.quad(Vec2{dx, dy});
        const double alpha = s.opacity * std::exp(power);
        const double wgt = alpha * t;
        c[0] += wgt * s.rgb.x;
        c[1] += wgt * s.rgb.y;
        c[2] += wgt * s.rgb.z;
        d += wgt * s.invz;
        o += wgt;
        v[0] += wgt * s.vel.x;
        v[1] += wgt * s.vel.y;
        v[2] += wgt * s.vel.z;
        t *= 1.0 - alpha;
      }
      if (subset == RenderSubset::All) {
        const Vec3 dir = cam.pixel_ray_world((double)x, (double)y);
        const Vec3 sky = sample_cubemap(scene.sky, dir);
        for (int k = 0; k < 3; ++k) c[k] += (1.0 - o) * sky[k];
      }
      for (int k = 0; k < 3; ++k) {
        out.color.at(y, x, k) = c[k];
        out.velocity.at(y, x, k) = v[k];
      }
      out.invdepth.at(y, x) = d;
      out.opacity.at(y, x) = o;
    }
  }
  return out;
}

namespace {

// Per-splat gradient accumulator used during tile walks.
struct SplatGrad {
  double d_xi[2] = {0, 0};
  double d_conic[3] = {0, 0, 0};  // xx, xy (component), yy
  double d_o = 0;
  double d_rgb[3] = {0, 0, 0};
  double d_invz = 0;
  double d_vel[3] = {0, 0, 0};

  void add(const SplatGrad& o2) {
    d_xi[0] += o2.d_xi[0];
    d_xi[1] += o2.d_xi[1];
    for (int i = 0; i < 3; ++i) {
      d_conic[i] += o2.d_conic[i];
      d_rgb[i] += o2.d_rgb[i];
      d_vel[i] += o2.d_vel[i];
    }
    d_o += o2.d_o;
    d_invz += o2.d_invz;
  }
};

struct Contrib {
  int bin_pos;
  double alpha;
  double t;    // transmittance before this contribution
  double dot;  // <cotangent, channel values>
};

}  // namespace

SceneGrads render_adjoint(const Scene& scene, const Camera& cam,
                          const RasterConfig& cfg, RenderSubset subset,
                          const RenderOutput& fwd,
                          const RenderCotangents& cot) {
  check_camera(cam, cfg);
  const int w = cam.width, h = cam.height;
  SceneGrads grads;
  grads.init_zero(scene);
  const std::vector<Renderable> rs = gather_subset(scene, cam.tau, subset);
  std::vector<Splat> splats = build_splats(rs, scene, cam, cfg);
  std::sort(splats.begin(), splats.end(), splat_before);
  const int ntx = (w + cfg.tile - 1) / cfg.tile;
  const int nty = (h + cfg.tile - 1) / cfg.tile;
  const std::vector<std::vector<int>> bins = bin_tiles(splats, cfg, ntx, nty);

  // Sky composite pullback: C = C_G + (1 - O) * C_sky. Folds -d_C*C_sky into
  // the opacity cotangent and scatters d_C*(1 - O) into the cubemap. Serial
  // over pixels for determinism.
  Image1 d_o_eff = cot.d_opacity;
  if (subset == RenderSubset::All) {
    SkyCubemap sky_grad(scene.sky.res, 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Vec3 dir = cam.pixel_ray_world((double)x, (double)y);
        CubemapFootprint fp;
        const Vec3 sky = sample_cubemap(scene.sky, dir, &fp);
        const Vec3 dc{cot.d_color.at(y, x, 0), cot.d_color.at(y, x, 1),
                      cot.d_color.at(y, x, 2)};
        d_o_eff.at(y, x) -= dc.dot(sky);
        const double rem = 1.0 - fwd.opacity.at(y, x);
        sample_cubemap_adjoint(fp, dc * rem, sky_grad);
      }
    }
    grads.sky_faces.assign(sky_grad.faces.begin(), sky_grad.faces.end());
  }

  // Per-tile walks with private accumulators.
  std::vector<std::vector<SplatGrad>> tile_grads(bins.size());
#pragma omp parallel for schedule(dynamic)
  for (long long ti = 0; ti < (long long)bins.size(); ++ti) {
    const std::vector<int>& bin = bins[ti];
    std::vector<SplatGrad>& tg = tile_grads[ti];
    tg.assign(bin.size(), SplatGrad{});
    const int tx = (int)(ti % ntx), ty = (int)(ti / ntx);
    const int x0 = tx * cfg.tile, y0 = ty * cfg.tile;
    const int x1 = std::min(x0 + cfg.tile, w), y1 = std::min(y0 + cfg.tile, h);
    std::vector<Contrib> contribs;
    contribs.reserve(bin.size());
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        // Forward rewalk in double, recording the blend state.
        contribs.clear();
        const Vec3 dc{cot.d_color.at(y, x, 0), cot.d_color.at(y, x, 1),
                      cot.d_color.at(y, x, 2)};
        const Vec3 dv{cot.d_velocity.at(y, x, 0), cot.d_velocity.at(y, x, 1),
                      cot.d_velocity.at(y, x, 2)};
        const double dd = cot.d_invdepth.at(y, x);
        const double dop = d_o_eff.at(y, x);
        double t = 1.0;
        for (size_t bp = 0; bp < bin.size(); ++bp) {
          const Splat& s = splats[(size_t)bin[bp]];
          const double dx = x - s.xi.x;
          const double dy = y - s.xi.y;
          const double power = -0.5 * s.conic.quad(Vec2{dx, dy});
          const double alpha = s.opacity * std::exp(power);
          if (alpha < cfg.alpha_skip) continue;
          const double tn = t * (1.0 - alpha);
          if (tn < cfg.t_floor) break;
          const double dot =
              dc.dot(s.rgb) + dd * s.invz + dop + dv.dot(s.vel);
          contribs.push_back(Contrib{(int)bp, alpha, t, dot});
          t = tn;
        }
        // Reverse walk: suffix sums give the occlusion term.
        double suffix = 0.0;
        for (size_t ci = contribs.size(); ci-- > 0;) {
          const Contrib& c = contribs[ci];
          const Splat& s = splats[(size_t)bin[c.bin_pos]];
          const double wgt = c.alpha * c.t;
          const double d_alpha = c.dot * c.t - suffix / (1.0 - c.alpha);
          suffix += c.dot * wgt;
          SplatGrad& sg = tg[(size_t)c.bin_pos];
          sg.d_rgb[0] += dc.x * wgt;
          sg.d_rgb[1] += dc.y * wgt;
          sg.d_rgb[2] += dc.z * wgt;
          sg.d_invz += dd * wgt;
          sg.d_vel[0] += dv.x * wgt;
          sg.d_vel[1] += dv.y * wgt;
          sg.d_vel[2] += dv.z * wgt;
          const double gexp = c.alpha / s.opacity;
          sg.d_o += d_alpha * gexp;
          const double d_power = d_alpha * c.alpha;
          const double dx = x - s.xi.x;
          const double dy = y - s.xi.y;
          sg.d_conic[0] += d_power * (-0.5 * dx * dx);
          sg.d_conic[1] += d_power * (-dx * dy);
          sg.d_conic[2] += d_power * (-0.5 * dy * dy);
          const Vec2 cd = s.conic * Vec2{dx, dy};
          sg.d_xi[0] += d_power * cd.x;
          sg.d_xi[1] += d_power * cd.y;
        }
      }
    }
  }

  // Merge per-tile buffers in fixed tile order.
  std::vector<SplatGrad> total(splats.size());
  for (size_t ti = 0; ti < bins.size(); ++ti) {
    for (size_t bp = 0; bp < bins[ti].size(); ++bp) {
      total[(size_t)bins[ti][bp]].add(tile_grads[ti][bp]);
    }
  }

  // Per-splat parameter chains; independent, so parallel is deterministic.
  std::vector<RenderableGrads> rg(rs.size());
#pragma omp parallel for schedule(static)
  for (long long si = 0; si < (long long)splats.size(); ++si) {
    const Splat& s = splats[si];
    const SplatGrad& sg = total[si];
    RenderableGrads& out = rg[(size_t)s.idx];

    // conic -> screen covariance (general-matrix cotangents; the xy slot of
    // d_conic holds the summed component, so it splits in half here).
    const double l00 = s.conic.xx, l01 = s.conic.xy, l11 = s.conic.yy;
    const double g00 = sg.d_conic[0], g01 = 0.5 * sg.d_conic[1],
                 g11 = sg.d_conic[2];
    // dS = -L G L with L, G symmetric 2x2.
    const double t00 = l00 * g00 + l01 * g01, t01 = l00 * g01 + l01 * g11;
    const double t10 = l01 * g00 + l11 * g01, t11 = l01 * g01 + l11 * g11;
    const double ds00 = -(t00 * l00 + t01 * l01);
    const double ds01 = -(t00 * l01 + t01 * l11);
    const double ds10 = -(t10 * l00 + t11 * l01);
    const double ds11 = -(t10 * l01 + t11 * l11);
    // Dilation is additive, so dP = dS. 3D covariance: dC = A^T dP A.
    Mat3 dcov3;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        dcov3(i, j) = s.a[0][i] * ds00 * s.a[0][j] +
                      s.a[0][i] * ds01 * s.a[1][j] +
                      s.a[1][i] * ds10 * s.a[0][j] +
                      s.a[1][i] * ds11 * s.a[1][j];
      }
    }
    out.d_cov = dcov3;

    // dA = 2 dP A C with C the primitive's 3D covariance.
    const Mat3 cov =
        covariance_3d(rs[(size_t)s.idx].rotation, rs[(size_t)s.idx].scale);
    double ac[2][3];  // A * cov
    for (int r = 0; r < 2; ++r) {
      for (int c = 0; c < 3; ++c) {
        ac[r][c] = s.a[r][0] * cov(0, c) + s.a[r][1] * cov(1, c) +
                   s.a[r][2] * cov(2, c);
      }
    }
    double da[2][3];
    for (int c = 0; c < 3; ++c) {
      da[0][c] = 2.0 * (ds00 * ac[0][c] + ds01 * ac[1][c]);
      da[1][c] = 2.0 * (ds10 * ac[0][c] + ds11 * ac[1][c]);
    }
    // A = J R: pull back to the nonzero J entries.
    double dj00 = 0, dj02 = 0, dj11 = 0, dj12 = 0;
    for (int c = 0; c < 3; ++c) {
      dj00 += da[0][c] * cam.R(0, c);
      dj02 += da[0][c] * cam.R(2, c);
      dj11 += da[1][c] * cam.R(1, c);
      dj12 += da[1][c] * cam.R(2, c);
    }
    const double X = s.camp.x, Y = s.camp.y, Z = s.camp.z;
    const double z2 = Z * Z;
    double dX = dj02 * (-cam.fx / z2);
    double dY = dj12 * (-cam.fy / z2);
    double dZ = dj00 * (-cam.fx / z2) + dj02 * (2.0 * cam.fx * X / (z2 * Z)) +
                dj11 * (-cam.fy / z2) + dj12 * (2.0 * cam.fy * Y / (z2 * Z));
    // Mean projection chain.
    dX += sg.d_xi[0] * cam.fx / Z;
    dZ += sg.d_xi[0] * (-cam.fx * X / z2);
    dY += sg.d_xi[1] * cam.fy / Z;
    dZ += sg.d_xi[1] * (-cam.fy * Y / z2);
    // Blended inverse depth channel.
    dZ += sg.d_invz * (-1.0 / z2);
    Vec3 d_pos = cam.R.transposed_mul(Vec3{dX, dY, dZ});

    // SH color chain adds a view-direction dependence on position.
    Vec3 d_dir{0, 0, 0};
    evaluate_color_adjoint(rs[(size_t)s.idx].color, scene.sh_degree, s.dir,
                           Vec3{sg.d_rgb[0], sg.d_rgb[1], sg.d_rgb[2]},
                           out.d_color, d_dir);
    const double dot = s.dir.dot(d_dir);
    d_pos += (d_dir - s.dir * dot) * (1.0 / s.dir_len);

    out.d_position = d_pos;
    out.d_opacity = sg.d_o;
    out.d_velocity = Vec3{sg.d_vel[0], sg.d_vel[1], sg.d_vel[2]};
  }

  scatter_gradients(scene, cam.tau, rs, rg, grads);
  return grads;
}

}  // namespace curvesplat
