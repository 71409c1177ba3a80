// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#include "curvesplat/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "curvesplat/core.hpp"
#include "curvesplat/fitting.hpp"
#include "json.hpp"

namespace curvesplat {
namespace {

// First-band real spherical-harmonic constant sqrt(3/(4*pi)).
constexpr double kShC1 = 0.4886025119029199;

constexpr const char* kSceneVersion = "curvesplat-scene/1";

}  // namespace

Vec3 evaluate_color(const ColorBlock& block, int sh_degree,
                    const Vec3& unit_dir) {
  Vec3 rgb{block[0], block[1], block[2]};
  if (sh_degree >= 1) {
    for (int c = 0; c < 3; ++c) {
      rgb[c] += kShC1 * (-unit_dir.y * block[3 + c] + unit_dir.z * block[6 + c] -
                         unit_dir.x * block[9 + c]);
    }
  }
  return rgb;
}

void evaluate_color_adjoint(const ColorBlock& block, int sh_degree,
                            const Vec3& unit_dir, const Vec3& d_rgb,
                            ColorBlock& d_block, Vec3& d_unit_dir) {
  for (int c = 0; c < 3; ++c) d_block[c] += d_rgb[c];
  if (sh_degree >= 1) {
    for (int c = 0; c < 3; ++c) {
      d_block[3 + c] += -kShC1 * unit_dir.y * d_rgb[c];
      d_block[6 + c] += kShC1 * unit_dir.z * d_rgb[c];
      d_block[9 + c] += -kShC1 * unit_dir.x * d_rgb[c];
      d_unit_dir.y += -kShC1 * block[3 + c] * d_rgb[c];
      d_unit_dir.z += kShC1 * block[6 + c] * d_rgb[c];
      d_unit_dir.x += -kShC1 * block[9 + c] * d_rgb[c];
    }
  }
}

const ObjectTrack& Scene::track_for(int group) const {
  if (group < 1 || group > (int)tracks.size()) {
    fail(ErrorCode::ContractViolation,
         "unknown object group " + std::to_string(group) + "; scene has " +
             std::to_string(tracks.size()) + " tracks");
  }
  return tracks[group - 1];
}

void Scene::validate() const {
  if (sh_degree != 0 && sh_degree != 1) {
    fail(ErrorCode::ContractViolation,
         "sh_degree must be 0 or 1, got " + std::to_string(sh_degree));
  }
  if (trajectory_degree < 1 || trajectory_degree > kMaxDegree) {
    fail(ErrorCode::ContractViolation, "invalid trajectory degree");
  }
  for (size_t i = 0; i < tracks.size(); ++i) {
    const ObjectTrack& tr = tracks[i];
    if (tr.group != (int)i + 1) {
      fail(ErrorCode::ContractViolation,
           "track group ids must be dense from 1; slot " + std::to_string(i) +
               " holds group " + std::to_string(tr.group));
    }
    if (tr.center_curve.dim != 3 || tr.time_curve.dim != 1) {
      fail(ErrorCode::ContractViolation,
           "track " + std::to_string(tr.group) + " has invalid curve dims");
    }
    if (!(tr.tau_max > tr.tau_min)) {
      fail(ErrorCode::ContractViolation,
           "track " + std::to_string(tr.group) + " has empty tau range");
    }
  }
  for (size_t i = 0; i < dynamics.size(); ++i) {
    const DynamicGaussian& g = dynamics[i];
    if (g.group < 1 || g.group > (int)tracks.size()) {
      fail(ErrorCode::ContractViolation,
           "dynamic gaussian " + std::to_string(i) + " references group " +
               std::to_string(g.group) + " but scene has " +
               std::to_string(tracks.size()) + " tracks");
    }
    if (g.offset_curve.dim != 3 || g.offset_curve.degree != trajectory_degree) {
      fail(ErrorCode::ContractViolation,
           "dynamic gaussian " + std::to_string(i) +
               " has an offset curve of the wrong shape");
    }
  }
}

TimeSample time_to_bezier(const ObjectTrack& track, double tau) {
  const double range = track.tau_max - track.tau_min;
  if (!(range > 0.0)) {
    fail(ErrorCode::ContractViolation, "track tau range is empty");
  }
  TimeSample s;
  const double raw = (tau - track.tau_min) / range;
  s.tau_clamped = raw < 0.0 || raw > 1.0;
  s.tau_hat = std::clamp(raw, 0.0, 1.0);
  const double f = evaluate1(track.time_curve, s.tau_hat);
  s.t_clamped = f < 0.0 || f > 1.0;
  s.t = std::clamp(f, 0.0, 1.0);
  s.clamped = s.tau_clamped || s.t_clamped;
  s.dtdtau = s.clamped ? 0.0 : derivative1(track.time_curve, s.tau_hat) / range;
  return s;
}

namespace {

void require_group_match(const DynamicGaussian& g, const ObjectTrack& track) {
  if (g.group != track.group) {
    fail(ErrorCode::ContractViolation,
         "gaussian group " + std::to_string(g.group) +
             " does not match track group " + std::to_string(track.group));
  }
}

}  // namespace

Vec3 dynamic_position(const DynamicGaussian& g, const ObjectTrack& track,
                      double tau) {
  require_group_match(g, track);
  const TimeSample s = time_to_bezier(track, tau);
  return evaluate3(g.offset_curve, s.t) + evaluate3(track.center_curve, s.t);
}

Vec3 dynamic_velocity(const DynamicGaussian& g, const ObjectTrack& track,
                      double tau) {
  require_group_match(g, track);
  const TimeSample s = time_to_bezier(track, tau);
  return (derivative3(track.center_curve, s.t) +
          derivative3(g.offset_curve, s.t)) *
         s.dtdtau;
}

Quat dynamic_rotation(const DynamicGaussian& g, const ObjectTrack& track,
                      double tau) {
  require_group_match(g, track);
  const TimeSample s = time_to_bezier(track, tau);
  const Vec3 d1 = derivative3(track.center_curve, s.t);
  const double wn = std::sqrt(d1.x * d1.x + d1.y * d1.y);
  const Quat base = g.q.normalized();
  if (wn < 1e-6) return base;
  const double yaw = std::atan2(d1.y, d1.x);
  return quat_from_yaw(yaw - track.yaw_ref) * base;
}

Mat3 covariance_3d(const Quat& q, const Vec3& s) {
  const Mat3 r = quat_to_rotmat(q.normalized());
  Mat3 m;  // m = r * diag(s)
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m(i, j) = r(i, j) * s[j];
  }
  Mat3 out;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += m(i, k) * m(j, k);
      out(i, j) = acc;
    }
  }
  return out;
}

std::vector<Renderable> gather_renderables(const Scene& scene, double tau) {
  std::vector<Renderable> out;
  out.reserve(scene.statics.size() + scene.dynamics.size());

  for (size_t i = 0; i < scene.statics.size(); ++i) {
    const StaticGaussian& g = scene.statics[i];
    Renderable r;
    r.position = g.position;
    r.rotation = g.q.normalized();
    r.scale = Vec3{std::exp(g.log_scale.x), std::exp(g.log_scale.y),
                   std::exp(g.log_scale.z)};
    r.opacity = sigmoid(g.opacity_logit);
    r.color = g.color;
    r.velocity = Vec3{0.0, 0.0, 0.0};
    r.is_dynamic = false;
    r.group = 0;
    r.source_index = (int)i;
    out.push_back(r);
  }

  // Per-track state shared by every gaussian in the group.
  struct TrackState {
    TimeSample ts;
    Vec3 gamma;    // center position at t
    Vec3 gamma1;   // center derivative at t
    bool yaw_active = false;
    double dyaw = 0.0;
    Quat r_yaw;    // identity unless yaw_active
  };
  std::vector<TrackState> states(scene.tracks.size());
  for (size_t k = 0; k < scene.tracks.size(); ++k) {
    const ObjectTrack& tr = scene.tracks[k];
    TrackState& st = states[k];
    st.ts = time_to_bezier(tr, tau);
    st.gamma = evaluate3(tr.center_curve, st.ts.t);
    st.gamma1 = derivative3(tr.center_curve, st.ts.t);
    const double wn =
        std::sqrt(st.gamma1.x * st.gamma1.x + st.gamma1.y * st.gamma1.y);
    if (wn >= 1e-6) {
      st.yaw_active = true;
      st.dyaw = std::atan2(st.gamma1.y, st.gamma1.x) - tr.yaw_ref;
      st.r_yaw = quat_from_yaw(st.dyaw);
    }
  }

  for (size_t i = 0; i < scene.dynamics.size(); ++i) {
    const DynamicGaussian& g = scene.dynamics[i];
    const TrackState& st = states[scene.track_for(g.group).group - 1];
    Renderable r;
    const double t = st.ts.t;
    r.position = evaluate3(g.offset_curve, t) + st.gamma;
    const Quat base = g.q.normalized();
    r.rotation = st.yaw_active ? st.r_yaw * base : base;
    r.scale = Vec3{std::exp(g.log_scale.x), std::exp(g.log_scale.y),
                   std::exp(g.log_scale.z)};
    r.opacity = sigmoid(g.opacity_logit);
    r.color = g.color;
    r.velocity = (st.gamma1 + derivative3(g.offset_curve, t)) * st.ts.dtdtau;
    r.is_dynamic = true;
    r.group = g.group;
    r.source_index = (int)i;
    r.ts = st.ts;
    r.yaw_active = st.yaw_active;
    r.dyaw = st.dyaw;
    out.push_back(r);
  }
  return out;
}

void SceneGrads::init_zero(const Scene& scene) {
  static_position.assign(scene.statics.size(), Vec3{0, 0, 0});
  static_log_scale.assign(scene.statics.size(), Vec3{0, 0, 0});
  static_opacity_logit.assign(scene.statics.size(), 0.0);
  static_color.assign(scene.statics.size(), ColorBlock{});
  static_q.assign(scene.statics.size(), Quat{0, 0, 0, 0});
  offset_ctrl.resize(scene.dynamics.size());
  for (size_t i = 0; i < scene.dynamics.size(); ++i) {
    offset_ctrl[i].assign(scene.dynamics[i].offset_curve.pts.size(), 0.0);
  }
  dyn_log_scale.assign(scene.dynamics.size(), Vec3{0, 0, 0});
  dyn_opacity_logit.assign(scene.dynamics.size(), 0.0);
  dyn_color.assign(scene.dynamics.size(), ColorBlock{});
  dyn_q.assign(scene.dynamics.size(), Quat{0, 0, 0, 0});
  center_ctrl.resize(scene.tracks.size());
  time_values.resize(scene.tracks.size());
  for (size_t k = 0; k < scene.tracks.size(); ++k) {
    center_ctrl[k].assign(scene.tracks[k].center_curve.pts.size(), 0.0);
    time_values[k].assign(scene.tracks[k].time_curve.pts.size(), 0.0);
  }
  sky_faces.assign(6, std::vector<double>(
                          (size_t)scene.sky.res * scene.sky.res * 3, 0.0));
}

void SceneGrads::add_scaled(const SceneGrads& other, double w) {
  auto axpy = [w](std::vector<double>& a, const std::vector<double>& b) {
    for (size_t i = 0; i < a.size(); ++i) a[i] += w * b[i];
  };
  for (size_t i = 0; i < static_position.size(); ++i) {
    static_position[i] += other.static_position[i] * w;
    static_log_scale[i] += other.static_log_scale[i] * w;
    static_opacity_logit[i] += w * other.static_opacity_logit[i];
    for (int c = 0; c < 12; ++c) static_color[i][c] += w * other.static_color[i][c];
    for (int c = 0; c < 4; ++c) static_q[i][c] += w * other.static_q[i][c];
  }
  for (size_t i = 0; i < offset_ctrl.size(); ++i) {
    axpy(offset_ctrl[i], other.offset_ctrl[i]);
    dyn_log_scale[i] += other.dyn_log_scale[i] * w;
    dyn_opacity_logit[i] += w * other.dyn_opacity_logit[i];
    for (int c = 0; c < 12; ++c) dyn_color[i][c] += w * other.dyn_color[i][c];
    for (int c = 0; c < 4; ++c) dyn_q[i][c] += w * other.dyn_q[i][c];
  }
  for (size_t k = 0; k < center_ctrl.size(); ++k) {
    axpy(center_ctrl[k], other.center_ctrl[k]);
    axpy(time_values[k], other.time_values[k]);
  }
  for (size_t f = 0; f < sky_faces.size(); ++f) axpy(sky_faces[f], other.sky_faces[f]);
}

void scatter_time_gradient(const ObjectTrack& track, const TimeSample& ts,
                           double d_t, double d_dtdtau,
                           std::vector<double>& d_time_values) {
  const int n = track.time_curve.degree;
  double bw[kMaxDegree + 1];
  double bdw[kMaxDegree + 1];
  bernstein_all(n, ts.tau_hat, bw);
  bernstein_derivative_all(n, ts.tau_hat, bdw);
  const double range = track.tau_max - track.tau_min;
  // t = clamp(f(tau_hat)): constant under a t clamp. dtdtau is forced to
  // zero under any clamp, so its value gradient only flows unclamped.
  const bool t_flows = !ts.t_clamped;
  const bool dt_flows = !ts.clamped;
  for (int j = 0; j <= n; ++j) {
    double acc = 0.0;
    if (t_flows) acc += bw[j] * d_t;
    if (dt_flows) acc += bdw[j] / range * d_dtdtau;
    d_time_values[j] += acc;
  }
}

namespace {

// Accumulates the chain for Sigma = R(q_hat) diag(s)^2 R(q_hat)^T into the
// raw (unnormalized) quaternion and log_scale gradients. d_cov is
// symmetrized first. Returns the unit-quaternion gradient via d_q_unit for
// callers that compose further (yaw chain).
void covariance_chain(const Quat& q_raw, const Vec3& s, const Mat3& d_cov,
                      double d_q_unit[4], Vec3& d_log_scale) {
  const Quat qh = q_raw.normalized();
  const Mat3 r = quat_to_rotmat(qh);
  Mat3 g;  // symmetrized cotangent
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) g(i, j) = 0.5 * (d_cov(i, j) + d_cov(j, i));
  }
  Mat3 m;  // m = r diag(s)
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) m(i, j) = r(i, j) * s[j];
  }
  Mat3 dm;  // dSigma/dm pullback: dm = 2 g m
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += g(i, k) * m(k, j);
      dm(i, j) = 2.0 * acc;
    }
  }
  Mat3 dr;
  for (int i = 0; i < 3; ++i) {
    double ds = 0.0;
    for (int row = 0; row < 3; ++row) {
      dr(row, i) = dm(row, i) * s[i];
      ds += r(row, i) * dm(row, i);
    }
    d_log_scale[i] += ds * s[i];
  }
  const double w = qh.w, x = qh.x, y = qh.y, z = qh.z;
  // dR/dq at unit q, each entry doubled per the rotation-matrix formula.
  const double dw[9] = {0, -z, y, z, 0, -x, -y, x, 0};
  const double dx[9] = {0, y, z, y, -2 * x, -w, z, w, -2 * x};
  const double dy[9] = {-2 * y, x, w, x, 0, z, -w, z, -2 * y};
  const double dz[9] = {-2 * z, -w, x, w, -2 * z, y, x, y, 0};
  double acc[4] = {0, 0, 0, 0};
  for (int e = 0; e < 9; ++e) {
    const double de = 2.0 * dr(e / 3, e % 3);
    acc[0] += de * dw[e];
    acc[1] += de * dx[e];
    acc[2] += de * dy[e];
    acc[3] += de * dz[e];
  }
  for (int c = 0; c < 4; ++c) d_q_unit[c] += acc[c];
}

// Pullback through q_hat = q / ||q||: d_raw = (d - q_hat (q_hat . d)) / ||q||.
void normalize_chain(const Quat& q_raw, const double d_unit[4], Quat& d_raw) {
  const double n = q_raw.norm();
  const Quat qh = q_raw.normalized();
  const double dot = qh.w * d_unit[0] + qh.x * d_unit[1] + qh.y * d_unit[2] +
                     qh.z * d_unit[3];
  d_raw.w += (d_unit[0] - qh.w * dot) / n;
  d_raw.x += (d_unit[1] - qh.x * dot) / n;
  d_raw.y += (d_unit[2] - qh.y * dot) / n;
  d_raw.z += (d_unit[3] - qh.z * dot) / n;
}

}  // namespace

void scatter_gradients(const Scene& scene, double tau,
                       const std::vector<Renderable>& renderables,
                       const std::vector<RenderableGrads>& rg,
                       SceneGrads& grads) {
  if (renderables.size() != rg.size()) {
    fail(ErrorCode::ContractViolation,
         "renderable and gradient counts differ");
  }

  // Per-track curve state reused across gaussians of the group.
  struct TrackState {
    Vec3 gamma1, gamma2;
    std::vector<double> bw, bdw;
    double d_t = 0.0, d_dtdtau = 0.0;  // accumulated then scattered once
  };
  std::vector<TrackState> states(scene.tracks.size());
  std::vector<char> state_ready(scene.tracks.size(), 0);

  for (size_t ri = 0; ri < renderables.size(); ++ri) {
    const Renderable& r = renderables[ri];
    const RenderableGrads& gr = rg[ri];
    const double d_logit = gr.d_opacity * r.opacity * (1.0 - r.opacity);

    if (!r.is_dynamic) {
      const size_t i = (size_t)r.source_index;
      const StaticGaussian& g = scene.statics[i];
      grads.static_position[i] += gr.d_position;
      grads.static_opacity_logit[i] += d_logit;
      for (int c = 0; c < 12; ++c) grads.static_color[i][c] += gr.d_color[c];
      double dqu[4] = {0, 0, 0, 0};
      covariance_chain(g.q, r.scale, gr.d_cov, dqu, grads.static_log_scale[i]);
      normalize_chain(g.q, dqu, grads.static_q[i]);
      // d/d(log s) through scale used in the chain is handled inside
      // covariance_chain (ds * s).
      continue;
    }

    const size_t i = (size_t)r.source_index;
    const DynamicGaussian& g = scene.dynamics[i];
    const size_t ti = (size_t)(r.group - 1);
    const ObjectTrack& track = scene.tracks[ti];
    TrackState& st = states[ti];
    if (!state_ready[ti]) {
      const int n = track.center_curve.degree;
      st.bw.resize(n + 1);
      st.bdw.resize(n + 1);
      bernstein_all(n, r.ts.t, st.bw.data());
      bernstein_derivative_all(n, r.ts.t, st.bdw.data());
      st.gamma1 = derivative3(track.center_curve, r.ts.t);
      st.gamma2 = second_derivative3(track.center_curve, r.ts.t);
      state_ready[ti] = 1;
    }

    grads.dyn_opacity_logit[i] += d_logit;
    for (int c = 0; c < 12; ++c) grads.dyn_color[i][c] += gr.d_color[c];

    const double t = r.ts.t;
    const Vec3 delta1 = derivative3(g.offset_curve, t);
    const Vec3 delta2 = second_derivative3(g.offset_curve, t);
    const int n = g.offset_curve.degree;
    double obw[kMaxDegree + 1];
    double obdw[kMaxDegree + 1];
    bernstein_all(n, t, obw);
    bernstein_derivative_all(n, t, obdw);

    double d_t = 0.0;
    double d_dtdtau = 0.0;

    // position = offset(t) + center(t)
    for (int j = 0; j <= n; ++j) {
      for (int k = 0; k < 3; ++k) {
        grads.offset_ctrl[i][3 * j + k] += obw[j] * gr.d_position[k];
      }
    }
    const int cn = track.center_curve.degree;
    for (int j = 0; j <= cn; ++j) {
      for (int k = 0; k < 3; ++k) {
        grads.center_ctrl[ti][3 * j + k] += st.bw[j] * gr.d_position[k];
      }
    }
    d_t += gr.d_position.dot(delta1 + st.gamma1);

    // velocity = (center'(t) + offset'(t)) * dtdtau
    const double vscale = r.ts.dtdtau;
    for (int j = 0; j <= n; ++j) {
      for (int k = 0; k < 3; ++k) {
        grads.offset_ctrl[i][3 * j + k] += obdw[j] * vscale * gr.d_velocity[k];
      }
    }
    for (int j = 0; j <= cn; ++j) {
      for (int k = 0; k < 3; ++k) {
        grads.center_ctrl[ti][3 * j + k] +=
            st.bdw[j] * vscale * gr.d_velocity[k];
      }
    }
    d_t += vscale * gr.d_velocity.dot(delta2 + st.gamma2);
    d_dtdtau += gr.d_velocity.dot(delta1 + st.gamma1);

    // covariance through the effective rotation
    double d_qeff[4] = {0, 0, 0, 0};
    {
      // r.rotation is unit by construction; covariance_chain normalizes.
      Vec3 dls{0, 0, 0};
      covariance_chain(r.rotation, r.scale, gr.d_cov, d_qeff, dls);
      grads.dyn_log_scale[i] += dls;
    }

    double d_qbase_unit[4];
    if (r.yaw_active) {
      const double h = 0.5 * r.dyaw;
      const double cs = std::cos(h), sn = std::sin(h);
      // q_eff = r_yaw * q_base: pull back through the left multiplication.
      d_qbase_unit[0] = cs * d_qeff[0] + sn * d_qeff[3];
      d_qbase_unit[1] = cs * d_qeff[1] + sn * d_qeff[2];
      d_qbase_unit[2] = -sn * d_qeff[1] + cs * d_qeff[2];
      d_qbase_unit[3] = -sn * d_qeff[0] + cs * d_qeff[3];
      // d(yaw): derivative of r_yaw times q_base, dotted with d_qeff.
      const Quat qb = g.q.normalized();
      const double aw = -0.5 * sn, az = 0.5 * cs;
      const double pw = aw * qb.w - az * qb.z;
      const double px = aw * qb.x - az * qb.y;
      const double py = aw * qb.y + az * qb.x;
      const double pz = aw * qb.z + az * qb.w;
      const double d_yaw = d_qeff[0] * pw + d_qeff[1] * px + d_qeff[2] * py +
                           d_qeff[3] * pz;
      // yaw = atan2(w_y, w_x) with w = xy part of center'(t).
      const double wx = st.gamma1.x, wy = st.gamma1.y;
      const double wn2 = wx * wx + wy * wy;
      const double d_wx = d_yaw * (-wy / wn2);
      const double d_wy = d_yaw * (wx / wn2);
      for (int j = 0; j <= cn; ++j) {
        grads.center_ctrl[ti][3 * j + 0] += st.bdw[j] * d_wx;
        grads.center_ctrl[ti][3 * j + 1] += st.bdw[j] * d_wy;
      }
      d_t += d_wx * st.gamma2.x + d_wy * st.gamma2.y;
    } else {
      for (int c = 0; c < 4; ++c) d_qbase_unit[c] = d_qeff[c];
    }
    normalize_chain(g.q, d_qbase_unit, grads.dyn_q[i]);

    st.d_t += d_t;
    st.d_dtdtau += d_dtdtau;
  }

  // Route accumulated time gradients per track, in track order. Every
  // renderable of a group shares one TimeSample; recompute it here.
  for (size_t ti = 0; ti < scene.tracks.size(); ++ti) {
    if (!state_ready[ti]) continue;
    const ObjectTrack& track = scene.tracks[ti];
    const TimeSample ts = time_to_bezier(track, tau);
    scatter_time_gradient(track, ts, states[ti].d_t, states[ti].d_dtdtau,
                          grads.time_values[ti]);
  }
}

namespace {

double nn_distance(const std::vector<Vec3>& cloud, size_t self) {
  if (cloud.size() < 2) return 0.1;
  double best = std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < cloud.size(); ++j) {
    if (j == self) continue;
    const double d = (cloud[j] - cloud[self]).norm();
    if (d < best) best = d;
  }
  return std::max(best, 1e-4);
}

ColorBlock gray_block() {
  ColorBlock b{};
  b[0] = b[1] = b[2] = 0.5;
  return b;
}

// Evenly spaced deterministic subsample of m out of n indices.
std::vector<size_t> even_subsample(size_t n, size_t m) {
  std::vector<size_t> idx;
  if (m == 0 || m >= n) {
    idx.resize(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    return idx;
  }
  idx.reserve(m);
  for (size_t k = 0; k < m; ++k) {
    idx.push_back((size_t)(((double)k + 0.5) * (double)n / (double)m));
  }
  return idx;
}

}  // namespace

Scene init_scene_from_groups(const std::vector<ObjectObservations>& objects,
                             const std::vector<Vec3>& static_points,
                             const InitOptions& opts) {
  Scene scene;
  scene.sh_degree = opts.sh_degree;
  scene.trajectory_degree = opts.trajectory_degree;
  scene.sky = SkyCubemap(opts.sky_res, 0.5);
  const double logit_o = logit(opts.opacity_init);
  const int deg = opts.trajectory_degree;

  for (size_t si : even_subsample(static_points.size(),
                                  (size_t)std::max(0, opts.max_static_points))) {
    StaticGaussian g;
    g.position = static_points[si];
    g.q = Quat{1, 0, 0, 0};
    const double d = nn_distance(static_points, si);
    g.log_scale = Vec3{std::log(d), std::log(d), std::log(d)};
    g.opacity_logit = logit_o;
    g.color = gray_block();
    scene.statics.push_back(g);
  }

  std::vector<ObjectObservations> sorted = objects;
  std::sort(sorted.begin(), sorted.end(),
            [](const ObjectObservations& a, const ObjectObservations& b) {
              return a.group < b.group;
            });
  for (size_t k = 0; k < sorted.size(); ++k) {
    if (sorted[k].group != (int)k + 1) {
      fail(ErrorCode::ContractViolation,
           "object groups must be dense from 1");
    }
  }

  for (const ObjectObservations& obs : sorted) {
    const size_t frames = obs.taus.size();
    if (obs.points.size() != frames) {
      fail(ErrorCode::ContractViolation,
           "group " + std::to_string(obs.group) +
               ": frame count mismatch between taus and points");
    }
    if ((int)frames < deg + 1) {
      fail(ErrorCode::InsufficientData,
           "group " + std::to_string(obs.group) + " has " +
               std::to_string(frames) + " frames; need at least " +
               std::to_string(deg + 1) + " to fit a degree-" +
               std::to_string(deg) + " trajectory");
    }
    std::vector<Vec3> centers(frames);
    for (size_t f = 0; f < frames; ++f) {
      if (obs.points[f].empty()) {
        fail(ErrorCode::InsufficientData,
             "group " + std::to_string(obs.group) + " frame " +
                 std::to_string(f) + " has no points");
      }
      Vec3 c{0, 0, 0};
      for (const Vec3& p : obs.points[f]) c += p;
      centers[f] = c * (1.0 / (double)obs.points[f].size());
    }

    FitResult fitted = fit3(centers, deg);
    ObjectTrack track;
    track.group = obs.group;
    track.center_curve = fitted.curve;
    bool mono = true;
    track.time_curve = fit_time_mapping(obs.taus, fitted.params, deg, &mono);
    track.time_monotone = mono;
    track.tau_min = obs.taus.front();
    track.tau_max = obs.taus.back();
    const Vec3 d0 = derivative3(track.center_curve, 0.0);
    const double wn = std::sqrt(d0.x * d0.x + d0.y * d0.y);
    track.yaw_ref = wn >= 1e-6 ? std::atan2(d0.y, d0.x) : 0.0;
    scene.tracks.push_back(track);

    // Flatten (frame, point) pairs frame-major, then subsample.
    std::vector<std::pair<size_t, size_t>> pairs;
    for (size_t f = 0; f < frames; ++f) {
      for (size_t j = 0; j < obs.points[f].size(); ++j) pairs.push_back({f, j});
    }
    for (size_t pi : even_subsample(pairs.size(),
                                    (size_t)std::max(0, opts.points_per_object))) {
      const size_t f = pairs[pi].first;
      const size_t j = pairs[pi].second;
      const Vec3 p = obs.points[f][j];
      const Vec3 offset = p - evaluate3(track.center_curve, fitted.params[f]);
      DynamicGaussian g;
      std::vector<double> pts((size_t)(deg + 1) * 3);
      for (int c = 0; c <= deg; ++c) {
        pts[3 * c + 0] = offset.x;
        pts[3 * c + 1] = offset.y;
        pts[3 * c + 2] = offset.z;
      }
      g.offset_curve = BezierCurve(deg, 3, std::move(pts));
      g.q = Quat{1, 0, 0, 0};
      const double d = nn_distance(obs.points[f], j);
      g.log_scale = Vec3{std::log(d), std::log(d), std::log(d)};
      g.opacity_logit = logit_o;
      g.color = gray_block();
      g.group = obs.group;
      scene.dynamics.push_back(g);
    }
  }

  scene.validate();
  return scene;
}

namespace {

using nlohmann::json;

json curve_json(const BezierCurve& c) { return json::parse(curve_to_json(c)); }

BezierCurve curve_from(const json& j) { return curve_from_json(j.dump()); }

json vec3_json(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const json& j) {
  return Vec3{j.at(0).get<double>(), j.at(1).get<double>(),
              j.at(2).get<double>()};
}

json quat_json(const Quat& q) { return json::array({q.w, q.x, q.y, q.z}); }

Quat quat_from(const json& j) {
  return Quat{j.at(0).get<double>(), j.at(1).get<double>(),
              j.at(2).get<double>(), j.at(3).get<double>()};
}

json color_json(const ColorBlock& b) {
  json a = json::array();
  for (double v : b) a.push_back(v);
  return a;
}

ColorBlock color_from(const json& j) {
  ColorBlock b{};
  for (size_t i = 0; i < b.size() && i < j.size(); ++i) {
    b[i] = j.at(i).get<double>();
  }
  return b;
}

}  // namespace

std::string scene_to_json(const Scene& scene) {
  json root;
  root["version"] = kSceneVersion;
  root["sh_degree"] = scene.sh_degree;
  root["trajectory_degree"] = scene.trajectory_degree;
  json statics = json::array();
  for (const StaticGaussian& g : scene.statics) {
    statics.push_back({{"position", vec3_json(g.position)},
                       {"q", quat_json(g.q)},
                       {"log_scale", vec3_json(g.log_scale)},
                       {"opacity_logit", g.opacity_logit},
                       {"color", color_json(g.color)}});
  }
  root["statics"] = std::move(statics);
  json dynamics = json::array();
  for (const DynamicGaussian& g : scene.dynamics) {
    dynamics.push_back({{"offset_curve", curve_json(g.offset_curve)},
                        {"q", quat_json(g.q)},
                        {"log_scale", vec3_json(g.log_scale)},
                        {"opacity_logit", g.opacity_logit},
                        {"color", color_json(g.color)},
                        {"group", g.group}});
  }
  root["dynamics"] = std::move(dynamics);
  json tracks = json::array();
  for (const ObjectTrack& tr : scene.tracks) {
    tracks.push_back({{"group", tr.group},
                      {"center_curve", curve_json(tr.center_curve)},
                      {"time_curve", curve_json(tr.time_curve)},
                      {"tau_min", tr.tau_min},
                      {"tau_max", tr.tau_max},
                      {"yaw_ref", tr.yaw_ref},
                      {"time_monotone", tr.time_monotone}});
  }
  root["tracks"] = std::move(tracks);
  json faces = json::array();
  for (const auto& f : scene.sky.faces) faces.push_back(f);
  root["sky"] = {{"res", scene.sky.res}, {"faces", std::move(faces)}};
  return root.dump();
}

Scene scene_from_json(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const std::exception& e) {
    fail(ErrorCode::Io, std::string("checkpoint parse failed: ") + e.what());
  }
  try {
    const std::string version = root.at("version").get<std::string>();
    if (version != kSceneVersion) {
      fail(ErrorCode::Io, "unsupported checkpoint version '" + version +
                              "'; expected '" + kSceneVersion + "'");
    }
    Scene scene;
    scene.sh_degree = root.at("sh_degree").get<int>();
    scene.trajectory_degree = root.at("trajectory_degree").get<int>();
    for (const json& j : root.at("statics")) {
      StaticGaussian g;
      g.position = vec3_from(j.at("position"));
      g.q = quat_from(j.at("q"));
      g.log_scale = vec3_from(j.at("log_scale"));
      g.opacity_logit = j.at("opacity_logit").get<double>();
      g.color = color_from(j.at("color"));
      scene.statics.push_back(g);
    }
    for (const json& j : root.at("dynamics")) {
      DynamicGaussian g;
      g.offset_curve = curve_from(j.at("offset_curve"));
      g.q = quat_from(j.at("q"));
      g.log_scale = vec3_from(j.at("log_scale"));
      g.opacity_logit = j.at("opacity_logit").get<double>();
      g.color = color_from(j.at("color"));
      g.group = j.at("group").get<int>();
      scene.dynamics.push_back(g);
    }
    for (const json& j : root.at("tracks")) {
      ObjectTrack tr;
      tr.group = j.at("group").get<int>();
      tr.center_curve = curve_from(j.at("center_curve"));
      tr.time_curve = curve_from(j.at("time_curve"));
      tr.tau_min = j.at("tau_min").get<double>();
      tr.tau_max = j.at("tau_max").get<double>();
      tr.yaw_ref = j.at("yaw_ref").get<double>();
      tr.time_monotone = j.at("time_monotone").get<bool>();
      scene.tracks.push_back(tr);
    }
    const json& sky = root.at("sky");
    scene.sky = SkyCubemap(sky.at("res").get<int>(), 0.0);
    const json& faces = sky.at("faces");
    if (faces.size() != 6) fail(ErrorCode::Io, "sky must have 6 faces");
    for (int f = 0; f < 6; ++f) {
      const json& arr = faces.at(f);
      if (arr.size() != scene.sky.faces[f].size()) {
        fail(ErrorCode::Io, "sky face size mismatch");
      }
      for (size_t i = 0; i < arr.size(); ++i) {
        scene.sky.faces[f][i] = arr.at(i).get<double>();
      }
    }
    scene.validate();
    return scene;
  } catch (const json::exception& e) {
    fail(ErrorCode::Io, std::string("malformed checkpoint: ") + e.what());
  }
}

void save_scene(const std::string& path, const Scene& scene) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << scene_to_json(scene);
  if (!out) fail(ErrorCode::Io, "write failed for '" + path + "'");
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return scene_from_json(ss.str());
}

}  // namespace curvesplat
