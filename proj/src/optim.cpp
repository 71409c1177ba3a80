// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#include "curvesplat/optim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "json.hpp"

namespace curvesplat {

namespace {

constexpr const char* kGroupNames[kNumParamGroups] = {
    "positions",   "log_scales",  "opacity_logits", "colors", "rotations",
    "offset_ctrl", "center_ctrl", "time_values",    "sky"};

enum GroupIndex {
  kPositions = 0,
  kLogScales,
  kOpacityLogits,
  kColors,
  kRotations,
  kOffsetCtrl,
  kCenterCtrl,
  kTimeValues,
  kSky,
};

void push_vec3(std::vector<double*>& out, Vec3& v) {
  out.push_back(&v.x);
  out.push_back(&v.y);
  out.push_back(&v.z);
}

void push_vec3_vals(std::vector<double>& out, const Vec3& v) {
  out.push_back(v.x);
  out.push_back(v.y);
  out.push_back(v.z);
}

}  // namespace

std::vector<ParamGroup> collect_groups(Scene& scene) {
  std::vector<ParamGroup> gs(kNumParamGroups);
  for (int i = 0; i < kNumParamGroups; ++i) gs[(size_t)i].name = kGroupNames[i];
  gs[kRotations].kind = GroupKind::Quaternion;
  gs[kSky].kind = GroupKind::SkyTexel;

  for (StaticGaussian& g : scene.statics) push_vec3(gs[kPositions].params, g.position);

  for (StaticGaussian& g : scene.statics) push_vec3(gs[kLogScales].params, g.log_scale);
  for (DynamicGaussian& g : scene.dynamics) push_vec3(gs[kLogScales].params, g.log_scale);

  for (StaticGaussian& g : scene.statics) gs[kOpacityLogits].params.push_back(&g.opacity_logit);
  for (DynamicGaussian& g : scene.dynamics) gs[kOpacityLogits].params.push_back(&g.opacity_logit);

  for (StaticGaussian& g : scene.statics) {
    for (double& c : g.color) gs[kColors].params.push_back(&c);
  }
  for (DynamicGaussian& g : scene.dynamics) {
    for (double& c : g.color) gs[kColors].params.push_back(&c);
  }

  for (StaticGaussian& g : scene.statics) {
    gs[kRotations].params.push_back(&g.q.w);
    gs[kRotations].params.push_back(&g.q.x);
    gs[kRotations].params.push_back(&g.q.y);
    gs[kRotations].params.push_back(&g.q.z);
  }
  for (DynamicGaussian& g : scene.dynamics) {
    gs[kRotations].params.push_back(&g.q.w);
    gs[kRotations].params.push_back(&g.q.x);
    gs[kRotations].params.push_back(&g.q.y);
    gs[kRotations].params.push_back(&g.q.z);
  }

  for (DynamicGaussian& g : scene.dynamics) {
    for (double& p : g.offset_curve.pts) gs[kOffsetCtrl].params.push_back(&p);
  }
  for (ObjectTrack& t : scene.tracks) {
    for (double& p : t.center_curve.pts) gs[kCenterCtrl].params.push_back(&p);
  }
  for (ObjectTrack& t : scene.tracks) {
    for (double& p : t.time_curve.pts) gs[kTimeValues].params.push_back(&p);
  }
  for (auto& face : scene.sky.faces) {
    for (double& t : face) gs[kSky].params.push_back(&t);
  }
  return gs;
}

std::vector<std::vector<double>> flatten_grads(const Scene& scene,
                                               const SceneGrads& g) {
  std::vector<std::vector<double>> out(kNumParamGroups);

  for (size_t i = 0; i < scene.statics.size(); ++i) {
    push_vec3_vals(out[kPositions], g.static_position[i]);
  }

  for (size_t i = 0; i < scene.statics.size(); ++i) {
    push_vec3_vals(out[kLogScales], g.static_log_scale[i]);
  }
  for (size_t i = 0; i < scene.dynamics.size(); ++i) {
    push_vec3_vals(out[kLogScales], g.dyn_log_scale[i]);
  }

  out[kOpacityLogits] = g.static_opacity_logit;
  out[kOpacityLogits].insert(out[kOpacityLogits].end(),
                             g.dyn_opacity_logit.begin(),
                             g.dyn_opacity_logit.end());

  for (size_t i = 0; i < scene.statics.size(); ++i) {
    for (double c : g.static_color[i]) out[kColors].push_back(c);
  }
  for (size_t i = 0; i < scene.dynamics.size(); ++i) {
    for (double c : g.dyn_color[i]) out[kColors].push_back(c);
  }

  for (size_t i = 0; i < scene.statics.size(); ++i) {
    const Quat& q = g.static_q[i];
    out[kRotations].push_back(q.w);
    out[kRotations].push_back(q.x);
    out[kRotations].push_back(q.y);
    out[kRotations].push_back(q.z);
  }
  for (size_t i = 0; i < scene.dynamics.size(); ++i) {
    const Quat& q = g.dyn_q[i];
    out[kRotations].push_back(q.w);
    out[kRotations].push_back(q.x);
    out[kRotations].push_back(q.y);
    out[kRotations].push_back(q.z);
  }

  for (const std::vector<double>& oc : g.offset_ctrl) {
    out[kOffsetCtrl].insert(out[kOffsetCtrl].end(), oc.begin(), oc.end());
  }
  for (const std::vector<double>& cc : g.center_ctrl) {
    out[kCenterCtrl].insert(out[kCenterCtrl].end(), cc.begin(), cc.end());
  }
  for (const std::vector<double>& tv : g.time_values) {
    out[kTimeValues].insert(out[kTimeValues].end(), tv.begin(), tv.end());
  }
  for (const std::vector<double>& f : g.sky_faces) {
    out[kSky].insert(out[kSky].end(), f.begin(), f.end());
  }
  return out;
}

void adam_step(ParamGroup& group, const std::vector<double>& grads,
               AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  const size_t n = group.params.size();
  if (grads.size() != n) {
    fail(ErrorCode::ContractViolation,
         "adam_step: gradient size mismatch in group '" + group.name + "'");
  }
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  } else if (state.m.size() != n) {
    fail(ErrorCode::ContractViolation,
         "adam_step: state size mismatch in group '" + group.name + "'");
  }
  for (double gv : grads) {
    if (!std::isfinite(gv)) {
      fail(ErrorCode::DegenerateInput,
           "adam_step: non-finite gradient in group '" + group.name + "'");
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(beta1, (double)state.step);
  const double bc2 = 1.0 - std::pow(beta2, (double)state.step);
  for (size_t i = 0; i < n; ++i) {
    const double gv = grads[i];
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * gv;
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * gv * gv;
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    *group.params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  if (group.kind == GroupKind::Quaternion) {
    for (size_t i = 0; i + 3 < n; i += 4) {
      const double w = *group.params[i], x = *group.params[i + 1];
      const double y = *group.params[i + 2], z = *group.params[i + 3];
      const double nrm = std::sqrt(w * w + x * x + y * y + z * z);
      if (nrm > 0.0) {
        *group.params[i] = w / nrm;
        *group.params[i + 1] = x / nrm;
        *group.params[i + 2] = y / nrm;
        *group.params[i + 3] = z / nrm;
      }
    }
  } else if (group.kind == GroupKind::SkyTexel) {
    for (size_t i = 0; i < n; ++i) {
      *group.params[i] = std::clamp(*group.params[i], 0.0, 1.0);
    }
  }
}

double decayed_lr(double lr0, double lr1, long long iter, long long total) {
  if (total <= 0 || lr0 <= 0.0) return lr1;
  const double t = std::clamp((double)iter / (double)total, 0.0, 1.0);
  return lr0 * std::pow(lr1 / lr0, t);
}

double scene_extent(const Scene& scene) {
  std::vector<Vec3> pts;
  for (const StaticGaussian& g : scene.statics) pts.push_back(g.position);
  for (const ObjectTrack& t : scene.tracks) {
    for (int i = 0; i <= t.center_curve.degree; ++i) {
      pts.push_back(t.center_curve.ctrl3(i));
    }
  }
  if (pts.empty()) return 1.0;
  Vec3 centroid{0, 0, 0};
  for (const Vec3& p : pts) centroid = centroid + p;
  centroid = centroid * (1.0 / (double)pts.size());
  double r = 0.0;
  for (const Vec3& p : pts) r = std::max(r, (p - centroid).norm());
  return r > 0.0 ? r : 1.0;
}

namespace {

// Drops the moment entries whose keep flag is false; no-op on empty state.
void filter_state(AdamState& st, const std::vector<char>& keep) {
  if (st.m.empty()) return;
  std::vector<double> m2, v2;
  m2.reserve(st.m.size());
  v2.reserve(st.v.size());
  for (size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) {
      m2.push_back(st.m[i]);
      v2.push_back(st.v[i]);
    }
  }
  st.m = std::move(m2);
  st.v = std::move(v2);
}

// Expands per-primitive keep flags (statics then dynamics) to per-entry
// flags with `width` values per primitive.
std::vector<char> expand_keep(const std::vector<char>& keep_s,
                              const std::vector<char>& keep_d, int width) {
  std::vector<char> out;
  out.reserve((keep_s.size() + keep_d.size()) * (size_t)width);
  for (char k : keep_s) out.insert(out.end(), (size_t)width, k);
  for (char k : keep_d) out.insert(out.end(), (size_t)width, k);
  return out;
}

}  // namespace

PruneResult prune(Scene& scene, std::array<AdamState, kNumParamGroups>& states,
                  double opacity_threshold) {
  std::vector<char> keep_s(scene.statics.size()), keep_d(scene.dynamics.size());
  for (size_t i = 0; i < scene.statics.size(); ++i) {
    keep_s[i] = sigmoid(scene.statics[i].opacity_logit) >= opacity_threshold;
  }
  for (size_t i = 0; i < scene.dynamics.size(); ++i) {
    keep_d[i] = sigmoid(scene.dynamics[i].opacity_logit) >= opacity_threshold;
  }
  PruneResult res;
  res.removed_static =
      (size_t)std::count(keep_s.begin(), keep_s.end(), (char)0);
  res.removed_dynamic =
      (size_t)std::count(keep_d.begin(), keep_d.end(), (char)0);
  if (res.removed_static == 0 && res.removed_dynamic == 0) return res;

  const std::vector<char> none;
  filter_state(states[kPositions], expand_keep(keep_s, none, 3));
  filter_state(states[kLogScales], expand_keep(keep_s, keep_d, 3));
  filter_state(states[kOpacityLogits], expand_keep(keep_s, keep_d, 1));
  filter_state(states[kColors], expand_keep(keep_s, keep_d, 12));
  filter_state(states[kRotations], expand_keep(keep_s, keep_d, 4));
  if (!states[kOffsetCtrl].m.empty() && !scene.dynamics.empty()) {
    const int width = (int)scene.dynamics[0].offset_curve.pts.size();
    filter_state(states[kOffsetCtrl], expand_keep(none, keep_d, width));
  }

  std::vector<StaticGaussian> ns;
  ns.reserve(scene.statics.size() - res.removed_static);
  for (size_t i = 0; i < scene.statics.size(); ++i) {
    if (keep_s[i]) ns.push_back(std::move(scene.statics[i]));
  }
  scene.statics = std::move(ns);
  std::vector<DynamicGaussian> nd;
  nd.reserve(scene.dynamics.size() - res.removed_dynamic);
  for (size_t i = 0; i < scene.dynamics.size(); ++i) {
    if (keep_d[i]) nd.push_back(std::move(scene.dynamics[i]));
  }
  scene.dynamics = std::move(nd);
  return res;
}

namespace {

double group_lr(int gi, const LearningRates& lrs, double extent,
                long long iter, long long total) {
  switch (gi) {
    case kPositions:
    case kOffsetCtrl:
    case kCenterCtrl:
      return extent *
             decayed_lr(lrs.position, lrs.position_final, iter, total);
    case kLogScales:
      return lrs.scale;
    case kOpacityLogits:
      return lrs.opacity;
    case kColors:
      return lrs.color;
    case kRotations:
      return lrs.rotation;
    case kTimeValues:
      return lrs.time;
    case kSky:
      return lrs.sky;
    default:
      return 0.0;
  }
}

void apply_config_key(TrainConfig& cfg, const std::string& key,
                      const std::string& value) {
  auto d = [&value] { return std::stod(value); };
  auto ll = [&value] { return std::stoll(value); };
  if (key == "iterations") cfg.iterations = ll();
  else if (key == "prune_interval") cfg.prune_interval = ll();
  else if (key == "checkpoint_interval") cfg.checkpoint_interval = ll();
  else if (key == "seed") cfg.seed = (uint64_t)std::stoull(value);
  else if (key == "prune_opacity") cfg.prune_opacity = d();
  else if (key == "lambda_r") cfg.weights.lambda_r = d();
  else if (key == "lambda_d") cfg.weights.lambda_d = d();
  else if (key == "lambda_o_sky") cfg.weights.lambda_o_sky = d();
  else if (key == "lambda_icc") cfg.weights.lambda_icc = d();
  else if (key == "lambda_dr") cfg.weights.lambda_dr = d();
  else if (key == "lambda_v") cfg.weights.lambda_v = d();
  else if (key == "lr_position") cfg.lrs.position = d();
  else if (key == "lr_position_final") cfg.lrs.position_final = d();
  else if (key == "lr_opacity") cfg.lrs.opacity = d();
  else if (key == "lr_scale") cfg.lrs.scale = d();
  else if (key == "lr_rotation") cfg.lrs.rotation = d();
  else if (key == "lr_color") cfg.lrs.color = d();
  else if (key == "lr_time") cfg.lrs.time = d();
  else if (key == "lr_sky") cfg.lrs.sky = d();
  else if (key == "tile") cfg.raster.tile = (int)ll();
  else if (key == "alpha_skip") cfg.raster.alpha_skip = d();
  else if (key == "t_floor") cfg.raster.t_floor = d();
  else if (key == "init_points_per_object") cfg.init.points_per_object = (int)ll();
  else if (key == "init_max_static_points") cfg.init.max_static_points = (int)ll();
  else if (key == "init_opacity") cfg.init.opacity_init = d();
  else if (key == "init_sky_res") cfg.init.sky_res = (int)ll();
  else if (key == "sh_degree") cfg.init.sh_degree = (int)ll();
  else if (key == "trajectory_degree") cfg.init.trajectory_degree = (int)ll();
  else {
    fail(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
  }
}

}  // namespace

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  TrainConfig cfg;

  const size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) fail(ErrorCode::Io, "config parse failed: " + path);
    for (auto it = j.begin(); it != j.end(); ++it) {
      std::string v;
      if (it.value().is_string()) v = it.value().get<std::string>();
      else v = it.value().dump();
      apply_config_key(cfg, it.key(), v);
    }
    return cfg;
  }

  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const size_t a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos) continue;
    const size_t b = line.find_last_not_of(" \t\r");
    line = line.substr(a, b - a + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::InvalidArgument,
           "config line " + std::to_string(lineno) + " is not key=value");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    const size_t ke = key.find_last_not_of(" \t");
    key = key.substr(0, ke + 1);
    const size_t vs = value.find_first_not_of(" \t");
    value = vs == std::string::npos ? "" : value.substr(vs);
    apply_config_key(cfg, key, value);
  }
  return cfg;
}

TrainResult train(Scene& scene, const std::vector<TrainFrame>& frames,
                  const TrainConfig& cfg) {
  TrainResult res;
  if (frames.empty()) {
    res.aborted = true;
    res.abort_reason = "no training frames";
    return res;
  }
  std::array<AdamState, kNumParamGroups> states;
  std::mt19937_64 rng(cfg.seed);
  const double extent = scene_extent(scene);
  const bool io = !cfg.out_dir.empty();
  if (io) std::filesystem::create_directories(cfg.out_dir);

  auto checkpoint = [&]() {
    if (io) save_scene(cfg.out_dir + "/checkpoint.json", scene);
  };

  for (long long iter = 0; iter < cfg.iterations; ++iter) {
    const TrainFrame& f = frames[rng() % frames.size()];
    const int w = f.camera.width, h = f.camera.height;
    try {
      const RenderOutput full = render(scene, f.camera, cfg.raster,
                                       RenderSubset::All);
      const RenderOutput dyn = render(scene, f.camera, cfg.raster,
                                      RenderSubset::DynamicOnly);
      RenderCotangents cot_full(w, h), cot_dyn(w, h);
      SceneGrads grads;
      grads.init_zero(scene);
      const LossBreakdown b =
          total_loss(full, dyn, f.sup, scene, f.camera.tau, cfg.weights,
                     &cot_full, &cot_dyn, &grads);
      if (!std::isfinite(b.total)) {
        res.aborted = true;
        res.abort_reason = "non-finite loss at iteration " +
                           std::to_string(iter);
        return res;
      }
      grads.add_scaled(render_adjoint(scene, f.camera, cfg.raster,
                                      RenderSubset::All, full, cot_full),
                       1.0);
      grads.add_scaled(render_adjoint(scene, f.camera, cfg.raster,
                                      RenderSubset::DynamicOnly, dyn, cot_dyn),
                       1.0);

      std::vector<ParamGroup> groups = collect_groups(scene);
      const std::vector<std::vector<double>> flat = flatten_grads(scene, grads);
      for (int gi = 0; gi < kNumParamGroups; ++gi) {
        adam_step(groups[(size_t)gi], flat[(size_t)gi], states[(size_t)gi],
                  group_lr(gi, cfg.lrs, extent, iter, cfg.iterations));
      }
      res.log.push_back(b);
      res.iterations = iter + 1;
    } catch (const Error& e) {
      res.aborted = true;
      res.abort_reason = e.what();
      return res;
    }

    if (cfg.checkpoint_interval > 0 && (iter + 1) % cfg.checkpoint_interval == 0) {
      checkpoint();
    }
    if (cfg.prune_interval > 0 && (iter + 1) % cfg.prune_interval == 0 &&
        iter + 1 < cfg.iterations) {
      prune(scene, states, cfg.prune_opacity);
    }
  }

  checkpoint();
  if (io) {
    std::ofstream csv(cfg.out_dir + "/train_log.csv");
    csv << LossBreakdown::csv_header() << "\n";
    for (size_t i = 0; i < res.log.size(); ++i) {
      csv << res.log[i].csv_row((long long)i) << "\n";
    }
  }
  return res;
}

FdReport fd_check(Scene& scene, const std::function<double()>& objective,
                  const std::function<SceneGrads()>& analytic,
                  int samples_per_group, double h, uint64_t seed) {
  const SceneGrads grads = analytic();
  std::vector<ParamGroup> groups = collect_groups(scene);
  const std::vector<std::vector<double>> flat = flatten_grads(scene, grads);
  std::mt19937_64 rng(seed);

  FdReport report;
  for (int gi = 0; gi < kNumParamGroups; ++gi) {
    ParamGroup& grp = groups[(size_t)gi];
    FdGroupReport gr;
    gr.name = grp.name;
    const size_t n = grp.params.size();
    if (n > 0) {
      std::vector<size_t> order(n);
      std::iota(order.begin(), order.end(), (size_t)0);
      std::shuffle(order.begin(), order.end(), rng);
      const size_t take = std::min((size_t)samples_per_group, n);
      double sum_d2 = 0.0, sum_a2 = 0.0, sum_f2 = 0.0;
      for (size_t s = 0; s < take; ++s) {
        double* slot = grp.params[order[s]];
        const double a = flat[(size_t)gi][order[s]];
        const double keep = *slot;
        *slot = keep + h;
        const double fp = objective();
        *slot = keep - h;
        const double fm = objective();
        *slot = keep;
        const double fd = (fp - fm) / (2.0 * h);
        // Below the cancellation floor of central differences the comparison
        // carries no information; count those as exact.
        double rel = 0.0;
        if (std::abs(a - fd) >= 5e-9) {
          rel = std::abs(a - fd) / (std::abs(a) + std::abs(fd) + 1e-8);
        }
        gr.max_rel = std::max(gr.max_rel, rel);
        if (std::abs(a - fd) >= 5e-9) sum_d2 += (a - fd) * (a - fd);
        sum_a2 += a * a;
        sum_f2 += fd * fd;
        ++gr.sampled;
      }
      gr.norm_rel = std::sqrt(sum_d2) /
                    (std::sqrt(sum_a2) + std::sqrt(sum_f2) + 1e-12);
    }
    report.worst_rel = std::max(report.worst_rel, gr.max_rel);
    report.worst_norm_rel = std::max(report.worst_norm_rel, gr.norm_rel);
    report.groups.push_back(std::move(gr));
  }
  return report;
}

FdReport fd_check_pipeline(Scene& scene, const TrainFrame& frame,
                           const LossWeights& weights, const RasterConfig& rc,
                           int samples_per_group, double h, uint64_t seed) {
  auto objective = [&]() {
    const RenderOutput full = render(scene, frame.camera, rc, RenderSubset::All);
    const RenderOutput dyn =
        render(scene, frame.camera, rc, RenderSubset::DynamicOnly);
    return total_loss(full, dyn, frame.sup, scene, frame.camera.tau, weights)
        .total;
  };
  auto analytic = [&]() {
    const RenderOutput full = render(scene, frame.camera, rc, RenderSubset::All);
    const RenderOutput dyn =
        render(scene, frame.camera, rc, RenderSubset::DynamicOnly);
    RenderCotangents cot_full(frame.camera.width, frame.camera.height);
    RenderCotangents cot_dyn(frame.camera.width, frame.camera.height);
    SceneGrads g;
    g.init_zero(scene);
    total_loss(full, dyn, frame.sup, scene, frame.camera.tau, weights,
               &cot_full, &cot_dyn, &g);
    g.add_scaled(render_adjoint(scene, frame.camera, rc, RenderSubset::All,
                                full, cot_full),
                 1.0);
    g.add_scaled(render_adjoint(scene, frame.camera, rc,
                                RenderSubset::DynamicOnly, dyn, cot_dyn),
                 1.0);
    return g;
  };
  return fd_check(scene, objective, analytic, samples_per_group, h, seed);
}

}  // namespace curvesplat
