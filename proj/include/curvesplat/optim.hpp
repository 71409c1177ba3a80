// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "curvesplat/losses.hpp"
#include "curvesplat/rasterizer.hpp"
#include "curvesplat/scene.hpp"

namespace curvesplat {

// Number of parameter groups; every learnable value belongs to exactly one.
inline constexpr int kNumParamGroups = 9;

enum class GroupKind { Plain, Quaternion, SkyTexel };

// A named view onto one parameter class of a scene. Pointers alias the scene
// and are invalidated by any structural change (pruning, loading).
struct ParamGroup {
  std::string name;
  GroupKind kind = GroupKind::Plain;
  std::vector<double*> params;
};

// The canonical group decomposition, in fixed order: positions, log_scales,
// opacity_logits, colors, rotations, offset_ctrl, center_ctrl, time_values,
// sky. flatten_grads mirrors the exact same order and entry layout.
std::vector<ParamGroup> collect_groups(Scene& scene);
std::vector<std::vector<double>> flatten_grads(const Scene& scene,
                                               const SceneGrads& grads);

// First/second moment accumulators; sized on first use.
struct AdamState {
  std::vector<double> m, v;
  long long step = 0;
};

// Bias-corrected Adam update in place. Quaternion groups are renormalized
// after the step; sky texels are clamped to [0, 1]. A non-finite gradient
// aborts before any mutation, naming the group.
void adam_step(ParamGroup& group, const std::vector<double>& grads,
               AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-15);

// Per-group base learning rates. Position-like groups (positions and curve
// control points) use `position` scaled by the scene extent with exponential
// decay to `position_final` over the run.
struct LearningRates {
  double position = 1.6e-4;
  double position_final = 1.6e-6;
  double opacity = 0.05;
  double scale = 5e-3;
  double rotation = 1e-3;
  double color = 2.5e-3;
  double time = 1e-4;
  double sky = 2e-2;
};

// lr0 * (lr1/lr0)^(iter/total): exponential interpolation over the run.
double decayed_lr(double lr0, double lr1, long long iter, long long total);

// Radius of the initial layout (statics plus object-center control points)
// around its centroid; 1 for empty scenes. Scales position learning rates.
double scene_extent(const Scene& scene);

// Removes every primitive with sigmoid(opacity_logit) below the threshold
// and compacts the Adam moments of affected groups to stay aligned.
struct PruneResult {
  size_t removed_static = 0;
  size_t removed_dynamic = 0;
};
PruneResult prune(Scene& scene, std::array<AdamState, kNumParamGroups>& states,
                  double opacity_threshold);

struct TrainFrame {
  Camera camera;
  FrameSupervision sup;
};

struct TrainConfig {
  long long iterations = 3000;
  long long prune_interval = 500;
  long long checkpoint_interval = 1000;
  uint64_t seed = 1;
  double prune_opacity = 0.005;
  LossWeights weights;
  LearningRates lrs;
  RasterConfig raster;
  InitOptions init;     // used by callers that build the scene from groups
  std::string out_dir;  // empty: no checkpoints or CSV written
};

// key=value lines (# comments) or a JSON object; unknown keys are rejected.
TrainConfig load_train_config(const std::string& path);

struct TrainResult {
  long long iterations = 0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<LossBreakdown> log;  // one entry per completed iteration
};

// Adam training loop: per iteration samples a frame with the seeded RNG,
// renders full and dynamic-only maps, evaluates the objective, backpropagates
// through both renders, and steps every group. Prunes every prune_interval
// iterations. A non-finite loss or gradient aborts, leaving the last written
// checkpoint in place. Bitwise deterministic for a given seed and any thread
// count.
TrainResult train(Scene& scene, const std::vector<TrainFrame>& frames,
                  const TrainConfig& cfg);

// Central-difference verification of an analytic gradient on a random
// subsample of each group. Two error measures per group:
//  - max_rel: worst per-slot rel = |a-fd| / (|a|+|fd|+1e-8); differences
//    below the finite-difference noise floor (5e-9) count as exact. This is
//    the strict diagnostic, but it is dominated by FD truncation on slots
//    with a tiny first and a large third derivative, so it is only
//    meaningful at small h (~1e-6 here).
//  - norm_rel: ||a-fd|| / (||a||+||fd||+1e-12) over the sampled slots, the
//    standard normwise gradient-check metric; stable at h=1e-5. Slots whose
//    difference sits under the noise floor are excluded from the numerator,
//    so a group with zero true gradient reports 0 instead of noise/noise.
struct FdGroupReport {
  std::string name;
  double max_rel = 0.0;
  double norm_rel = 0.0;
  int sampled = 0;
};
struct FdReport {
  std::vector<FdGroupReport> groups;
  double worst_rel = 0.0;       // max of max_rel over groups
  double worst_norm_rel = 0.0;  // max of norm_rel over groups
};

FdReport fd_check(Scene& scene, const std::function<double()>& objective,
                  const std::function<SceneGrads()>& analytic,
                  int samples_per_group = 32, double h = 1e-5,
                  uint64_t seed = 7);

// fd_check over the full training objective on one frame. The raster config
// should disable the alpha-skip and transmittance-stop thresholds so the
// objective is smooth.
FdReport fd_check_pipeline(Scene& scene, const TrainFrame& frame,
                           const LossWeights& weights, const RasterConfig& rc,
                           int samples_per_group = 32, double h = 1e-5,
                           uint64_t seed = 7);

}  // namespace curvesplat
