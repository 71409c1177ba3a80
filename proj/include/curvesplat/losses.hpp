// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "curvesplat/image.hpp"
#include "curvesplat/rasterizer.hpp"
#include "curvesplat/scene.hpp"

namespace curvesplat {

// Relative weighting of the training objective's terms. The color terms are
// split as (1 - lambda_r) * L1 + lambda_r * SSIM.
struct LossWeights {
  double lambda_r = 0.2;
  double lambda_d = 1.0;
  double lambda_o_sky = 0.05;
  double lambda_icc = 0.01;
  double lambda_dr = 0.1;
  double lambda_v = 1.0;
};

// The applied per-term coefficients. The objective is strictly linear in
// these (it is only affine in LossWeights because of the 1 - lambda_r color
// split), so gradient linearity holds in this space.
struct TermCoefficients {
  double l1 = 0.8;
  double ssim = 0.2;
  double sky = 0.05;
  double icc = 0.01;
  double dr = 0.1;
  double vel = 1.0;
  double depth = 1.0;
};

TermCoefficients term_coefficients(const LossWeights& w);

// Per-frame supervision targets. Masks are binary {0, 1}; inv_depth is only
// meaningful where depth_valid is 1.
struct FrameSupervision {
  Image3 gt;
  Image1 inv_depth;
  Image1 depth_valid;
  Image1 sky_mask;
  Image1 dyn_mask;
};

// Every loss below returns its (unweighted) forward value and, when the
// gradient output pointer is non-null, accumulates w * dLoss/d(input) into
// it. Gradients are accumulated, not assigned, so terms compose.

// Mean absolute difference over (optionally masked) elements. An all-zero
// mask yields 0 with a warning on stderr.
double l1_loss(const Image3& a, const Image3& b, const Image1* mask = nullptr,
               Image3* d_a = nullptr, double w = 1.0);
double l1_loss(const Image1& a, const Image1& b, const Image1* mask = nullptr,
               Image1* d_a = nullptr, double w = 1.0);

// 1 - mean local SSIM with an 11x11 Gaussian window (sigma 1.5) and the
// standard constants C1 = 0.01^2, C2 = 0.03^2 for unit dynamic range. Only
// fully interior windows contribute. Images smaller than the window raise
// Error(InvalidArgument).
double ssim_loss(const Image3& a, const Image3& b, Image3* d_a = nullptr,
                 double w = 1.0);

// Mean L1 between a sparse inverse-depth map and the rendered inverse depth
// over valid pixels. No valid pixels yields 0 with a warning.
double depth_loss(const Image1& inv_depth, const Image1& valid,
                  const Image1& rendered, Image1* d_rendered = nullptr,
                  double w = 1.0);

// Mean over sky pixels of -log(max(1 - O, 1e-6)). No sky pixels yields 0.
double sky_opacity_loss(const Image1& sky_mask, const Image1& opacity,
                        Image1* d_opacity = nullptr, double w = 1.0);

// Mean over dynamic Gaussians of | |delta(t)| - (|p_0| + |p_n|) / 2 | with
// delta the offset curve at the track's current parameter. Contributions are
// summed in sorted order so the value is independent of primitive ordering.
// Gradients flow into offset control points and (gated) time-curve values.
double inter_curve_consistency(const Scene& scene, double tau,
                               SceneGrads* grads = nullptr, double w = 1.0);

// (1 - lambda_r) * L1 + lambda_r * SSIM between the mask-extracted ground
// truth and the raw dynamic-only color render, plus the mean L1 alignment
// between the dynamic mask and the dynamic-only opacity map.
double dynamic_rendering_loss(const Image3& gt, const Image1& dyn_mask,
                              const RenderOutput& dyn, double lambda_r,
                              RenderCotangents* cot = nullptr, double w = 1.0);

// Frobenius norm of the velocity map outside the dynamic mask, divided by
// the pixel count.
double velocity_loss(const Image3& velocity, const Image1& dyn_mask,
                     Image3* d_velocity = nullptr, double w = 1.0);

// Unweighted per-term values plus the weighted total, with CSV helpers for
// per-iteration logging.
struct LossBreakdown {
  double l1 = 0.0;
  double ssim = 0.0;
  double sky = 0.0;
  double icc = 0.0;
  double dr = 0.0;
  double vel = 0.0;
  double depth = 0.0;
  double total = 0.0;

  static const char* csv_header();  // "iter,l1,ssim,sky,icc,dr,vel,depth,total"
  std::string csv_row(long long iter) const;
};

// Full objective: color terms on the composited render, depth and sky terms
// on its auxiliary maps, dynamic-rendering and velocity terms on the
// dynamic-only render, and the inter-curve term directly on the scene.
// lambda_r_dyn fixes the L1/SSIM split inside the dynamic rendering term.
// Gradients accumulate into the two cotangent sets and direct_grads.
LossBreakdown total_loss_weighted(const RenderOutput& full,
                                  const RenderOutput& dyn,
                                  const FrameSupervision& sup,
                                  const Scene& scene, double tau,
                                  const TermCoefficients& c,
                                  double lambda_r_dyn,
                                  RenderCotangents* cot_full = nullptr,
                                  RenderCotangents* cot_dyn = nullptr,
                                  SceneGrads* direct_grads = nullptr);

LossBreakdown total_loss(const RenderOutput& full, const RenderOutput& dyn,
                         const FrameSupervision& sup, const Scene& scene,
                         double tau, const LossWeights& weights,
                         RenderCotangents* cot_full = nullptr,
                         RenderCotangents* cot_dyn = nullptr,
                         SceneGrads* direct_grads = nullptr);

}  // namespace curvesplat
