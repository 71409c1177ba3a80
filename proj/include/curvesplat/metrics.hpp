// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "curvesplat/image.hpp"

namespace curvesplat {

// PSNR in dB for unit dynamic range: -10 log10(MSE) over the (masked)
// pixels. Exact matches report the 99.0 sentinel instead of infinity.
// Throws InvalidArgument on an all-zero mask.
double psnr(const Image3& a, const Image3& b, const Image1* mask = nullptr);

// PSNR restricted to the dynamic mask. An empty mask yields nullopt so the
// frame can be skipped during aggregation.
std::optional<double> dyn_psnr(const Image3& a, const Image3& b,
                               const Image1& dyn_mask);

// Mean of the present values; nullopt when every frame was skipped.
std::optional<double> aggregate_frames(
    const std::vector<std::optional<double>>& per_frame);

// Mean SSIM (11x11 Gaussian window, sigma 1.5, valid region only).
double ssim_metric(const Image3& a, const Image3& b);

}  // namespace curvesplat
