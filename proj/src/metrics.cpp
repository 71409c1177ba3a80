// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#include "curvesplat/metrics.hpp"

#include <cmath>

#include "curvesplat/core.hpp"
#include "curvesplat/losses.hpp"

namespace curvesplat {

double psnr(const Image3& a, const Image3& b, const Image1* mask) {
  if (a.width != b.width || a.height != b.height)
    fail(ErrorCode::InvalidArgument, "psnr: image shapes differ");
  double se = 0.0;
  size_t n = 0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x) {
      if (mask && mask->at(y, x) == 0.0) continue;
      for (int c = 0; c < 3; ++c) {
        double d = a.at(y, x, c) - b.at(y, x, c);
        se += d * d;
      }
      n += 3;
    }
  if (n == 0) fail(ErrorCode::InvalidArgument, "psnr: empty mask");
  double mse = se / double(n);
  if (mse == 0.0) return 99.0;
  return -10.0 * std::log10(mse);
}

std::optional<double> dyn_psnr(const Image3& a, const Image3& b,
                               const Image1& dyn_mask) {
  bool any = false;
  for (double m : dyn_mask.v)
    if (m != 0.0) {
      any = true;
      break;
    }
  if (!any) return std::nullopt;
  return psnr(a, b, &dyn_mask);
}

std::optional<double> aggregate_frames(
    const std::vector<std::optional<double>>& per_frame) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : per_frame)
    if (v) {
      sum += *v;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return sum / n;
}

double ssim_metric(const Image3& a, const Image3& b) {
  return 1.0 - ssim_loss(a, b, nullptr);
}

}  // namespace curvesplat
