// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace curvesplat {

// Row-major single-channel image, double storage.
struct Image1 {
  int width = 0, height = 0;
  std::vector<double> v;

  Image1() = default;
  Image1(int w, int h, double fill = 0.0)
      : width(w), height(h), v(size_t(w) * h, fill) {}
  double& at(int y, int x) { return v[size_t(y) * width + x]; }
  double at(int y, int x) const { return v[size_t(y) * width + x]; }
  size_t pixels() const { return size_t(width) * height; }
};

// Row-major RGB image, double storage, 3 values per pixel.
struct Image3 {
  int width = 0, height = 0;
  std::vector<double> v;

  Image3() = default;
  Image3(int w, int h, double fill = 0.0)
      : width(w), height(h), v(size_t(w) * h * 3, fill) {}
  double& at(int y, int x, int c) { return v[(size_t(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const {
    return v[(size_t(y) * width + x) * 3 + c];
  }
  size_t pixels() const { return size_t(width) * height; }
};

// Round to the nearest 8-bit level, clamping to [0,1] first.
uint8_t quantize8(double v);
// Quantize a whole image and map back to doubles (k/255). Metrics run on
// quantized renders so stored images and in-memory evaluations agree.
Image3 quantize_image(const Image3& img);

// Binary PPM (P6, 8-bit), for color images. Values clamped and quantized.
void write_ppm(const std::string& path, const Image3& img);
Image3 read_ppm(const std::string& path);

// PFM, little-endian, scale -1.0, bottom-up rows. "Pf" grayscale.
void write_pfm(const std::string& path, const Image1& img);
Image1 read_pfm(const std::string& path);
// "PF" three-channel variant.
void write_pfm3(const std::string& path, const Image3& img);
Image3 read_pfm3(const std::string& path);

// Binary PGM (P5, 8-bit) for masks; nonzero input writes 255.
void write_pgm_mask(const std::string& path, const Image1& mask);
// Read back as {0,1}.
Image1 read_pgm_mask(const std::string& path);

}  // namespace curvesplat
