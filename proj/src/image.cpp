// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#include "curvesplat/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "curvesplat/core.hpp"

namespace curvesplat {

namespace {

void write_file(const std::string& path, const std::string& header,
                const void* data, size_t bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open for writing: " + path);
  f.write(header.data(), std::streamsize(header.size()));
  f.write(static_cast<const char*>(data), std::streamsize(bytes));
  if (!f) fail(ErrorCode::Io, "short write: " + path);
}

std::vector<char> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) fail(ErrorCode::Io, "cannot open: " + path);
  std::vector<char> buf(size_t(f.tellg()));
  f.seekg(0);
  f.read(buf.data(), std::streamsize(buf.size()));
  if (!f) fail(ErrorCode::Io, "short read: " + path);
  return buf;
}

// Parse "<magic>\n<w> <h>\n<max-or-scale>\n" style headers; returns the
// offset of the binary payload.
struct NetpbmHeader {
  std::string magic;
  int width = 0, height = 0;
  double third = 0.0;
  size_t payload = 0;
};

NetpbmHeader parse_header(const std::vector<char>& buf, const std::string& path) {
  NetpbmHeader h;
  size_t pos = 0;
  auto token = [&]() -> std::string {
    while (pos < buf.size() && std::isspace((unsigned char)buf[pos])) ++pos;
    if (pos < buf.size() && buf[pos] == '#') {  // comment line
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
      while (pos < buf.size() && std::isspace((unsigned char)buf[pos])) ++pos;
    }
    size_t start = pos;
    while (pos < buf.size() && !std::isspace((unsigned char)buf[pos])) ++pos;
    if (start == pos) fail(ErrorCode::Io, "truncated header: " + path);
    return std::string(buf.begin() + start, buf.begin() + pos);
  };
  h.magic = token();
  h.width = std::stoi(token());
  h.height = std::stoi(token());
  h.third = std::stod(token());
  h.payload = pos + 1;  // single whitespace byte after the last field
  if (h.width <= 0 || h.height <= 0)
    fail(ErrorCode::Io, "bad image dimensions in " + path);
  return h;
}

}  // namespace

uint8_t quantize8(double v) {
  double c = std::clamp(v, 0.0, 1.0);
  return uint8_t(std::lround(c * 255.0));
}

Image3 quantize_image(const Image3& img) {
  Image3 out(img.width, img.height);
  for (size_t i = 0; i < img.v.size(); ++i)
    out.v[i] = quantize8(img.v[i]) / 255.0;
  return out;
}

void write_ppm(const std::string& path, const Image3& img) {
  std::string header = "P6\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> bytes(img.v.size());
  for (size_t i = 0; i < img.v.size(); ++i) bytes[i] = quantize8(img.v[i]);
  write_file(path, header, bytes.data(), bytes.size());
}

Image3 read_ppm(const std::string& path) {
  std::vector<char> buf = read_file(path);
  NetpbmHeader h = parse_header(buf, path);
  if (h.magic != "P6" || h.third != 255.0)
    fail(ErrorCode::Io, "not an 8-bit P6 file: " + path);
  Image3 img(h.width, h.height);
  if (buf.size() < h.payload + img.v.size())
    fail(ErrorCode::Io, "truncated pixel data: " + path);
  for (size_t i = 0; i < img.v.size(); ++i)
    img.v[i] = uint8_t(buf[h.payload + i]) / 255.0;
  return img;
}

void write_pfm(const std::string& path, const Image1& img) {
  std::string header = "Pf\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n-1.0\n";
  // PFM stores rows bottom-up.
  std::vector<float> data(img.v.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      data[size_t(img.height - 1 - y) * img.width + x] = float(img.at(y, x));
  write_file(path, header, data.data(), data.size() * sizeof(float));
}

Image1 read_pfm(const std::string& path) {
  std::vector<char> buf = read_file(path);
  NetpbmHeader h = parse_header(buf, path);
  if (h.magic != "Pf" || !(h.third < 0))
    fail(ErrorCode::Io, "not a little-endian grayscale PFM: " + path);
  Image1 img(h.width, h.height);
  if (buf.size() < h.payload + img.v.size() * sizeof(float))
    fail(ErrorCode::Io, "truncated pixel data: " + path);
  const float* data = reinterpret_cast<const float*>(buf.data() + h.payload);
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x)
      img.at(y, x) = data[size_t(h.height - 1 - y) * h.width + x];
  return img;
}

void write_pfm3(const std::string& path, const Image3& img) {
  std::string header = "PF\n" + std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n-1.0\n";
  std::vector<float> data(img.v.size());
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        data[(size_t(img.height - 1 - y) * img.width + x) * 3 + c] =
            float(img.at(y, x, c));
  write_file(path, header, data.data(), data.size() * sizeof(float));
}

Image3 read_pfm3(const std::string& path) {
  std::vector<char> buf = read_file(path);
  NetpbmHeader h = parse_header(buf, path);
  if (h.magic != "PF" || !(h.third < 0))
    fail(ErrorCode::Io, "not a little-endian color PFM: " + path);
  Image3 img(h.width, h.height);
  if (buf.size() < h.payload + img.v.size() * sizeof(float))
    fail(ErrorCode::Io, "truncated pixel data: " + path);
  const float* data = reinterpret_cast<const float*>(buf.data() + h.payload);
  for (int y = 0; y < h.height; ++y)
    for (int x = 0; x < h.width; ++x)
      for (int c = 0; c < 3; ++c)
        img.at(y, x, c) = data[(size_t(h.height - 1 - y) * h.width + x) * 3 + c];
  return img;
}

void write_pgm_mask(const std::string& path, const Image1& mask) {
  std::string header = "P5\n" + std::to_string(mask.width) + " " +
                       std::to_string(mask.height) + "\n255\n";
  std::vector<uint8_t> bytes(mask.v.size());
  for (size_t i = 0; i < mask.v.size(); ++i)
    bytes[i] = mask.v[i] != 0.0 ? 255 : 0;
  write_file(path, header, bytes.data(), bytes.size());
}

Image1 read_pgm_mask(const std::string& path) {
  std::vector<char> buf = read_file(path);
  NetpbmHeader h = parse_header(buf, path);
  if (h.magic != "P5" || h.third != 255.0)
    fail(ErrorCode::Io, "not an 8-bit P5 file: " + path);
  Image1 img(h.width, h.height);
  if (buf.size() < h.payload + img.v.size())
    fail(ErrorCode::Io, "truncated pixel data: " + path);
  for (size_t i = 0; i < img.v.size(); ++i)
    img.v[i] = uint8_t(buf[h.payload + i]) >= 128 ? 1.0 : 0.0;
  return img;
}

}  // namespace curvesplat
