// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "curvesplat/camera.hpp"
#include "curvesplat/image.hpp"
#include "curvesplat/losses.hpp"
#include "curvesplat/scene.hpp"

namespace curvesplat {

// One rigid moving object: a box-shaped Gaussian cluster whose center runs
// through the waypoints.
struct ObjectSpec {
  std::vector<Vec3> waypoints;      // world centers; >= 2
  // Optional monotone time-curve control values (first 0, last 1,
  // non-decreasing). Empty means uniform speed.
  std::vector<double> speed_knots;
  int cluster_count = 24;
  Vec3 half_extent{1.0, 0.5, 0.5};  // cluster box half-size, meters
  double gaussian_scale = 0.18;     // primitive scale, meters
  Vec3 base_color{0.8, 0.25, 0.2};
};

// Camera path: centers are interpolated piecewise-linearly over the frame
// range; orientation is identity (x right, y down, z forward).
struct CameraPathSpec {
  int width = 128, height = 96;
  double fx = 110.0, fy = 110.0;  // principal point defaults to the center
  std::vector<Vec3> eye_waypoints{Vec3{0, 0, 0}};
};

struct SyntheticSceneSpec {
  double ground_half_extent = 10.0;  // meters
  int ground_count = 220;
  int box_count = 3;
  Vec3 box_half{0.7, 0.7, 0.7};
  int box_gaussians = 36;
  double static_scale = 0.3;
  int sky_resolution = 8;
  std::vector<ObjectSpec> objects;
  CameraPathSpec camera;
  int frame_count = 40;
  double frame_rate = 10.0;        // Hz
  double annotation_noise = 0.05;  // center perturbation, fraction of span
  double image_noise = 0.0;        // additive image noise stddev
  // Positive extents and counts, frame_count >= 8, valid object specs.
  void validate() const;
};

std::string spec_to_json(const SyntheticSceneSpec& spec);
SyntheticSceneSpec spec_from_json(const std::string& text);
SyntheticSceneSpec load_spec(const std::string& path);
// Bundled two-object demo: ground plane, boxes, two crossing movers.
SyntheticSceneSpec demo_spec();

struct Split {
  std::vector<int> train, test;
};
// test = {i : i % 4 == 0}, train the complement. n < 4 puts every frame in
// train and warns on stderr.
Split split_every_4th(int frame_count);

struct DatasetFrame {
  Camera camera;
  double timestamp = 0.0;
  FrameSupervision sup;
};

struct ObjectAnnotation {
  int group = 0;
  double span = 0.0;       // cluster diagonal, meters
  double noise_rms = 0.0;  // realized center-perturbation RMS, meters
  std::string csv;         // file name inside the dataset root
};

// In-memory view of a dataset directory. Matches the on-disk bytes: images
// are the 8-bit-quantized values, depth the float32-rounded values.
struct Dataset {
  std::string root;
  int width = 0, height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int frame_count = 0;
  double frame_rate = 10.0;
  uint64_t seed = 0;
  double annotation_noise = 0.0;
  double image_noise = 0.0;
  double sparse_depth_fraction = 0.05;
  double dyn_mask_threshold = 0.5;
  double sky_mask_threshold = 0.01;
  double extent = 0.0;  // ground-truth scene extent, meters
  std::vector<DatasetFrame> frames;
  Split split;
  std::vector<ObjectAnnotation> annotations;
  std::vector<ObjectObservations> objects;  // per-frame annotation clouds
  std::vector<Vec3> static_points;
  Scene gt;  // ground-truth scene checkpoint
};

// Deterministic ground-truth scene for a spec (same seed, same scene).
Scene build_ground_truth(const SyntheticSceneSpec& spec, uint64_t seed);

// Renders every frame with the serial reference renderer, derives masks from
// the ground truth (dynamic: dynamic-only opacity > 0.5; sky: accumulated
// opacity < 0.01), samples sparse inverse depth at 5% of pixels, and writes
// images, masks, per-object annotation CSVs (centers perturbed by a smooth
// low-frequency sinusoid of amplitude annotation_noise * span), a static
// point cloud, the ground-truth checkpoint, and a manifest. Returns the
// dataset as reloaded from disk, so the in-memory view equals the stored one.
Dataset generate_dataset(const SyntheticSceneSpec& spec, uint64_t seed,
                         const std::string& out_dir);

Dataset load_dataset(const std::string& root);

// Writes a dataset directory from the in-memory view. generate -> load ->
// write reproduces every file byte for byte.
void write_dataset(const Dataset& ds, const std::string& out_dir);

struct SplitMetrics {
  double psnr = 0.0, ssim = 0.0;
  std::optional<double> dyn_psnr;
  int frames = 0;
};

struct TrajectoryError {
  int group = 0;
  double rmse_m = 0.0;
  double fraction = 0.0;  // rmse / scene extent
};

struct EvalResult {
  SplitMetrics recon, nvs;  // train split, test split
  std::vector<TrajectoryError> trajectories;
  double extent = 0.0;
  std::string table() const;  // human-readable
  std::string csv() const;
};

// Object center in world space at timestamp tau.
Vec3 track_center_at(const ObjectTrack& track, double tau);

// Renders <run_dir>/checkpoint.json over both splits with the thresholds-off
// tiled renderer in double precision, quantizes to the 8-bit grid the stored
// images live on, and reports PSNR / SSIM / Dyn-PSNR per split plus the RMS
// distance between each learned center curve and the ground-truth centers at
// the frame timestamps. Read-only over its inputs.
EvalResult evaluate_run(const std::string& run_dir, const Dataset& ds);

}  // namespace curvesplat
