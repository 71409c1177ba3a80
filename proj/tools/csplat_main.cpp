// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
//
// csplat: synthetic dataset generation, curve fitting, training, rendering,
// and evaluation for curve-based dynamic scene reconstruction.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "curvesplat/dataset.hpp"
#include "curvesplat/fitting.hpp"
#include "curvesplat/optim.hpp"
#include "curvesplat/rasterizer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace curvesplat;
using nlohmann::json;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create directory '" + dir + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

int run_gen(const std::string& spec_arg, const std::string& out, uint64_t seed) {
  const SyntheticSceneSpec spec =
      spec_arg == "demo" ? demo_spec() : load_spec(spec_arg);
  const Dataset ds = generate_dataset(spec, seed, out);
  std::cout << "wrote " << ds.frame_count << " frames, "
            << ds.gt.statics.size() << " static and " << ds.gt.dynamics.size()
            << " dynamic primitives to " << out << "\n";
  return 0;
}

int run_fit(const std::string& csv_path, const std::string& out, int degree) {
  std::istringstream in(read_text(csv_path));
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::Io, "empty csv '" + csv_path + "'");
  const std::vector<std::string> header = split_csv_line(line);
  std::vector<Vec3> points;
  if (header == std::vector<std::string>{"frame", "timestamp", "x", "y", "z"}) {
    // Per-frame clouds: fit runs on the frame means.
    std::vector<Vec3> sums;
    std::vector<int> counts;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> c = split_csv_line(line);
      if (c.size() != 5) fail(ErrorCode::Io, csv_path + ": bad row");
      const int frame = std::stoi(c[0]);
      if (frame < 0) fail(ErrorCode::Io, csv_path + ": negative frame index");
      if ((size_t)frame >= sums.size()) {
        sums.resize((size_t)frame + 1, Vec3{0, 0, 0});
        counts.resize((size_t)frame + 1, 0);
      }
      sums[(size_t)frame] += Vec3{std::stod(c[2]), std::stod(c[3]), std::stod(c[4])};
      counts[(size_t)frame] += 1;
    }
    for (size_t i = 0; i < sums.size(); ++i) {
      if (counts[i] == 0) {
        fail(ErrorCode::InvalidArgument,
             csv_path + ": no rows for frame " + std::to_string(i));
      }
      points.push_back(sums[i] * (1.0 / counts[i]));
    }
  } else if (header == std::vector<std::string>{"x", "y", "z"}) {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const std::vector<std::string> c = split_csv_line(line);
      if (c.size() != 3) fail(ErrorCode::Io, csv_path + ": bad row");
      points.push_back(Vec3{std::stod(c[0]), std::stod(c[1]), std::stod(c[2])});
    }
  } else {
    fail(ErrorCode::InvalidArgument,
         csv_path + ": expected header 'frame,timestamp,x,y,z' or 'x,y,z'");
  }
  const FitResult res = fit3(points, degree);
  {
    std::ofstream f(out, std::ios::binary);
    if (!f) fail(ErrorCode::Io, "cannot write '" + out + "'");
    f << curve_to_json(res.curve);
  }
  std::printf("fit %zu points, degree %d, rms residual %.6g (%d rounds)\n",
              points.size(), degree, res.residual, res.iterations);
  return 0;
}

int run_train(const std::string& dataset_dir, const std::string& config_arg,
              const std::string& out, bool seed_set, uint64_t seed,
              const std::string& precision, int fd_samples) {
  TrainConfig cfg;
  if (config_arg != "default") cfg = load_train_config(config_arg);
  if (seed_set) cfg.seed = seed;
  if (precision == "f32") cfg.raster.f32_accum = true;

  const Dataset ds = load_dataset(dataset_dir);
  Scene scene = init_scene_from_groups(ds.objects, ds.static_points, cfg.init);

  std::vector<TrainFrame> frames;
  for (int i : ds.split.train) {
    frames.push_back(TrainFrame{ds.frames[(size_t)i].camera,
                                ds.frames[(size_t)i].sup});
  }

  if (fd_samples > 0) {
    // Gradient check in place of training; needs a smooth double-precision
    // objective, so thresholds and float accumulation are rejected.
    if (precision == "f32") {
      fail(ErrorCode::InvalidArgument,
           "--fd-check requires --precision f64");
    }
    RasterConfig rc = cfg.raster;
    rc.alpha_skip = 0.0;
    rc.t_floor = 0.0;
    rc.f32_accum = false;
    const FdReport rep = fd_check_pipeline(scene, frames.at(0), cfg.weights,
                                           rc, fd_samples, 1e-5, cfg.seed);
    std::printf("%-16s %10s %12s %12s\n", "group", "sampled", "max_rel",
                "norm_rel");
    for (const FdGroupReport& g : rep.groups) {
      std::printf("%-16s %10d %12.3e %12.3e\n", g.name.c_str(), g.sampled,
                  g.max_rel, g.norm_rel);
    }
    std::printf("worst normwise relative error: %.3e\n", rep.worst_norm_rel);
    return 0;
  }

  ensure_dir(out);
  cfg.out_dir = out;
  const TrainResult res = train(scene, frames, cfg);
  if (res.aborted) {
    std::cerr << "error: training aborted: " << res.abort_reason << "\n";
    return 1;
  }
  std::printf("trained %lld iterations; final loss %.6g; checkpoint in %s\n",
              res.iterations,
              res.log.empty() ? 0.0 : res.log.back().total, out.c_str());
  return 0;
}

int run_render(const std::string& ckpt, const std::string& camspec,
               const std::string& out, const std::string& precision) {
  const Scene scene = load_scene(ckpt);
  json j = json::parse(read_text(camspec), nullptr, false);
  if (j.is_discarded()) {
    fail(ErrorCode::InvalidArgument, "camera spec is not valid JSON");
  }
  Camera cam;
  cam.width = j.value("width", 128);
  cam.height = j.value("height", 96);
  cam.fx = j.value("fx", 110.0);
  cam.fy = j.value("fy", 110.0);
  cam.cx = j.contains("cx") ? (double)j["cx"] : cam.width / 2.0;
  cam.cy = j.contains("cy") ? (double)j["cy"] : cam.height / 2.0;
  if (!j.contains("frames") || !j["frames"].is_array() || j["frames"].empty()) {
    fail(ErrorCode::InvalidArgument, "camera spec needs a non-empty 'frames' array");
  }
  RasterConfig rc;
  rc.f32_accum = precision == "f32";
  ensure_dir(out);
  int idx = 0;
  for (const json& jf : j["frames"]) {
    const json& e = jf.at("eye");
    const Vec3 eye{e.at(0), e.at(1), e.at(2)};
    cam.t = eye * -1.0;
    cam.tau = jf.value("tau", 0.0);
    const RenderOutput r = render(scene, cam, rc, RenderSubset::All);
    char name[64];
    std::snprintf(name, sizeof(name), "%s/render_%04d.ppm", out.c_str(), idx);
    write_ppm(name, r.color);
    std::snprintf(name, sizeof(name), "%s/invdepth_%04d.pfm", out.c_str(), idx);
    write_pfm(name, r.invdepth);
    ++idx;
  }
  std::printf("rendered %d frames to %s\n", idx, out.c_str());
  return 0;
}

int run_eval(const std::string& run_dir, const std::string& dataset_dir) {
  const Dataset ds = load_dataset(dataset_dir);
  const EvalResult res = evaluate_run(run_dir, ds);
  std::cout << res.table();
  const std::string csv_path = run_dir + "/eval.csv";
  std::ofstream f(csv_path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot write '" + csv_path + "'");
  f << res.csv();
  std::cout << "metrics written to " << csv_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curve-based dynamic scene reconstruction toolkit"};
  app.require_subcommand(1);

  uint64_t seed = 1;
  int threads = 0;
  std::string precision = "f64";
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed");
  app.add_option("--threads", threads, "OpenMP thread count (0 = default)");
  app.add_option("--precision", precision, "accumulation precision")
      ->check(CLI::IsMember({"f32", "f64"}));

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_spec, gen_out;
  gen->add_option("spec", gen_spec, "scene spec JSON or 'demo'")->required();
  gen->add_option("out", gen_out, "output directory")->required();

  auto* fit_cmd = app.add_subcommand("fit", "fit a curve to CSV points");
  std::string fit_csv, fit_out;
  int fit_degree = 3;
  fit_cmd->add_option("csv", fit_csv, "input points")->required();
  fit_cmd->add_option("out", fit_out, "output curve JSON")->required();
  fit_cmd->add_option("--degree", fit_degree, "curve degree");

  auto* train_cmd = app.add_subcommand("train", "optimize a scene on a dataset");
  std::string train_ds, train_cfg, train_out;
  int fd_samples = 0;
  train_cmd->add_option("dataset", train_ds, "dataset directory")->required();
  train_cmd->add_option("config", train_cfg, "config file or 'default'")
      ->required();
  train_cmd->add_option("out", train_out, "run output directory")->required();
  train_cmd->add_option("--fd-check", fd_samples,
                        "run a gradient check with N samples per group "
                        "instead of training");

  auto* render_cmd = app.add_subcommand("render", "render a checkpoint");
  std::string render_ckpt, render_cam, render_out;
  render_cmd->add_option("checkpoint", render_ckpt, "scene checkpoint JSON")
      ->required();
  render_cmd->add_option("camspec", render_cam, "camera spec JSON")->required();
  render_cmd->add_option("out", render_out, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a run against a dataset");
  std::string eval_run, eval_ds;
  eval_cmd->add_option("run", eval_run, "run directory with checkpoint.json")
      ->required();
  eval_cmd->add_option("dataset", eval_ds, "dataset directory")->required();

  if (argc <= 1) {
    std::cout << app.help();
    return 2;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    if (*gen) return run_gen(gen_spec, gen_out, seed);
    if (*fit_cmd) return run_fit(fit_csv, fit_out, fit_degree);
    if (*train_cmd) {
      return run_train(train_ds, train_cfg, train_out, seed_opt->count() > 0,
                       seed, precision, fd_samples);
    }
    if (*render_cmd) return run_render(render_ckpt, render_cam, render_out, precision);
    if (*eval_cmd) return run_eval(eval_run, eval_ds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
