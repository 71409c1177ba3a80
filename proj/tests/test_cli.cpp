// Copyright Contributors to the curvesplat project
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "curvesplat/bezier.hpp"
#include "curvesplat/dataset.hpp"
#include "curvesplat/image.hpp"

using namespace curvesplat;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  const fs::path d = fs::temp_directory_path() / "csplat_cli";
  return d;
}

struct CliResult {
  int exit_code = -1;
  std::string output;
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path out = work_dir() / ("out_" + std::to_string(counter++) + ".txt");
  const std::string cmd =
      std::string(CSPLAT_BIN) + " " + args + " > " + out.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  CliResult res;
  res.exit_code = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  std::ifstream in(out);
  std::stringstream ss;
  ss << in.rdbuf();
  res.output = ss.str();
  return res;
}

SyntheticSceneSpec tiny_spec() {
  SyntheticSceneSpec s;
  s.ground_half_extent = 6.0;
  s.ground_count = 30;
  s.box_count = 1;
  s.box_gaussians = 8;
  s.static_scale = 0.35;
  s.sky_resolution = 2;
  s.frame_count = 8;
  s.camera.width = 32;
  s.camera.height = 24;
  s.camera.fx = s.camera.fy = 40.0;
  s.camera.eye_waypoints = {Vec3{0, 0, 0}};
  ObjectSpec o;
  o.waypoints = {Vec3{-2.0, 0.9, 6.0}, Vec3{2.0, 0.9, 6.0}};
  o.cluster_count = 6;
  o.half_extent = Vec3{0.4, 0.3, 0.3};
  o.gaussian_scale = 0.17;
  s.objects = {o};
  return s;
}

}  // namespace

TEST_CASE("cli: no arguments prints usage and exits 2") {
  fs::create_directories(work_dir());
  const CliResult r = run_cli("");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("Usage") != std::string::npos);
  CHECK(r.output.find("gen") != std::string::npos);
  CHECK(r.output.find("eval") != std::string::npos);
}

TEST_CASE("cli: unknown subcommand prints usage and exits 2") {
  const CliResult r = run_cli("frobnicate");
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("Usage") != std::string::npos);
}

TEST_CASE("cli: runtime errors give a one-line diagnostic and exit 1") {
  const CliResult r = run_cli("eval /nonexistent/run /nonexistent/ds");
  CHECK(r.exit_code == 1);
  CHECK(r.output.rfind("error:", 0) == 0);
  CHECK(r.output.find('\n') == r.output.size() - 1);  // single line
}

TEST_CASE("cli: fit recovers a cubic from grouped and plain csv") {
  const fs::path dir = work_dir() / "fit";
  fs::remove_all(dir);
  fs::create_directories(dir);

  const BezierCurve truth = make_curve3(
      3, {Vec3{0, 0, 0}, Vec3{1, 2, -1}, Vec3{3, -1, 2}, Vec3{4, 1, 1}});

  // Grouped: three points per frame whose offsets cancel, so the frame means
  // are exact curve samples.
  {
    std::ofstream f(dir / "grouped.csv");
    f << "frame,timestamp,x,y,z\n";
    for (int i = 0; i < 10; ++i) {
      const Vec3 c = evaluate3(truth, i / 9.0);
      const Vec3 d{0.2, -0.1, 0.05};
      for (const Vec3& p : {c + d, c - d, c}) {
        f << i << "," << i * 0.1 << "," << p.x << "," << p.y << "," << p.z
          << "\n";
      }
    }
  }
  const CliResult rg = run_cli("fit " + (dir / "grouped.csv").string() + " " +
                               (dir / "grouped.json").string());
  CHECK(rg.exit_code == 0);
  CHECK(rg.output.find("rms residual") != std::string::npos);
  {
    std::ifstream in(dir / "grouped.json");
    std::stringstream ss;
    ss << in.rdbuf();
    const BezierCurve fitted = curve_from_json(ss.str());
    for (double t : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      CHECK((evaluate3(fitted, t) - evaluate3(truth, t)).norm() < 1e-4);
    }
  }

  // Plain x,y,z rows.
  {
    std::ofstream f(dir / "plain.csv");
    f << "x,y,z\n";
    for (int i = 0; i < 12; ++i) {
      const Vec3 c = evaluate3(truth, i / 11.0);
      f << c.x << "," << c.y << "," << c.z << "\n";
    }
  }
  const CliResult rp = run_cli("fit " + (dir / "plain.csv").string() + " " +
                               (dir / "plain.json").string());
  CHECK(rp.exit_code == 0);

  // Bad header is a diagnosed failure.
  {
    std::ofstream f(dir / "bad.csv");
    f << "a,b\n1,2\n";
  }
  const CliResult rb = run_cli("fit " + (dir / "bad.csv").string() + " " +
                               (dir / "bad.json").string());
  CHECK(rb.exit_code == 1);
  CHECK(rb.output.rfind("error:", 0) == 0);
}

TEST_CASE("cli: gen, train, render, and eval pipeline on a small spec") {
  const fs::path dir = work_dir() / "pipe";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "spec.json");
    f << spec_to_json(tiny_spec());
  }
  const CliResult rg = run_cli("--seed 5 gen " + (dir / "spec.json").string() +
                               " " + (dir / "ds").string());
  CHECK(rg.exit_code == 0);
  CHECK(fs::exists(dir / "ds" / "manifest.json"));

  {
    std::ofstream f(dir / "short.cfg");
    f << "iterations=12\nprune_interval=0\ncheckpoint_interval=0\n"
      << "init_sky_res=4\n";
  }
  const CliResult rt = run_cli("train " + (dir / "ds").string() + " " +
                               (dir / "short.cfg").string() + " " +
                               (dir / "run").string());
  CHECK(rt.exit_code == 0);
  CHECK(rt.output.find("trained 12 iterations") != std::string::npos);
  CHECK(fs::exists(dir / "run" / "checkpoint.json"));
  CHECK(fs::exists(dir / "run" / "train_log.csv"));

  {
    std::ofstream f(dir / "cams.json");
    f << "{\"width\":32,\"height\":24,\"fx\":40,\"fy\":40,\"frames\":["
      << "{\"eye\":[0,0,0],\"tau\":0.0},{\"eye\":[0.1,0,0],\"tau\":0.4}]}";
  }
  const CliResult rr = run_cli("render only_one_arg");
  CHECK(rr.exit_code == 2);  // missing arguments is a usage error
  const CliResult rr2 =
      run_cli("render " + (dir / "run" / "checkpoint.json").string() + " " +
              (dir / "cams.json").string() + " " + (dir / "frames").string());
  CHECK(rr2.exit_code == 0);
  CHECK(fs::exists(dir / "frames" / "render_0000.ppm"));
  CHECK(fs::exists(dir / "frames" / "render_0001.ppm"));
  CHECK(fs::exists(dir / "frames" / "invdepth_0001.pfm"));
  const Image3 img = read_ppm((dir / "frames" / "render_0000.ppm").string());
  CHECK(img.width == 32);
  CHECK(img.height == 24);

  const CliResult re = run_cli("eval " + (dir / "run").string() + " " +
                               (dir / "ds").string());
  CHECK(re.exit_code == 0);
  CHECK(re.output.find("reconstruction") != std::string::npos);
  CHECK(re.output.find("nvs") != std::string::npos);
  CHECK(re.output.find("object 1") != std::string::npos);
  CHECK(fs::exists(dir / "run" / "eval.csv"));
}

TEST_CASE("cli: fd-check runs in double precision only") {
  const fs::path dir = work_dir() / "fdc";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "spec.json");
    f << spec_to_json(tiny_spec());
  }
  REQUIRE(run_cli("gen " + (dir / "spec.json").string() + " " +
                  (dir / "ds").string())
              .exit_code == 0);

  const CliResult bad =
      run_cli("--precision f32 train " + (dir / "ds").string() + " default " +
              (dir / "run").string() + " --fd-check 2");
  CHECK(bad.exit_code == 1);
  CHECK(bad.output.rfind("error:", 0) == 0);
  CHECK(bad.output.find("f64") != std::string::npos);

  {
    std::ofstream f(dir / "fd.cfg");
    f << "init_sky_res=4\n";
  }
  const CliResult ok =
      run_cli("--precision f64 train " + (dir / "ds").string() + " " +
              (dir / "fd.cfg").string() + " " + (dir / "run").string() +
              " --fd-check 2");
  CHECK(ok.exit_code == 0);
  CHECK(ok.output.find("worst normwise relative error") != std::string::npos);
  CHECK(ok.output.find("center_ctrl") != std::string::npos);
  CHECK(ok.output.find("sky") != std::string::npos);
  // A gradient check must not leave training artifacts behind.
  CHECK(!fs::exists(dir / "run" / "checkpoint.json"));
}

TEST_CASE("cli: demo spec pipeline smoke") {
  const fs::path dir = work_dir() / "demo";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const CliResult rg = run_cli("gen demo " + (dir / "ds").string());
  CHECK(rg.exit_code == 0);
  CHECK(rg.output.find("40 frames") != std::string::npos);
  {
    std::ofstream f(dir / "short.cfg");
    f << "iterations=10\nprune_interval=0\ncheckpoint_interval=0\n"
      << "init_sky_res=8\n";
  }
  const CliResult rt = run_cli("train " + (dir / "ds").string() + " " +
                               (dir / "short.cfg").string() + " " +
                               (dir / "run").string());
  CHECK(rt.exit_code == 0);
  const CliResult re = run_cli("eval " + (dir / "run").string() + " " +
                               (dir / "ds").string());
  CHECK(re.exit_code == 0);
  CHECK(re.output.find("trajectory RMSE") != std::string::npos);
}
