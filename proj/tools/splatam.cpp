// Command-line front end: run the SLAM pipeline over a dataset, generate
// synthetic sequences, render saved maps, and evaluate trajectories or
// rendered images.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "splatam/config.hpp"
#include "splatam/dataset.hpp"
#include "splatam/eval.hpp"
#include "splatam/logging.hpp"
#include "splatam/ply_io.hpp"
#include "splatam/png_io.hpp"
#include "splatam/renderer.hpp"
#include "splatam/slam.hpp"
#include "splatam/ssim.hpp"
#include "splatam/synth.hpp"
#include "splatam/trajectory_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitBadInput = 2;

// JSON has no infinity literal; keep the value greppable instead of null.
json metric_json(double v) {
  if (std::isinf(v)) return v > 0 ? "+inf" : "-inf";
  return v;
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".part";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << content;
    if (!out) throw std::runtime_error("failed writing " + tmp);
  }
  fs::rename(tmp, path);
}

splatam::ImageD clamped_color(const splatam::ImageD& img) {
  splatam::ImageD out = img;
  for (std::size_t i = 0; i < out.size(); ++i)
    out.data()[i] = std::clamp(out.data()[i], 0.0, 1.0);
  return out;
}

json status_to_json(const splatam::FrameStatus& st) {
  return json{{"frame", st.frame_index},
              {"timestamp", st.timestamp},
              {"low_overlap", st.low_overlap},
              {"tracking_loss", st.tracking_loss},
              {"tracking_losses", st.tracking_losses},
              {"mapping_losses", st.mapping_losses},
              {"densify_added", st.densify_added},
              {"pruned", st.pruned},
              {"map_size", st.map_size},
              {"keyframe", st.is_keyframe}};
}

splatam::CameraIntrinsics load_intrinsics_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error("failed to parse " + path + ": " + e.what());
  }
  splatam::CameraIntrinsics intr;
  try {
    intr.fx = j.at("fx").get<double>();
    intr.fy = j.at("fy").get<double>();
    intr.cx = j.at("cx").get<double>();
    intr.cy = j.at("cy").get<double>();
    intr.width = j.at("width").get<int>();
    intr.height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    throw std::runtime_error("bad intrinsics in " + path + ": " + e.what());
  }
  intr.validate();
  return intr;
}

struct RunArgs {
  std::string dataset;
  std::string config_path;
  std::string out_dir;
  int eval_every = 5;
  bool dry_run = false;
  int threads = 1;
  bool stream_status = false;
};

int cmd_run(const RunArgs& args) {
  splatam::SlamConfig config;
  if (!args.config_path.empty()) {
    try {
      config = splatam::load_config(args.config_path);
    } catch (const std::exception& e) {
      std::cerr << "splatam run: bad config " << args.config_path << ": " << e.what() << "\n";
      return kExitBadInput;
    }
  }

  splatam::SequenceSource seq;
  try {
    seq = splatam::load_sequence(args.dataset);
  } catch (const std::exception& e) {
    std::cerr << "splatam run: cannot load dataset " << args.dataset << ": " << e.what() << "\n";
    return kExitBadInput;
  }
  splatam::log_info("loaded " + std::to_string(seq.size()) + " frames from " + args.dataset);

  if (args.dry_run) {
    try {
      seq.load_frame(0).validate();
    } catch (const std::exception& e) {
      std::cerr << "splatam run: cannot decode first frame of " << args.dataset << ": "
                << e.what() << "\n";
      return kExitBadInput;
    }
    std::cout << json{{"frames", seq.size()},
                      {"ground_truth", seq.has_ground_truth()},
                      {"width", seq.intrinsics.width},
                      {"height", seq.intrinsics.height}}
                     .dump()
              << "\n";
    return kExitOk;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    fs::create_directories(args.out_dir);
    const std::string status_tmp = args.out_dir + "/status.jsonl.part";
    std::ofstream status_out(status_tmp, std::ios::trunc);
    if (!status_out) throw std::runtime_error("cannot write " + status_tmp);

    splatam::SlamPipeline pipeline(config, args.threads);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const splatam::RgbdFrame frame = seq.load_frame(i);
      const splatam::FrameStatus st = pipeline.process(frame);
      const std::string line = status_to_json(st).dump();
      status_out << line << "\n" << std::flush;
      if (args.stream_status) std::cout << line << "\n" << std::flush;
      if (st.low_overlap)
        splatam::log_warn("frame " + std::to_string(i) + ": low overlap, pose kept from motion model");
      else
        splatam::log_info("frame " + std::to_string(i) + " tracked, map size " +
                          std::to_string(st.map_size));
    }
    status_out.close();
    fs::rename(status_tmp, args.out_dir + "/status.jsonl");

    const splatam::SlamState& state = pipeline.state();
    splatam::save_trajectory(args.out_dir + "/trajectory.txt", state.timestamps,
                             state.trajectory);
    splatam::save_ply(args.out_dir + "/map.ply", state.map);

    json metrics{{"frames", seq.size()},
                 {"map_size", state.map.size()},
                 {"path_length_m", splatam::path_length(state.trajectory)}};

    if (seq.has_ground_truth()) {
      const splatam::AteReport report =
          splatam::ate(state.trajectory, seq.gt_poses, splatam::AlignMode::se3);
      metrics["ate"] = json{{"rmse_m", metric_json(report.rmse)}, {"alignment", "se3"}};
    }

    {
      splatam::RenderOptions opts;
      opts.n_threads = args.threads;
      opts.record_contribs = false;
      double psnr_sum = 0.0, ssim_sum = 0.0, depth_sum = 0.0;
      int evaluated = 0;
      for (std::size_t i = 0; i < seq.size(); i += args.eval_every) {
        const splatam::RgbdFrame frame = seq.load_frame(i);
        const splatam::RenderOutput out =
            splatam::render(state.map, state.trajectory[i], seq.intrinsics, opts);
        const splatam::ImageD rendered = clamped_color(out.color);
        psnr_sum += splatam::psnr(rendered, frame.color);
        ssim_sum += splatam::ssim(rendered, frame.color);
        depth_sum += splatam::depth_l1(out.depth, frame.depth, frame.depth_valid);
        ++evaluated;
      }
      metrics["train_view"] = json{{"eval_every", args.eval_every},
                                   {"frames_evaluated", evaluated},
                                   {"psnr_db", metric_json(psnr_sum / evaluated)},
                                   {"ssim", ssim_sum / evaluated},
                                   {"depth_l1_m", depth_sum / evaluated}};
    }

    const auto t1 = std::chrono::steady_clock::now();
    metrics["runtime_s"] = std::chrono::duration<double>(t1 - t0).count();
    write_text_atomic(args.out_dir + "/metrics.json", metrics.dump(2) + "\n");
    std::cout << metrics.dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "splatam run: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

struct SynthArgs {
  int gaussians = 300;
  int frames = 20;
  unsigned long long seed = 1234;
  std::string out_dir;
};

int cmd_synth(const SynthArgs& args) {
  splatam::SynthParams params;
  params.n_gaussians = args.gaussians;
  params.n_frames = args.frames;
  params.seed = args.seed;
  try {
    const splatam::SynthSequence seq = splatam::synth_generate(params);
    const std::vector<splatam::RgbdFrame> frames = splatam::synth_render_frames(seq);
    splatam::save_simple_dataset(args.out_dir, seq, frames);
  } catch (const std::exception& e) {
    std::cerr << "splatam synth: " << e.what() << "\n";
    return kExitInternal;
  }
  std::cout << json{{"out", args.out_dir},
                    {"gaussians", args.gaussians},
                    {"frames", args.frames},
                    {"seed", args.seed}}
                   .dump()
            << "\n";
  return kExitOk;
}

struct RenderArgs {
  std::string map_path;
  std::string poses_path;
  std::string intrinsics_path;
  std::string out_dir;
  int threads = 1;
};

int cmd_render(const RenderArgs& args) {
  splatam::GaussianMap map;
  try {
    map = splatam::load_ply(args.map_path);
  } catch (const std::exception& e) {
    std::cerr << "splatam render: cannot load map " << args.map_path << ": " << e.what() << "\n";
    return kExitBadInput;
  }
  std::vector<splatam::CameraPose> poses;
  try {
    poses = splatam::load_trajectory(args.poses_path).second;
  } catch (const std::exception& e) {
    std::cerr << "splatam render: cannot load poses " << args.poses_path << ": " << e.what()
              << "\n";
    return kExitBadInput;
  }
  splatam::CameraIntrinsics intr;
  try {
    intr = load_intrinsics_json(args.intrinsics_path);
  } catch (const std::exception& e) {
    std::cerr << "splatam render: " << e.what() << "\n";
    return kExitBadInput;
  }

  try {
    fs::create_directories(args.out_dir);
    splatam::RenderOptions opts;
    opts.n_threads = args.threads;
    opts.record_contribs = false;
    for (std::size_t i = 0; i < poses.size(); ++i) {
      const splatam::RenderOutput out = splatam::render(map, poses[i], intr, opts);
      char name[32];
      std::snprintf(name, sizeof(name), "%06zu.png", i);
      splatam::write_png_rgb8(args.out_dir + "/color_" + name, clamped_color(out.color));
      splatam::write_png_gray16(args.out_dir + "/depth_" + name, out.depth, 5000.0);
      splatam::write_png_gray16(args.out_dir + "/silhouette_" + name, out.silhouette, 65535.0);
    }
  } catch (const std::exception& e) {
    std::cerr << "splatam render: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

struct EvalArgs {
  std::string est_path;
  std::string gt_path;
  std::string render_dir;
  std::string gt_dir;
};

int eval_trajectories(const EvalArgs& args) {
  std::vector<splatam::CameraPose> est, gt;
  try {
    est = splatam::load_trajectory(args.est_path).second;
  } catch (const std::exception& e) {
    std::cerr << "splatam eval: cannot load " << args.est_path << ": " << e.what() << "\n";
    return kExitBadInput;
  }
  try {
    gt = splatam::load_trajectory(args.gt_path).second;
  } catch (const std::exception& e) {
    std::cerr << "splatam eval: cannot load " << args.gt_path << ": " << e.what() << "\n";
    return kExitBadInput;
  }
  if (est.size() != gt.size()) {
    std::cerr << "splatam eval: trajectory lengths differ (" << est.size() << " vs " << gt.size()
              << ")\n";
    return kExitBadInput;
  }
  const splatam::AteReport report = splatam::ate(est, gt, splatam::AlignMode::se3);
  std::cout << json{{"rmse_m", metric_json(report.rmse)}, {"frames", est.size()}}.dump() << "\n";
  return kExitOk;
}

int eval_image_dirs(const EvalArgs& args) {
  std::vector<std::string> names;
  try {
    for (const auto& entry : fs::directory_iterator(args.render_dir)) {
      if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
      const std::string name = entry.path().filename().string();
      if (fs::exists(fs::path(args.gt_dir) / name)) names.push_back(name);
    }
  } catch (const fs::filesystem_error& e) {
    std::cerr << "splatam eval: " << e.what() << "\n";
    return kExitBadInput;
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) {
    std::cerr << "splatam eval: no matching .png pairs between " << args.render_dir << " and "
              << args.gt_dir << "\n";
    return kExitBadInput;
  }
  double psnr_sum = 0.0, ssim_sum = 0.0;
  try {
    for (const std::string& name : names) {
      const splatam::ImageD a = splatam::read_png_rgb8(args.render_dir + "/" + name);
      const splatam::ImageD b = splatam::read_png_rgb8(args.gt_dir + "/" + name);
      if (!a.same_shape(b))
        throw std::runtime_error("image shapes differ for " + name);
      psnr_sum += splatam::psnr(a, b);
      ssim_sum += splatam::ssim(a, b);
    }
  } catch (const std::exception& e) {
    std::cerr << "splatam eval: " << e.what() << "\n";
    return kExitBadInput;
  }
  std::cout << json{{"psnr_db", metric_json(psnr_sum / names.size())},
                    {"ssim", ssim_sum / names.size()},
                    {"pairs", names.size()}}
                   .dump()
            << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense RGB-D SLAM over isotropic 3D Gaussians"};
  app.require_subcommand(1);

  RunArgs run_args;
  CLI::App* run = app.add_subcommand("run", "run SLAM over a dataset directory");
  run->add_option("--dataset", run_args.dataset, "dataset directory (TUM or simple layout)")
      ->required();
  run->add_option("--config", run_args.config_path, "JSON config (defaults when omitted)");
  run->add_option("--out", run_args.out_dir, "output directory")->required();
  run->add_option("--eval-every", run_args.eval_every, "evaluate every m-th frame")
      ->check(CLI::PositiveNumber);
  run->add_flag("--dry-run", run_args.dry_run, "validate inputs, process zero frames");
  run->add_option("--threads", run_args.threads, "worker threads (1 = bit-reproducible)")
      ->check(CLI::PositiveNumber);
  run->add_flag("--status-jsonl", run_args.stream_status, "stream per-frame status to stdout");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic RGB-D sequence");
  synth->add_option("--gaussians", synth_args.gaussians, "scene size")->check(CLI::PositiveNumber);
  synth->add_option("--frames", synth_args.frames, "sequence length")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_args.seed, "random seed");
  synth->add_option("--out", synth_args.out_dir, "output directory")->required();

  RenderArgs render_args;
  CLI::App* rnd = app.add_subcommand("render", "render a saved map along a trajectory");
  rnd->add_option("--map", render_args.map_path, "map .ply file")->required();
  rnd->add_option("--poses", render_args.poses_path, "trajectory file")->required();
  rnd->add_option("--intrinsics", render_args.intrinsics_path, "intrinsics .json file")
      ->required();
  rnd->add_option("--out", render_args.out_dir, "output directory")->required();
  rnd->add_option("--threads", render_args.threads, "worker threads")
      ->check(CLI::PositiveNumber);

  EvalArgs eval_args;
  CLI::App* ev = app.add_subcommand("eval", "evaluate trajectories or rendered images");
  auto* est_opt = ev->add_option("--est", eval_args.est_path, "estimated trajectory");
  auto* gt_opt = ev->add_option("--gt", eval_args.gt_path, "ground-truth trajectory");
  auto* rd_opt = ev->add_option("--render-dir", eval_args.render_dir, "rendered image dir");
  auto* gd_opt = ev->add_option("--gt-dir", eval_args.gt_dir, "reference image dir");
  est_opt->needs(gt_opt);
  gt_opt->needs(est_opt);
  rd_opt->needs(gd_opt);
  gd_opt->needs(rd_opt);
  est_opt->excludes(rd_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (run->parsed()) return cmd_run(run_args);
    if (synth->parsed()) return cmd_synth(synth_args);
    if (rnd->parsed()) return cmd_render(render_args);
    if (ev->parsed()) {
      if (!eval_args.est_path.empty()) return eval_trajectories(eval_args);
      if (!eval_args.render_dir.empty()) return eval_image_dirs(eval_args);
      std::cerr << "splatam eval: pass --est/--gt or --render-dir/--gt-dir\n";
      return kExitBadInput;
    }
  } catch (const std::exception& e) {
    std::cerr << "splatam: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
