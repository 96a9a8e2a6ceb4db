#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "focus/config.hpp"
#include "focus/error.hpp"
#include "focus/eval.hpp"
#include "focus/io.hpp"
#include "focus/optim.hpp"
#include "focus/scene.hpp"
#include "focus/sfm.hpp"
#include "focus/synth.hpp"

namespace fs = std::filesystem;
using namespace focus;

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct Globals {
  unsigned threads = 0;
  bool verbose = false;
  bool dump_config = false;
};

void progress(const std::string& line) { std::cerr << line << '\n'; }

std::vector<int> parse_int_list(const std::string& text, const std::string& flag) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    int value = 0;
    try {
      value = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw CLI::ValidationError(flag, "expected comma-separated integers, got '" + text + "'");
    out.push_back(value);
  }
  if (out.empty()) throw CLI::ValidationError(flag, "expected at least one integer");
  return out;
}

void run_poisson_hook(const fs::path& cloud, const fs::path& sidecar) {
  const char* cmd = std::getenv("FOCUS_POISSON_CMD");
  if (cmd == nullptr || *cmd == '\0') return;
  const std::string line = std::string(cmd) + " \"" + cloud.string() + "\" \"" + sidecar.string() + "\"";
  const int status = std::system(line.c_str());
  if (status != 0) progress("warning: FOCUS_POISSON_CMD failed (status " + std::to_string(status) + "): " + line);
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Format:
    case ErrorCode::Schema:
      return kExitUsage;
    default:
      return kExitDomain;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-view foot surface reconstruction from dense template-coordinate predictions.", "focus"};
  app.require_subcommand(0, 1);
  Globals globals;
  RunConfig config;
  app.add_option("--threads", globals.threads, "Worker threads (0 = available parallelism)")->capture_default_str();
  app.add_flag("-v,--verbose", globals.verbose, "Print per-stage progress to stderr");
  app.add_flag("--dump-config", globals.dump_config, "Print the default configuration as JSON and exit");

  // synth
  auto* synth = app.add_subcommand("synth", "Render a synthetic foot scene with known ground truth");
  int views = 10;
  std::uint64_t synth_seed = kDefaultSeed;
  std::string synth_out;
  synth->add_option("--views", views, "Number of ring cameras")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "Noise seed")->capture_default_str();
  synth->add_option("--noise", config.noise.sigma_base, "Base TOC noise sigma")->capture_default_str();
  synth->add_option("--noise-range", config.noise.sigma_range, "Spatial spread of the TOC noise sigma")
      ->capture_default_str();
  synth->add_option("--width", config.resolution.width, "Image width (px)")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--height", config.resolution.height, "Image height (px)")->capture_default_str()->check(CLI::PositiveNumber);
  synth->add_option("--radius", config.ring.radius_mm, "Camera ring radius (mm)")->capture_default_str();
  synth->add_option("--elevation", config.ring.elevation_deg, "Camera elevation (deg)")->capture_default_str();
  synth->add_option("--out", synth_out, "Output scene directory")->required();

  // sfm
  auto* sfm = app.add_subcommand("sfm", "Triangulate an oriented point cloud from a scene");
  std::string sfm_scene;
  std::string sfm_out;
  bool no_subpixel = false;
  bool no_aggregation = false;
  bool ascii = false;
  sfm->add_option("--scene", sfm_scene, "Scene directory")->required();
  sfm->add_option("--out", sfm_out, "Output PLY (Poisson sidecar written next to it)")->required();
  sfm->add_option("--samples", config.sfm.samples_per_image, "Samples per image")->capture_default_str();
  sfm->add_option("--threshold", config.sfm.match_threshold, "Match threshold (TOC l2)")->capture_default_str();
  sfm->add_option("--reproj-threshold", config.sfm.reproj_threshold, "Reprojection filter (px)")->capture_default_str();
  sfm->add_flag("--no-subpixel", no_subpixel, "Match at integer pixels only");
  sfm->add_flag("--no-normal-aggregation", no_aggregation, "Replace aggregated normals by unoriented PCA normals");
  sfm->add_option("--seed", config.sfm.seed, "Sampling seed")->capture_default_str();
  sfm->add_flag("--ascii", ascii, "Write ASCII PLY");

  // optim
  auto* optim = app.add_subcommand("optim", "Fit the deformable model to a scene");
  std::string optim_scene;
  std::string optim_out;
  std::string params_out;
  std::string epochs = "500,500";
  std::string init_path;
  bool no_uncertainty = false;
  optim->add_option("--scene", optim_scene, "Scene directory")->required();
  optim->add_option("--out", optim_out, "Output PLY of the fitted mesh")->required();
  optim->add_option("--params", params_out, "Output params JSON (default: <out> with extension .params.json)");
  optim->add_option("--samples", config.optim.samples_per_image, "Samples per image")->capture_default_str();
  optim->add_option("--epochs", epochs, "Epochs of stage 1 (r,s,t) and stage 2 (all)")->capture_default_str();
  optim->add_option("--lr", config.optim.learning_rate, "Adam learning rate")->capture_default_str();
  optim->add_option("--init", init_path, "Initial params JSON instead of the triangulation heuristic");
  optim->add_flag("--no-uncertainty", no_uncertainty, "Unweighted reprojection loss");
  optim->add_option("--seed", config.optim.seed, "Sampling seed")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Compare a reconstruction with a reference mesh");
  std::string pred_path;
  std::string gt_path;
  std::string report_path = "report.json";
  double crop = 100.0;
  bool no_crop = false;
  eval->add_option("--pred", pred_path, "Predicted PLY (mesh, or cloud without faces)")->required();
  eval->add_option("--gt", gt_path, "Reference mesh PLY")->required();
  eval->add_option("--crop", crop, "Crop height (mm)")->capture_default_str();
  eval->add_flag("--no-crop", no_crop, "Disable the height crop");
  eval->add_option("--samples", config.eval.samples, "Surface samples per mesh")->capture_default_str();
  eval->add_option("--seed", config.eval.seed, "Sampling seed")->capture_default_str();
  eval->add_option("--out", report_path, "Report JSON")->capture_default_str();

  // bench-views
  auto* bench = app.add_subcommand("bench-views", "Reconstruction quality against the number of views");
  std::string bench_scene;
  std::string method = "sfm";
  std::string counts = "3,5,10,15,20";
  std::string bench_out = "bench.csv";
  std::string bench_epochs = "500,500";
  bench->add_option("--scene", bench_scene, "Scene directory")->required();
  bench->add_option("--method", method, "sfm or optim")->capture_default_str()->check(CLI::IsMember({"sfm", "optim"}));
  bench->add_option("--counts", counts, "Comma-separated view counts")->capture_default_str();
  bench->add_option("--out", bench_out, "Output CSV")->capture_default_str();
  bench->add_option("--samples", config.sfm.samples_per_image, "Samples per image")->capture_default_str();
  bench->add_option("--epochs", bench_epochs, "FOCUS-O epochs per stage")->capture_default_str();
  bench->add_option("--seed", config.seed, "Seed for sampling")->capture_default_str();

  try {
    app.parse(argc, argv);
    if (globals.dump_config) {
      std::cout << config_to_json(RunConfig{}).dump(2) << '\n';
      return 0;
    }
    if (app.get_subcommands().empty()) throw CLI::CallForHelp();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  config.sfm.threads = config.optim.threads = config.eval.threads = globals.threads;
  CLI::App* active = app.get_subcommands().front();
  const std::string name = active->get_name();
  try {
    if (active == synth) {
      SceneSpec spec = default_scene_spec(views, synth_seed, config.noise);
      if (config.resolution != spec.resolution || config.ring.radius_mm != RingOptions{}.radius_mm ||
          config.ring.elevation_deg != RingOptions{}.elevation_deg) {
        spec.resolution = config.resolution;
        const DeformableModel model = build_model(spec.model, {});
        spec.cameras = ring_cameras(model.deformed_mesh(spec.ground_truth), views, spec.resolution, config.ring);
      }
      const GeneratedScene scene = generate_scene(spec, synth_out, globals.threads);
      std::size_t min_mask = SIZE_MAX;
      for (const auto& img : scene.images) min_mask = std::min(min_mask, img.mask_count());
      progress("synth: wrote " + std::to_string(scene.images.size()) + " views to " + synth_out +
               " (smallest mask " + std::to_string(min_mask) + " px)");
    } else if (active == sfm) {
      config.sfm.subpixel = !no_subpixel;
      config.sfm.normal_aggregation = !no_aggregation;
      const Scene scene = load_scene(sfm_scene);
      const SfmResult result = reconstruct_sfm(scene, config.sfm);
      write_ply(sfm_out, result.cloud, ascii ? PlyEncoding::Ascii : PlyEncoding::BinaryLittleEndian);
      const fs::path sidecar = poisson_sidecar_path(sfm_out);
      write_text_file(sidecar, poisson_sidecar_json(config.poisson).dump(2) + "\n");
      if (globals.verbose) {
        const FilterStats& f = result.filter;
        progress("sfm: " + std::to_string(result.samples) + " samples, " + std::to_string(result.tracks) +
                 " tracks, " + std::to_string(f.triangulated) + " triangulated, " +
                 std::to_string(f.after_reprojection) + " after reprojection, " + std::to_string(f.after_floor) +
                 " above floor, " + std::to_string(f.after_sor) + " after outlier removal");
      }
      progress("sfm: wrote " + std::to_string(result.cloud.size()) + " points to " + sfm_out);
      run_poisson_hook(sfm_out, sidecar);
    } else if (active == optim) {
      const std::vector<int> e = parse_int_list(epochs, "--epochs");
      if (e.size() != 2) throw CLI::ValidationError("--epochs", "expected two values, stage1,stage2");
      config.optim.stage1_epochs = e[0];
      config.optim.stage2_epochs = e[1];
      config.optim.use_uncertainty = !no_uncertainty;
      if (!init_path.empty()) {
        config.optim.initial = params_from_json(nlohmann::json::parse(read_text_file(init_path)));
      }
      if (globals.verbose) {
        config.optim.on_epoch = [](int epoch, double loss, const focus::ModelParams&) {
          if (epoch % 100 == 0) progress("optim: epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
        };
      }
      const Scene scene = load_scene(optim_scene);
      if (scene.cameras.size() == 1) progress("warning: a single view leaves the fit under-constrained");
      const FitResult result = fit(scene, config.optim);
      write_ply(optim_out, result.mesh);
      const fs::path params = params_out.empty() ? fs::path(optim_out).replace_extension(".params.json") : fs::path(params_out);
      write_text_file(params, fit_to_json(result).dump(2) + "\n");
      if (result.excluded_samples > 0) {
        progress("warning: " + std::to_string(result.excluded_samples) + " sample evaluations fell behind a camera");
      }
      progress("optim: final loss " + std::to_string(result.loss_trace.back()) + ", mean reprojection error " +
               std::to_string(result.mean_reprojection_error) + " px; wrote " + optim_out);
    } else if (active == eval) {
      config.eval.crop_z_mm = no_crop ? std::nullopt : std::optional<double>(crop);
      const TriMesh pred = read_ply(pred_path);
      const TriMesh gt = read_ply(gt_path);
      MetricReport report;
      if (pred.faces.empty()) {
        OrientedPointCloud cloud = read_ply_cloud(pred_path);
        report = cloud_to_mesh(cloud, gt, config.eval);
      } else {
        report = mesh_to_mesh(pred, gt, config.eval);
      }
      write_text_file(report_path, report_to_json(report).dump(2) + "\n");
      progress("eval: chamfer mean " + std::to_string(report.chamfer.mean) + " mm, normal mean " +
               std::to_string(report.normal.mean) + " deg; wrote " + report_path);
    } else if (active == bench) {
      const std::vector<int> ks = parse_int_list(counts, "--counts");
      const std::vector<int> e = parse_int_list(bench_epochs, "--epochs");
      if (e.size() != 2) throw CLI::ValidationError("--epochs", "expected two values, stage1,stage2");
      config.optim.stage1_epochs = e[0];
      config.optim.stage2_epochs = e[1];
      config.sfm.seed = config.optim.seed = config.eval.seed = config.seed;
      config.optim.samples_per_image = config.sfm.samples_per_image;
      const Scene scene = load_scene(bench_scene);
      const auto rows = bench_views(scene, method == "sfm" ? BenchMethod::Sfm : BenchMethod::Optim, ks, config.sfm,
                                    config.optim, config.eval);
      write_text_file(bench_out, bench_csv(rows));
      for (const auto& r : rows) {
        if (!r.report) progress("bench-views: " + std::to_string(r.views) + " views failed: " + r.failure);
      }
      progress("bench-views: wrote " + std::to_string(rows.size()) + " rows to " + bench_out);
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "focus " << name << ": " << e.what() << '\n' << active->help();
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "focus " << name << ": " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "focus " << name << ": format: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "focus " << name << ": " << e.what() << '\n';
    return kExitDomain;
  }
  return 0;
}
