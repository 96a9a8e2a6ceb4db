#include "focus/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "focus/error.hpp"
#include "focus/io.hpp"
#include "focus/parallel.hpp"
#include "focus/rng.hpp"

namespace focus {

void NoiseSpec::validate() const {
  if (!(sigma_base >= 0.0) || !(sigma_range >= 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "noise sigmas must be non-negative");
  }
}

TocImage rasterize_mesh(const TriMesh& mesh, const CameraView& camera) {
  if (!mesh.has_tocs()) throw Error(ErrorCode::InvalidSpec, "mesh has no per-vertex TOC values");
  const int width = camera.image_size.width;
  const int height = camera.image_size.height;
  TocImage img = TocImage::blank(width, height);
  const float noiseless_logvar = static_cast<float>(std::log(TocImage::kNoiselessVariance));

  std::vector<Vec3> cam_pts(mesh.vertices.size());
  std::vector<Vec2> px(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    cam_pts[i] = camera.to_camera(mesh.vertices[i]);
    px[i] = project_camera_point(camera.intrinsics, cam_pts[i]);  // throws when behind
  }
  const bool smooth = mesh.has_normals();

  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
    const Face& face = mesh.faces[f];
    const Vec2& p0 = px[face[0]];
    const Vec2& p1 = px[face[1]];
    const Vec2& p2 = px[face[2]];
    const double area = (p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x();
    if (std::abs(area) < 1e-12) continue;
    const int u0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.x(), p1.x(), p2.x()}))));
    const int u1 = std::min(width - 1, static_cast<int>(std::floor(std::max({p0.x(), p1.x(), p2.x()}))));
    const int v0 = std::max(0, static_cast<int>(std::ceil(std::min({p0.y(), p1.y(), p2.y()}))));
    const int v1 = std::min(height - 1, static_cast<int>(std::floor(std::max({p0.y(), p1.y(), p2.y()}))));
    if (u0 > u1 || v0 > v1) continue;

    const double iz0 = 1.0 / cam_pts[face[0]].z();
    const double iz1 = 1.0 / cam_pts[face[1]].z();
    const double iz2 = 1.0 / cam_pts[face[2]].z();
    const Vec3 flat_normal = camera.rotation * face_normal(mesh, f);

    for (int v = v0; v <= v1; ++v) {
      for (int u = u0; u <= u1; ++u) {
        const Vec2 p(u, v);
        // Screen-space barycentrics from signed sub-areas.
        const double l0 = ((p1 - p).x() * (p2 - p).y() - (p1 - p).y() * (p2 - p).x()) / area;
        const double l1 = ((p2 - p).x() * (p0 - p).y() - (p2 - p).y() * (p0 - p).x()) / area;
        const double l2 = 1.0 - l0 - l1;
        if (l0 < 0.0 || l1 < 0.0 || l2 < 0.0) continue;
        const double w0 = l0 * iz0;
        const double w1 = l1 * iz1;
        const double w2 = l2 * iz2;
        const double wsum = w0 + w1 + w2;
        const double depth = 1.0 / wsum;
        const std::size_t idx = img.index(u, v);
        if (!(depth < img.depth[idx])) continue;
        const double b0 = w0 / wsum;
        const double b1 = w1 / wsum;
        const double b2 = w2 / wsum;
        const Vec3 toc =
            (b0 * mesh.tocs[face[0]] + b1 * mesh.tocs[face[1]] + b2 * mesh.tocs[face[2]]).cwiseMax(0.0).cwiseMin(1.0);
        Vec3 normal = flat_normal;
        if (smooth) {
          const Vec3 n = b0 * mesh.normals[face[0]] + b1 * mesh.normals[face[1]] + b2 * mesh.normals[face[2]];
          normal = camera.rotation * n.normalized();
        }
        img.depth[idx] = static_cast<float>(depth);
        img.mask[idx] = 1.0f;
        TocImage::write3(img.toc_mean, idx, toc);
        TocImage::write3(img.normal, idx, normal);
        for (int c = 0; c < 3; ++c) img.toc_logvar[3 * idx + c] = noiseless_logvar;
      }
    }
  }
  return img;
}

TocImage rasterize(const DeformableModel& model, const ModelParams& params, const CameraView& camera) {
  camera.validate();
  return rasterize_mesh(model.deformed_mesh(params), camera);
}

std::vector<double> sigma_field(int width, int height, const NoiseSpec& noise, std::uint64_t seed) {
  noise.validate();
  constexpr int kGrid = 4;
  Rng rng(derive_seed(seed, 0x51a7));
  double control[kGrid][kGrid];
  for (auto& row : control) {
    for (double& c : row) c = noise.sigma_base + noise.sigma_range * rng.uniform();
  }
  std::vector<double> field(static_cast<std::size_t>(width) * height);
  for (int v = 0; v < height; ++v) {
    const double gy = height > 1 ? static_cast<double>(v) * (kGrid - 1) / (height - 1) : 0.0;
    const int iy = std::min(kGrid - 2, static_cast<int>(gy));
    const double fy = gy - iy;
    for (int u = 0; u < width; ++u) {
      const double gx = width > 1 ? static_cast<double>(u) * (kGrid - 1) / (width - 1) : 0.0;
      const int ix = std::min(kGrid - 2, static_cast<int>(gx));
      const double fx = gx - ix;
      const double top = (1.0 - fx) * control[iy][ix] + fx * control[iy][ix + 1];
      const double bottom = (1.0 - fx) * control[iy + 1][ix] + fx * control[iy + 1][ix + 1];
      field[static_cast<std::size_t>(v) * width + u] = (1.0 - fy) * top + fy * bottom;
    }
  }
  return field;
}

TocImage emulate_prediction(const TocImage& clean, const NoiseSpec& noise, std::uint64_t seed) {
  noise.validate();
  TocImage out = clean;
  if (noise.sigma_base == 0.0 && noise.sigma_range == 0.0) return out;
  const std::vector<double> sigma = sigma_field(clean.width, clean.height, noise, seed);
  Rng rng(derive_seed(seed, 0xe0153));
  for (std::size_t i = 0; i < clean.pixel_count(); ++i) {
    if (!clean.in_mask(i) || !(sigma[i] > 0.0)) continue;
    const float logvar = static_cast<float>(std::log(sigma[i] * sigma[i]));
    for (int c = 0; c < 3; ++c) {
      const double value = clean.toc_mean[3 * i + c] + sigma[i] * rng.normal();
      out.toc_mean[3 * i + c] = static_cast<float>(std::clamp(value, 0.0, 1.0));
      out.toc_logvar[3 * i + c] = logvar;
    }
  }
  return out;
}

std::vector<CameraView> ring_cameras(const TriMesh& subject, int count, ImageSize size, const RingOptions& options) {
  if (count < 1) throw Error(ErrorCode::InvalidSpec, "ring needs at least one camera");
  const BoundingBox box = bounding_box(subject.vertices);
  const Vec3 target = box.center();
  const double elevation = options.elevation_deg * std::numbers::pi / 180.0;
  std::vector<CameraView> cameras;
  cameras.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double azimuth = (options.azimuth_offset_deg * std::numbers::pi / 180.0) + 2.0 * std::numbers::pi * i / count;
    const Vec3 eye = target + options.radius_mm * Vec3(std::cos(elevation) * std::cos(azimuth),
                                                       std::cos(elevation) * std::sin(azimuth), std::sin(elevation));
    const Intrinsics unit = Intrinsics::single_focal(1.0, 0.0, 0.0);
    CameraView cam = look_at(eye, target, Vec3::UnitZ(), unit, size);
    double lo_x = std::numeric_limits<double>::infinity();
    double lo_y = lo_x;
    double hi_x = -lo_x;
    double hi_y = -lo_x;
    for (const auto& v : subject.vertices) {
      const Vec3 c = cam.to_camera(v);
      if (!(c.z() > 0.0)) throw Error(ErrorCode::BehindCamera, "ring camera radius too small for the subject");
      lo_x = std::min(lo_x, c.x() / c.z());
      hi_x = std::max(hi_x, c.x() / c.z());
      lo_y = std::min(lo_y, c.y() / c.z());
      hi_y = std::max(hi_y, c.y() / c.z());
    }
    const double mid_x = 0.5 * (lo_x + hi_x);
    const double mid_y = 0.5 * (lo_y + hi_y);
    auto frame = [&](double f) {
      cam.intrinsics = Intrinsics::single_focal(f, 0.5 * (size.width - 1) - f * mid_x, 0.5 * (size.height - 1) - f * mid_y);
    };
    double f = options.fill * std::min((size.width - 1) / (hi_x - lo_x), (size.height - 1) / (hi_y - lo_y));
    frame(f);
    // Zoom in until the subject covers the requested share of the image;
    // coverage grows roughly with f^2.
    const double pixels = static_cast<double>(size.width) * size.height;
    for (int iter = 0; iter < 8 && options.min_coverage > 0.0; ++iter) {
      const double coverage = rasterize_mesh(subject, cam).mask_count() / pixels;
      if (coverage >= options.min_coverage) break;
      f *= std::clamp(std::sqrt(options.min_coverage / std::max(coverage, 1e-6)) * 1.02, 1.02, 2.0);
      frame(f);
    }
    cameras.push_back(cam);
  }
  return cameras;
}

void SceneSpec::validate() const {
  if (cameras.empty()) throw Error(ErrorCode::InvalidSpec, "scene needs at least one camera");
  if (resolution.width <= 0 || resolution.height <= 0) throw Error(ErrorCode::InvalidSpec, "resolution must be positive");
  noise.validate();
  ground_truth.validate();
  for (const auto& cam : cameras) {
    cam.validate();
    if (!(cam.image_size == resolution)) throw Error(ErrorCode::InvalidSpec, "camera image size differs from resolution");
  }
}

ModelParams default_ground_truth(int shape_dims, int pose_dims) {
  static constexpr double kShape[] = {0.3, -0.25, 0.2, -0.15};
  static constexpr double kPose[] = {0.12, -0.08, 0.06, 0.05};
  ModelParams p = ModelParams::identity(shape_dims, pose_dims);
  p.r = Vec3(0.02, -0.03, 0.12);
  p.s = 1.04;
  p.t = Vec3(-125.0, 3.0, 9.5);  // sole just above the floor plane z = 0
  for (int i = 0; i < shape_dims; ++i) p.z_shape(i) = kShape[i % 4];
  for (int j = 0; j < pose_dims; ++j) p.z_pose(j) = kPose[j % 4];
  return p;
}

SceneSpec default_scene_spec(int views, std::uint64_t seed, const NoiseSpec& noise) {
  if (views < 1) throw Error(ErrorCode::InvalidSpec, "scene needs at least one camera");
  SceneSpec spec;
  spec.seed = seed;
  spec.noise = noise;
  spec.ground_truth = default_ground_truth(spec.model.shape_dims, spec.model.pose_dims);
  const DeformableModel model = build_model(spec.model, {});
  spec.cameras = ring_cameras(model.deformed_mesh(spec.ground_truth), views, spec.resolution);
  return spec;
}

GeneratedScene render_scene(const SceneSpec& spec, unsigned threads) {
  spec.validate();
  const DeformableModel model = build_model(spec.model, {});
  GeneratedScene scene;
  scene.ground_truth = model.deformed_mesh(spec.ground_truth);
  scene.images.resize(spec.cameras.size());
  parallel_for(spec.cameras.size(), threads, [&](std::size_t i) {
    const TocImage clean = rasterize_mesh(scene.ground_truth, spec.cameras[i]);
    scene.images[i] = emulate_prediction(clean, spec.noise, derive_seed(spec.seed, i));
  });

  SceneManifest& m = scene.manifest;
  m.model = spec.model;
  m.ground_truth = GroundTruthRecord{spec.ground_truth, "gt.ply"};
  m.noise = spec.noise;
  m.noise_seed = spec.seed;
  for (std::size_t i = 0; i < spec.cameras.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "view_%03zu", i);
    const std::string dir = name;
    m.views.push_back({dir, spec.cameras[i],
                       {dir + "/toc_mean.fimg", dir + "/toc_logvar.fimg", dir + "/normal.fimg", dir + "/mask.fimg",
                        dir + "/depth.fimg"}});
  }
  return scene;
}

void write_scene(const GeneratedScene& scene, const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw Error(ErrorCode::Io, directory.string() + ": " + ec.message());
  for (std::size_t i = 0; i < scene.images.size(); ++i) {
    const ViewRecord& view = scene.manifest.views[i];
    std::filesystem::create_directories(directory / view.name, ec);
    if (ec) throw Error(ErrorCode::Io, (directory / view.name).string() + ": " + ec.message());
    write_toc_image(scene.images[i], directory, view.rasters);
  }
  if (scene.manifest.ground_truth) {
    write_ply(directory / scene.manifest.ground_truth->mesh_path, scene.ground_truth);
  }
  write_manifest(directory / kManifestFileName, scene.manifest);
}

GeneratedScene generate_scene(const SceneSpec& spec, const std::filesystem::path& directory, unsigned threads) {
  GeneratedScene scene = render_scene(spec, threads);
  write_scene(scene, directory);
  return scene;
}

}  // namespace focus
