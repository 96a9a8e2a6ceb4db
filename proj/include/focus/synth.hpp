#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "focus/image.hpp"
#include "focus/model.hpp"
#include "focus/scene.hpp"

namespace focus {

/// Renders TOC, normal, mask and depth rasters of a mesh carrying per-vertex
/// TOCs. Attributes are interpolated perspective-correctly and resolved with a
/// z-buffer (nearest surface wins). Without per-vertex normals the face normal
/// is used. Throws BehindCamera if any vertex has non-positive depth.
TocImage rasterize_mesh(const TriMesh& mesh, const CameraView& camera);

/// rasterize_mesh of the model deformed by `params`, at the camera's image size.
TocImage rasterize(const DeformableModel& model, const ModelParams& params, const CameraView& camera);

/// Adds per-pixel Gaussian TOC noise whose standard deviation varies smoothly
/// over the image within [sigma_base, sigma_base + sigma_range] (bilinear over
/// a 4x4 control grid), clamps TOCs to [0,1], and records log sigma^2. Mask,
/// depth and normals are untouched; pixels with sigma == 0 are left as is.
TocImage emulate_prediction(const TocImage& clean, const NoiseSpec& noise, std::uint64_t seed);

/// Per-pixel sigma field used by emulate_prediction.
std::vector<double> sigma_field(int width, int height, const NoiseSpec& noise, std::uint64_t seed);

struct RingOptions {
  double radius_mm = 450.0;
  double elevation_deg = 35.0;
  double azimuth_offset_deg = 0.0;
  /// Fraction of the image the subject's projection may span.
  double fill = 0.9;
  /// Views that would show less of the subject than this share of the image
  /// zoom in on it, cropping its extremities. 0 disables.
  double min_coverage = 0.32;
};

/// Cameras evenly spaced in azimuth around `subject`, looking at its bounding
/// box centre. Each view centres the subject's projection and uses the focal
/// length that frames it whole, zoomed in where needed to reach
/// `min_coverage`.
std::vector<CameraView> ring_cameras(const TriMesh& subject, int count, ImageSize size,
                                     const RingOptions& options = {});

struct SceneSpec {
  ModelSpec model;
  ModelParams ground_truth;
  std::vector<CameraView> cameras;
  ImageSize resolution{640, 480};
  NoiseSpec noise;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Ground-truth pose and shape used for the default synthetic foot.
ModelParams default_ground_truth(int shape_dims, int pose_dims);

/// Default foot scene: procedural model, default ground truth, ring of `views`
/// cameras at 640x480.
SceneSpec default_scene_spec(int views, std::uint64_t seed, const NoiseSpec& noise = {});

struct GeneratedScene {
  std::vector<TocImage> images;
  TriMesh ground_truth;
  SceneManifest manifest;
};

/// Renders every view (views in parallel; each view's noise stream derives
/// from (seed, view index)). Deterministic given the SceneSpec.
GeneratedScene render_scene(const SceneSpec& spec, unsigned threads = 0);

/// render_scene, then writes rasters, gt.ply and manifest.json under `directory`.
GeneratedScene generate_scene(const SceneSpec& spec, const std::filesystem::path& directory, unsigned threads = 0);

/// Writes an already rendered scene.
void write_scene(const GeneratedScene& scene, const std::filesystem::path& directory);

}  // namespace focus
