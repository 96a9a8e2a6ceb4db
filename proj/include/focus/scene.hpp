#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "focus/geometry.hpp"
#include "focus/image.hpp"
#include "focus/mesh.hpp"
#include "focus/model.hpp"

namespace focus {

struct ModelSpec {
  std::uint64_t seed = 7;
  int shape_dims = 4;
  int pose_dims = 4;
  /// Optional PLY template, relative to the manifest directory. Empty means
  /// the built-in procedural foot.
  std::string template_path;
};

/// Heteroscedastic prediction noise, in TOC units.
struct NoiseSpec {
  double sigma_base = 0.0;
  double sigma_range = 0.0;

  void validate() const;
};

struct RasterPaths {
  std::string toc_mean;
  std::string toc_logvar;
  std::string normal;
  std::string mask;
  std::string depth;
};

struct ViewRecord {
  std::string name;
  CameraView camera;
  RasterPaths rasters;
};

struct GroundTruthRecord {
  ModelParams params;
  std::string mesh_path;
};

struct SceneManifest {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::string units = "mm";
  ModelSpec model;
  std::optional<GroundTruthRecord> ground_truth;
  std::optional<NoiseSpec> noise;
  std::optional<std::uint64_t> noise_seed;
  std::vector<ViewRecord> views;
};

/// A scene loaded from disk: cameras, prediction rasters and, for synthetic
/// scenes, the ground-truth mesh.
struct Scene {
  std::filesystem::path directory;
  SceneManifest manifest;
  std::vector<CameraView> cameras;
  std::vector<TocImage> images;
  std::optional<TriMesh> ground_truth_mesh;
};

inline constexpr const char* kManifestFileName = "manifest.json";

DeformableModel build_model(const ModelSpec& spec, const std::filesystem::path& base_dir);

/// Reads manifest.json and every referenced raster; checks raster sizes
/// against the camera image sizes. Missing directories surface as Io errors.
Scene load_scene(const std::filesystem::path& directory);

/// Indices of k views spread evenly over the azimuthal ordering of the camera
/// centres around `center`. Throws InvalidRequest when k exceeds the count.
std::vector<int> select_views_by_azimuth(const std::vector<CameraView>& cameras, int k, const Vec3& center);

/// Keeps only the listed views.
Scene subset_views(const Scene& scene, const std::vector<int>& indices);

}  // namespace focus
