#include "focus/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "focus/error.hpp"
#include "focus/io.hpp"

namespace focus {

DeformableModel build_model(const ModelSpec& spec, const std::filesystem::path& base_dir) {
  if (spec.template_path.empty()) return DeformableModel::procedural(spec.seed, spec.shape_dims, spec.pose_dims);
  TriMesh mesh = read_ply(base_dir / spec.template_path);
  mesh.normals.clear();
  mesh.tocs.clear();
  return DeformableModel::from_template(std::move(mesh), spec.seed, spec.shape_dims, spec.pose_dims);
}

Scene load_scene(const std::filesystem::path& directory) {
  if (!std::filesystem::is_directory(directory)) {
    throw Error(ErrorCode::Io, directory.string() + ": scene directory does not exist");
  }
  Scene scene;
  scene.directory = directory;
  scene.manifest = read_manifest(directory / kManifestFileName);
  for (const ViewRecord& view : scene.manifest.views) {
    TocImage img = read_toc_image(directory, view.rasters);
    if (img.width != view.camera.image_size.width || img.height != view.camera.image_size.height) {
      throw Error(ErrorCode::Format, (directory / view.rasters.toc_mean).string() + ": raster is " +
                                         std::to_string(img.width) + "x" + std::to_string(img.height) +
                                         " but view '" + view.name + "' declares " +
                                         std::to_string(view.camera.image_size.width) + "x" +
                                         std::to_string(view.camera.image_size.height));
    }
    scene.cameras.push_back(view.camera);
    scene.images.push_back(std::move(img));
  }
  if (scene.manifest.ground_truth) scene.ground_truth_mesh = read_ply(directory / scene.manifest.ground_truth->mesh_path);
  return scene;
}

std::vector<int> select_views_by_azimuth(const std::vector<CameraView>& cameras, int k, const Vec3& center) {
  const int n = static_cast<int>(cameras.size());
  if (k < 1 || k > n) {
    throw Error(ErrorCode::InvalidRequest,
                "requested " + std::to_string(k) + " views but the scene has " + std::to_string(n));
  }
  std::vector<double> azimuth(n);
  for (int i = 0; i < n; ++i) {
    const Vec3 d = cameras[i].center() - center;
    azimuth[i] = std::atan2(d.y(), d.x());
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return azimuth[a] < azimuth[b]; });
  std::vector<int> picked(k);
  for (int i = 0; i < k; ++i) picked[i] = order[static_cast<std::size_t>(i) * n / k];
  std::sort(picked.begin(), picked.end());
  return picked;
}

Scene subset_views(const Scene& scene, const std::vector<int>& indices) {
  Scene out;
  out.directory = scene.directory;
  out.manifest = scene.manifest;
  out.manifest.views.clear();
  out.ground_truth_mesh = scene.ground_truth_mesh;
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(scene.cameras.size())) {
      throw Error(ErrorCode::InvalidRequest, "view index " + std::to_string(i) + " out of range");
    }
    out.manifest.views.push_back(scene.manifest.views[i]);
    out.cameras.push_back(scene.cameras[i]);
    out.images.push_back(scene.images[i]);
  }
  return out;
}

}  // namespace focus
