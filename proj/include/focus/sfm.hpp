#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "json.hpp"

#include "focus/image.hpp"
#include "focus/kdtree.hpp"
#include "focus/mesh.hpp"
#include "focus/scene.hpp"

namespace focus {

struct SorConfig {
  int k = 20;
  double std_ratio = 2.0;
};

struct SfmConfig {
  int samples_per_image = 3000;
  /// l2 distance in TOC units between the query and an accepted match.
  double match_threshold = 0.002;
  int subpixel_factor = 8;
  double reproj_threshold = 3.0;  // px
  double floor_z = 0.0;           // mm
  SorConfig sor;
  bool subpixel = true;
  /// When false, normals come from a local PCA fit over `pca_neighbors`
  /// triangulated points and carry no orientation.
  bool normal_aggregation = true;
  int pca_neighbors = 20;
  std::uint64_t seed = 42;
  unsigned threads = 0;

  void validate() const;
};

/// Parameters handed to the external screened Poisson mesher.
struct PoissonConfig {
  int depth = 8;
  int iterations = 8;
  double crop_padding_mm = 1.0;
  double height_min_mm = 0.0;
  double height_max_mm = 150.0;
};

nlohmann::json poisson_sidecar_json(const PoissonConfig& config);

struct PixelSample {
  int u = 0;
  int v = 0;
  Vec3 toc = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // camera frame
};

/// P in-mask pixels drawn uniformly without replacement (with replacement
/// when the mask holds fewer than P pixels). Throws EmptyMask.
std::vector<PixelSample> sample_points(const TocImage& image, int count, std::uint64_t seed);

struct TocMatch {
  int u = 0;
  int v = 0;
  Vec3 toc = Vec3::Zero();
  double distance = 0.0;
};

/// Exact nearest-neighbour lookup over the in-mask TOC values of one view.
class TocIndex {
 public:
  /// Throws EmptyMask when the image has no in-mask pixel.
  explicit TocIndex(const TocImage& image);

  TocMatch nearest(const Vec3& toc) const;
  std::size_t size() const { return pixels_.size(); }

 private:
  const TocImage* image_;
  std::vector<int> pixels_;  // flat pixel index per tree point
  KdTree tree_;
};

struct SubpixelMatch {
  Vec2 position = Vec2::Zero();
  Vec3 toc = Vec3::Zero();
  double distance = 0.0;
};

/// Searches bilinearly interpolated TOCs at offsets k/factor, k in
/// [-factor, factor], around (u, v) for the value closest to `query`; the
/// earliest grid offset nearest to zero wins ties. Falls back to the integer
/// pixel when the 3x3 neighbourhood leaves the mask. Returns nullopt when the
/// best distance exceeds `threshold`.
std::optional<SubpixelMatch> refine_subpixel(const TocImage& image, const Vec3& query, int u, int v,
                                             double threshold, int factor = 8);

/// Bilinear TOC at a continuous pixel position inside the image.
Vec3 bilinear_toc(const TocImage& image, double x, double y);

struct TrackObservation {
  int view = 0;
  Vec2 pixel = Vec2::Zero();
  Vec3 toc = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();  // camera frame
};

struct CorrespondenceTrack {
  Vec3 query_toc = Vec3::Zero();
  int source_view = 0;
  int sample_index = 0;
  std::vector<TrackObservation> observations;
  std::optional<Vec3> point;
  std::optional<double> reprojection_error;
};

/// One track per sampled (view, pixel) with an observation in every view whose
/// match passes the threshold. Tracks with fewer than two observations are
/// dropped. Ordered by source view, then sample index.
std::vector<CorrespondenceTrack> match_correspondences(const std::vector<TocImage>& images, const SfmConfig& config);

/// Joint DLT per track; tracks that fail keep an empty `point`.
void triangulate_tracks(std::vector<CorrespondenceTrack>& tracks, const std::vector<CameraView>& cameras,
                        unsigned threads = 0);

/// Keep flags of mean-kNN-distance outlier removal: a point goes when its mean
/// distance to its k nearest neighbours exceeds mean + std_ratio * std of that
/// statistic over all points.
std::vector<bool> statistical_outlier_mask(const std::vector<Vec3>& points, const SorConfig& config);

struct FilterStats {
  std::size_t input = 0;
  std::size_t triangulated = 0;
  std::size_t after_reprojection = 0;
  std::size_t after_floor = 0;
  std::size_t after_sor = 0;
};

/// Reprojection, floor (strict z < floor_z) and outlier filters, in that order.
/// Untriangulated tracks are discarded. Throws EmptyCloud if nothing survives.
std::vector<CorrespondenceTrack> filter_points(const std::vector<CorrespondenceTrack>& tracks, const SfmConfig& config,
                                               FilterStats* stats = nullptr);

/// Consensus of unit normals: arithmetic mean of the polar angle, circular
/// mean of the azimuth. Throws EmptyInput.
Vec3 aggregate_normals(std::span<const Vec3> normals);

/// Unoriented normals from the smallest principal axis of each point's
/// neighbourhood, sign-fixed so the largest-magnitude component is positive.
std::vector<Vec3> pca_normals(const std::vector<Vec3>& points, int neighbors);

struct SfmResult {
  OrientedPointCloud cloud;
  std::size_t samples = 0;
  std::size_t tracks = 0;
  FilterStats filter;
};

SfmResult reconstruct_sfm(const std::vector<TocImage>& images, const std::vector<CameraView>& cameras,
                          const SfmConfig& config);

SfmResult reconstruct_sfm(const Scene& scene, const SfmConfig& config);

/// Loads the scene, reconstructs, writes the cloud PLY and the Poisson sidecar
/// next to it (`<out>.poisson.json`).
SfmResult run_sfm(const std::filesystem::path& scene_dir, const std::filesystem::path& out_ply,
                  const SfmConfig& config, const PoissonConfig& poisson = {});

std::filesystem::path poisson_sidecar_path(const std::filesystem::path& cloud_ply);

}  // namespace focus
