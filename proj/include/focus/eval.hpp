#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "focus/mesh.hpp"
#include "focus/optim.hpp"
#include "focus/scene.hpp"
#include "focus/sfm.hpp"

namespace focus {

/// Removes everything above z_max, splitting faces that cross the plane. The
/// cut is left open. Throws EmptyMesh when nothing lies at or below z_max.
TriMesh crop_at_height(const TriMesh& mesh, double z_max);

struct SurfaceSample {
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
};

/// Area-weighted face choice with uniform barycentric placement; normals are
/// face normals. Throws DegenerateMesh when the total area is zero.
std::vector<SurfaceSample> sample_surface(const TriMesh& mesh, int count, std::uint64_t seed);

struct SurfaceHit {
  int face = -1;
  Vec3 point = Vec3::Zero();
  double squared_distance = 0.0;
};

/// Bounding-volume hierarchy over the faces of a mesh for exact closest-point
/// queries. Equal distances resolve to the lowest face index, so results match
/// a linear scan over all faces.
class MeshBvh {
 public:
  /// Throws EmptyMesh when the mesh has no faces.
  explicit MeshBvh(const TriMesh& mesh);

  SurfaceHit closest(const Vec3& p) const;
  const TriMesh& mesh() const { return *mesh_; }

 private:
  struct Node {
    BoundingBox box;
    int left = -1;
    int right = -1;
    int begin = 0;
    int end = 0;
  };

  int build(int begin, int end);
  void closest_rec(int node, const Vec3& p, SurfaceHit& best) const;

  const TriMesh* mesh_;
  std::vector<int> faces_;
  std::vector<BoundingBox> face_boxes_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

SurfaceHit closest_point_brute_force(const TriMesh& mesh, const Vec3& p);

/// Angle between two directions in degrees.
double angle_degrees(const Vec3& a, const Vec3& b);

struct Statistics {
  double mean = 0.0;
  double median = 0.0;
  double rmse = 0.0;
  double max = 0.0;
};

/// Statistics of a non-empty value set, computed over the sorted values.
Statistics summarize(std::vector<double> values);

struct DirectionalErrors {
  std::vector<double> distance;  // mm
  std::vector<double> angle;     // degrees
};

/// Distance and normal angle from every sample to its closest point on the
/// mesh (face normal at the hit). Throws EmptyInput on empty samples.
DirectionalErrors nn_errors(const std::vector<SurfaceSample>& samples, const MeshBvh& surface, unsigned threads = 0);

struct MetricReport {
  Statistics chamfer;  // mm
  Statistics normal;   // degrees
  std::size_t samples = 0;
  std::optional<Statistics> forward_chamfer;  // prediction -> reference
  std::optional<Statistics> forward_normal;
  std::optional<Statistics> backward_chamfer;  // reference -> prediction
  std::optional<Statistics> backward_normal;
  std::optional<double> coverage;  // clouds only
};

/// One direction (bidirectional = false) or both directions pooled.
MetricReport nn_metrics(const std::vector<SurfaceSample>& a, const TriMesh& b, bool bidirectional,
                        const std::vector<SurfaceSample>& b_samples = {}, const TriMesh* a_mesh = nullptr,
                        unsigned threads = 0);

struct EvalOptions {
  std::optional<double> crop_z_mm = 100.0;
  int samples = 10000;
  std::uint64_t seed = 42;
  double coverage_radius_mm = 2.0;
  unsigned threads = 0;
};

/// Crops both meshes, samples each surface with the same seed and pools both
/// directions.
MetricReport mesh_to_mesh(const TriMesh& prediction, const TriMesh& reference, const EvalOptions& options);

/// Cloud-to-surface metrics for an oriented cloud (points above the crop
/// height dropped) plus the fraction of reference samples within
/// coverage_radius_mm of the cloud.
MetricReport cloud_to_mesh(const OrientedPointCloud& cloud, const TriMesh& reference, const EvalOptions& options);

nlohmann::json report_to_json(const MetricReport& report);

enum class BenchMethod { Sfm, Optim };

struct BenchRow {
  int views = 0;
  BenchMethod method = BenchMethod::Sfm;
  std::optional<MetricReport> report;  // empty when the method produced no result
  std::string failure;
};

/// For each count, picks views evenly over azimuth, reconstructs and evaluates
/// against the scene's ground-truth mesh. An empty cloud is recorded as a
/// failed row; other errors propagate. Throws InvalidRequest when a count
/// exceeds the available views.
std::vector<BenchRow> bench_views(const Scene& scene, BenchMethod method, const std::vector<int>& counts,
                                  const SfmConfig& sfm, const OptimConfig& optim, const EvalOptions& eval);

std::string bench_csv(const std::vector<BenchRow>& rows);

const char* to_string(BenchMethod method);

}  // namespace focus
