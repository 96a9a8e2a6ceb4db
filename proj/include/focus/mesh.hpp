#pragma once

#include <array>
#include <limits>
#include <vector>

#include "focus/geometry.hpp"

namespace focus {

using Face = std::array<int, 3>;

/// Triangle mesh in millimetres. `normals` and `tocs` are either empty or hold
/// one entry per vertex.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::vector<Vec3> normals;
  std::vector<Vec3> tocs;

  bool has_normals() const { return !normals.empty(); }
  bool has_tocs() const { return !tocs.empty(); }

  /// Throws InvalidSpec on out-of-range indices, non-unit normals or TOC
  /// values outside the unit cube.
  void validate() const;
};

struct PointProvenance {
  Vec3 toc = Vec3::Zero();
  int view_count = 0;
  double mean_reprojection_error = 0.0;
};

struct OrientedPoint {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  PointProvenance provenance;
};

using OrientedPointCloud = std::vector<OrientedPoint>;

/// Unnormalized face normal (cross product of edges; length is twice the area).
Vec3 face_normal_scaled(const TriMesh& mesh, int face);
Vec3 face_normal(const TriMesh& mesh, int face);
double face_area(const TriMesh& mesh, int face);
double surface_area(const TriMesh& mesh);

/// Area-weighted vertex normals; isolated vertices get +Z.
std::vector<Vec3> compute_vertex_normals(const TriMesh& mesh);

/// Signed volume of the solid bounded by the mesh, taking `origin` as the apex
/// of every tetrahedron. For a mesh clipped by a plane through `origin` this is
/// the volume of the clipped solid.
double signed_volume(const TriMesh& mesh, const Vec3& origin = Vec3::Zero());

struct BoundingBox {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  Vec3 extent() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
};

BoundingBox bounding_box(const std::vector<Vec3>& points);

struct ClosestPoint {
  Vec3 point;
  double squared_distance;
};

/// Closest point on triangle (a, b, c) to p (Ericson, Real-Time Collision
/// Detection, 5.1.5).
ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

/// Icosphere with outward winding, used for tests and evaluation fixtures.
TriMesh make_icosphere(double radius, int subdivisions, const Vec3& center = Vec3::Zero());

/// Axis-aligned box split into `divisions` quads per edge, outward winding.
TriMesh make_box(const Vec3& lo, const Vec3& hi, int divisions);

}  // namespace focus
