#include "focus/mesh.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "focus/error.hpp"

namespace focus {

void TriMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int idx : faces[f]) {
      if (idx < 0 || idx >= n) {
        std::ostringstream os;
        os << "face " << f << " references vertex " << idx << " (mesh has " << n << ")";
        throw Error(ErrorCode::InvalidSpec, os.str());
      }
    }
  }
  if (!normals.empty()) {
    if (normals.size() != vertices.size()) throw Error(ErrorCode::InvalidSpec, "normal count != vertex count");
    for (std::size_t i = 0; i < normals.size(); ++i) {
      if (!(std::abs(normals[i].norm() - 1.0) <= 1e-6)) {
        throw Error(ErrorCode::InvalidSpec, "normal " + std::to_string(i) + " is not unit length");
      }
    }
  }
  if (!tocs.empty()) {
    if (tocs.size() != vertices.size()) throw Error(ErrorCode::InvalidSpec, "toc count != vertex count");
    for (std::size_t i = 0; i < tocs.size(); ++i) {
      if (!(tocs[i].minCoeff() >= 0.0 && tocs[i].maxCoeff() <= 1.0)) {
        throw Error(ErrorCode::InvalidSpec, "toc " + std::to_string(i) + " outside [0,1]^3");
      }
    }
  }
}

Vec3 face_normal_scaled(const TriMesh& mesh, int face) {
  const Face& f = mesh.faces[face];
  const Vec3& a = mesh.vertices[f[0]];
  return (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a);
}

Vec3 face_normal(const TriMesh& mesh, int face) {
  const Vec3 n = face_normal_scaled(mesh, face);
  const double len = n.norm();
  return len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
}

double face_area(const TriMesh& mesh, int face) { return 0.5 * face_normal_scaled(mesh, face).norm(); }

double surface_area(const TriMesh& mesh) {
  double total = 0.0;
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) total += face_area(mesh, f);
  return total;
}

std::vector<Vec3> compute_vertex_normals(const TriMesh& mesh) {
  std::vector<Vec3> normals(mesh.vertices.size(), Vec3::Zero());
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) {
    const Vec3 n = face_normal_scaled(mesh, f);
    for (int idx : mesh.faces[f]) normals[idx] += n;
  }
  for (auto& n : normals) {
    const double len = n.norm();
    n = len > 0.0 ? Vec3(n / len) : Vec3::UnitZ();
  }
  return normals;
}

double signed_volume(const TriMesh& mesh, const Vec3& origin) {
  double vol = 0.0;
  for (const Face& f : mesh.faces) {
    const Vec3 a = mesh.vertices[f[0]] - origin;
    const Vec3 b = mesh.vertices[f[1]] - origin;
    const Vec3 c = mesh.vertices[f[2]] - origin;
    vol += a.dot(b.cross(c));
  }
  return vol / 6.0;
}

BoundingBox bounding_box(const std::vector<Vec3>& points) {
  BoundingBox box;
  for (const auto& p : points) box.extend(p);
  return box;
}

ClosestPoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return {a, (p - a).squaredNorm()};

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return {b, (p - b).squaredNorm()};

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    const Vec3 q = a + v * ab;
    return {q, (p - q).squaredNorm()};
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return {c, (p - c).squaredNorm()};

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    const Vec3 q = a + w * ac;
    return {q, (p - q).squaredNorm()};
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    const Vec3 q = b + w * (c - b);
    return {q, (p - q).squaredNorm()};
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  const Vec3 q = a + ab * v + ac * w;
  return {q, (p - q).squaredNorm()};
}

TriMesh make_icosphere(double radius, int subdivisions, const Vec3& center) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                             {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<Face> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoints;
    auto midpoint = [&](int i, int j) {
      const auto key = std::minmax(i, j);
      auto it = midpoints.find(key);
      if (it != midpoints.end()) return it->second;
      verts.push_back((verts[i] + verts[j]).normalized());
      const int idx = static_cast<int>(verts.size()) - 1;
      midpoints.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(faces.size() * 4);
    for (const Face& f : faces) {
      const int ab = midpoint(f[0], f[1]);
      const int bc = midpoint(f[1], f[2]);
      const int ca = midpoint(f[2], f[0]);
      next.push_back({f[0], ab, ca});
      next.push_back({f[1], bc, ab});
      next.push_back({f[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    faces = std::move(next);
  }
  TriMesh mesh;
  mesh.vertices.reserve(verts.size());
  for (const auto& v : verts) mesh.vertices.push_back(center + radius * v);
  mesh.faces = std::move(faces);
  mesh.normals = verts;
  return mesh;
}

TriMesh make_box(const Vec3& lo, const Vec3& hi, int divisions) {
  TriMesh mesh;
  const int n = std::max(1, divisions);
  // Each side: fixed axis, sign, and the two in-plane axes ordered so that
  // (u x v) points outward.
  struct Side {
    int axis;
    bool positive;
    int u;
    int v;
  };
  const Side sides[6] = {{0, false, 2, 1}, {0, true, 1, 2}, {1, false, 0, 2},
                         {1, true, 2, 0},  {2, false, 1, 0}, {2, true, 0, 1}};
  for (const Side& side : sides) {
    const int base = static_cast<int>(mesh.vertices.size());
    for (int i = 0; i <= n; ++i) {
      for (int j = 0; j <= n; ++j) {
        Vec3 p;
        p(side.axis) = side.positive ? hi(side.axis) : lo(side.axis);
        p(side.u) = lo(side.u) + (hi(side.u) - lo(side.u)) * i / n;
        p(side.v) = lo(side.v) + (hi(side.v) - lo(side.v)) * j / n;
        mesh.vertices.push_back(p);
      }
    }
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const int a = base + i * (n + 1) + j;
        const int b = base + (i + 1) * (n + 1) + j;
        const int c = base + (i + 1) * (n + 1) + j + 1;
        const int d = base + i * (n + 1) + j + 1;
        mesh.faces.push_back({a, b, c});
        mesh.faces.push_back({a, c, d});
      }
    }
  }
  return mesh;
}

}  // namespace focus
