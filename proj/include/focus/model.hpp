#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "focus/geometry.hpp"
#include "focus/mesh.hpp"

namespace focus {

/// Parameters of the deformation x2 = F(x1, z_s, z_p, r, s, t).
/// Flattened order (see pack/unpack): r(3), s, t(3), z_shape, z_pose.
struct ModelParams {
  Vec3 r = Vec3::Zero();
  double s = 1.0;
  Vec3 t = Vec3::Zero();
  Eigen::VectorXd z_shape;
  Eigen::VectorXd z_pose;

  static ModelParams identity(int shape_dims, int pose_dims);

  int shape_dims() const { return static_cast<int>(z_shape.size()); }
  int pose_dims() const { return static_cast<int>(z_pose.size()); }
  int size() const { return 7 + shape_dims() + pose_dims(); }

  Eigen::VectorXd pack() const;
  static ModelParams unpack(const Eigen::VectorXd& v, int shape_dims, int pose_dims);

  /// Throws InvalidSpec unless s > 0 and every entry is finite.
  void validate() const;
};

/// Indices into the flattened parameter vector.
namespace param_index {
inline constexpr int kRotation = 0;
inline constexpr int kScale = 3;
inline constexpr int kTranslation = 4;
inline constexpr int kShape = 7;
}  // namespace param_index

/// Low-frequency displacement field: component k is
/// amplitude(k) * sin(frequency.row(k) . x + phase(k)), in mm per unit coefficient.
struct ShapeMode {
  Vec3 amplitude = Vec3::Zero();
  Mat3 frequency = Mat3::Zero();
  Vec3 phase = Vec3::Zero();
};

/// Rotation of the part of the template beyond a ramp along the template x
/// axis, about `axis` through `pivot`. The blend weight rises from 0 at
/// ramp_begin to 1 at ramp_end (template mm) with a cubic smoothstep.
struct Bend {
  Vec3 axis = Vec3::UnitY();
  Vec3 pivot = Vec3::Zero();
  double ramp_begin = 0.0;
  double ramp_end = 1.0;
};

struct DeformJacobians {
  Eigen::Matrix<double, 3, Eigen::Dynamic> d_params;  // 3 x params.size()
  Mat3 d_x;
};

/// Everything the fitting loss needs at one template point: the deformed
/// point, both first derivatives, and d(d_x)/d(param_k) for every parameter.
struct DeformDerivatives {
  Vec3 point;
  DeformJacobians jac;
  std::vector<Mat3> d_x_d_params;
};

/// Procedural stand-in for a learned foot model: a template mesh carrying
/// per-vertex TOC values plus analytic shape and pose deformations.
/// Immutable after construction.
class DeformableModel {
 public:
  DeformableModel(TriMesh template_mesh, std::vector<ShapeMode> shape_modes, std::vector<Bend> bends);

  /// Foot-like template (about 5k vertices) and seed-derived deformation
  /// fields. pose_dims is limited to 4.
  static DeformableModel procedural(std::uint64_t seed, int shape_dims = 4, int pose_dims = 4);

  /// User template with seed-derived deformation fields.
  static DeformableModel from_template(TriMesh template_mesh, std::uint64_t seed, int shape_dims = 4,
                                       int pose_dims = 4);

  const TriMesh& template_mesh() const { return template_; }
  const Vec3& bbox_min() const { return bbox_min_; }
  const Vec3& bbox_max() const { return bbox_max_; }
  Vec3 bbox_extent() const { return bbox_max_ - bbox_min_; }
  int shape_dims() const { return static_cast<int>(shape_modes_.size()); }
  int pose_dims() const { return static_cast<int>(bends_.size()); }
  int param_count() const { return 7 + shape_dims() + pose_dims(); }
  const std::vector<ShapeMode>& shape_modes() const { return shape_modes_; }
  const std::vector<Bend>& bends() const { return bends_; }

  /// Throws OutOfRange when x lies more than 1e-9 outside the box.
  Vec3 template_to_toc(const Vec3& x) const;
  /// Throws OutOfRange when toc is outside [0,1]^3.
  Vec3 toc_to_template(const Vec3& toc) const;

  /// Pre: x within the template box. Not checked here; this is the hot path.
  Vec3 deform(const Vec3& x, const ModelParams& params) const;
  DeformJacobians jacobians(const Vec3& x, const ModelParams& params) const;
  DeformDerivatives derivatives(const Vec3& x, const ModelParams& params) const;

  /// Deformed copy of the template with recomputed normals and the template TOCs.
  TriMesh deformed_mesh(const ModelParams& params) const;

  ModelParams identity_params() const { return ModelParams::identity(shape_dims(), pose_dims()); }

 private:
  void check_params(const ModelParams& params) const;

  TriMesh template_;
  std::vector<ShapeMode> shape_modes_;
  std::vector<Bend> bends_;
  Vec3 bbox_min_;
  Vec3 bbox_max_;
};

/// The procedural foot template alone (no deformation fields).
TriMesh make_foot_template();

}  // namespace focus
