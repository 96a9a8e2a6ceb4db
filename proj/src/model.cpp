#include "focus/model.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "focus/error.hpp"
#include "focus/rng.hpp"

namespace focus {

ModelParams ModelParams::identity(int shape_dims, int pose_dims) {
  ModelParams p;
  p.z_shape = Eigen::VectorXd::Zero(shape_dims);
  p.z_pose = Eigen::VectorXd::Zero(pose_dims);
  return p;
}

Eigen::VectorXd ModelParams::pack() const {
  Eigen::VectorXd v(size());
  v.segment<3>(param_index::kRotation) = r;
  v(param_index::kScale) = s;
  v.segment<3>(param_index::kTranslation) = t;
  v.segment(param_index::kShape, shape_dims()) = z_shape;
  v.segment(param_index::kShape + shape_dims(), pose_dims()) = z_pose;
  return v;
}

ModelParams ModelParams::unpack(const Eigen::VectorXd& v, int shape_dims, int pose_dims) {
  if (v.size() != 7 + shape_dims + pose_dims) {
    throw Error(ErrorCode::InvalidSpec, "parameter vector has wrong length");
  }
  ModelParams p;
  p.r = v.segment<3>(param_index::kRotation);
  p.s = v(param_index::kScale);
  p.t = v.segment<3>(param_index::kTranslation);
  p.z_shape = v.segment(param_index::kShape, shape_dims);
  p.z_pose = v.segment(param_index::kShape + shape_dims, pose_dims);
  return p;
}

void ModelParams::validate() const {
  if (!(s > 0.0)) throw Error(ErrorCode::InvalidSpec, "scale must be positive");
  if (!r.allFinite() || !t.allFinite() || !std::isfinite(s) || !z_shape.allFinite() || !z_pose.allFinite()) {
    throw Error(ErrorCode::InvalidSpec, "parameters must be finite");
  }
}

namespace {

struct Ramp {
  double weight;
  double slope;  // d weight / d x (template mm)
};

Ramp ramp(const Bend& bend, double x) {
  const double span = bend.ramp_end - bend.ramp_begin;
  const double u = (x - bend.ramp_begin) / span;
  if (u <= 0.0) return {0.0, 0.0};
  if (u >= 1.0) return {1.0, 0.0};
  return {u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u) / span};
}

Mat3 axis_rotation(const Vec3& axis, double angle) { return rodrigues(axis * angle); }

// Per-point terms of the template-space displacement y(x) = x + sum z_i B_i(x) + sum W_j(x).
struct LocalTerms {
  Vec3 y;
  Mat3 y_x;                      // dy/dx
  std::vector<Vec3> shape;       // B_i(x)
  std::vector<Mat3> shape_x;     // dB_i/dx
  std::vector<Vec3> pose;        // dW_j/dtheta_j
  std::vector<Mat3> pose_x;      // d(dW_j/dx)/dtheta_j
};

LocalTerms local_terms(const std::vector<ShapeMode>& modes, const std::vector<Bend>& bends, const Vec3& x,
                       const ModelParams& p, bool with_second) {
  LocalTerms out;
  out.y = x;
  out.y_x = Mat3::Identity();
  out.shape.resize(modes.size());
  out.shape_x.resize(modes.size());
  for (std::size_t i = 0; i < modes.size(); ++i) {
    const ShapeMode& m = modes[i];
    const Vec3 arg = m.frequency * x + m.phase;
    Vec3 b;
    Vec3 db;
    for (int k = 0; k < 3; ++k) {
      b(k) = m.amplitude(k) * std::sin(arg(k));
      db(k) = m.amplitude(k) * std::cos(arg(k));
    }
    out.shape[i] = b;
    out.shape_x[i] = db.asDiagonal() * m.frequency;
    out.y += p.z_shape(i) * b;
    out.y_x += p.z_shape(i) * out.shape_x[i];
  }
  out.pose.resize(bends.size());
  if (with_second) out.pose_x.resize(bends.size());
  for (std::size_t j = 0; j < bends.size(); ++j) {
    const Bend& bend = bends[j];
    const double theta = p.z_pose(j);
    const Ramp w = ramp(bend, x.x());
    const Vec3 v = x - bend.pivot;
    const Mat3 q = axis_rotation(bend.axis, w.weight * theta);
    const Mat3 a = skew(bend.axis);
    const Vec3 qv = q * v;
    const Vec3 aqv = a * qv;
    const Vec3 grad_w = Vec3(w.slope, 0.0, 0.0);
    out.y += qv - v;
    out.y_x += q - Mat3::Identity() + theta * aqv * grad_w.transpose();
    out.pose[j] = w.weight * aqv;
    if (with_second) {
      out.pose_x[j] = w.weight * a * q + (w.weight * theta * (a * aqv) + aqv) * grad_w.transpose();
    }
  }
  return out;
}

}  // namespace

DeformableModel::DeformableModel(TriMesh template_mesh, std::vector<ShapeMode> shape_modes, std::vector<Bend> bends)
    : template_(std::move(template_mesh)), shape_modes_(std::move(shape_modes)), bends_(std::move(bends)) {
  if (template_.vertices.empty() || template_.faces.empty()) {
    throw Error(ErrorCode::InvalidSpec, "template mesh is empty");
  }
  const BoundingBox box = bounding_box(template_.vertices);
  bbox_min_ = box.min;
  bbox_max_ = box.max;
  if (!(box.extent().minCoeff() > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "template bounding box must have positive extent on every axis");
  }
  template_.tocs.resize(template_.vertices.size());
  for (std::size_t i = 0; i < template_.vertices.size(); ++i) {
    template_.tocs[i] = template_to_toc(template_.vertices[i]);
  }
  template_.normals = compute_vertex_normals(template_);
  template_.validate();
  for (auto& b : bends_) {
    if (!(b.ramp_end > b.ramp_begin)) throw Error(ErrorCode::InvalidSpec, "bend ramp must be increasing");
    b.axis.normalize();
  }
}

namespace {

std::vector<ShapeMode> make_shape_modes(const Vec3& extent, std::uint64_t seed, int count) {
  const double diagonal = extent.norm();
  std::vector<ShapeMode> modes;
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
    ShapeMode m;
    for (int k = 0; k < 3; ++k) {
      m.amplitude(k) = rng.uniform(-0.04, 0.04) * diagonal;
      for (int a = 0; a < 3; ++a) {
        // At most one cycle per axis extent.
        m.frequency(k, a) = 2.0 * std::numbers::pi * rng.uniform(-1.0, 1.0) / extent(a);
      }
      m.phase(k) = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
    modes.push_back(m);
  }
  return modes;
}

std::vector<Bend> make_bends(const Vec3& lo, const Vec3& extent, int count) {
  if (count < 0 || count > 4) throw Error(ErrorCode::InvalidSpec, "pose_dims must be in [0, 4]");
  auto at = [&](double fx, double fy, double fz) {
    return Vec3(lo.x() + fx * extent.x(), lo.y() + fy * extent.y(), lo.z() + fz * extent.z());
  };
  auto along = [&](double f) { return lo.x() + f * extent.x(); };
  // Toe flexion, forefoot yaw, midfoot pitch, and roll along the foot.
  const std::vector<Bend> all = {
      {Vec3::UnitY(), at(0.60, 0.5, 0.25), along(0.55), along(0.75)},
      {Vec3::UnitZ(), at(0.60, 0.5, 0.25), along(0.55), along(0.75)},
      {Vec3::UnitY(), at(0.35, 0.5, 0.25), along(0.25), along(0.55)},
      {Vec3::UnitX(), at(0.50, 0.5, 0.00), along(0.20), along(0.80)},
  };
  return {all.begin(), all.begin() + count};
}

}  // namespace

TriMesh make_foot_template() {
  constexpr double kLength = 250.0;
  constexpr int kRings = 70;
  constexpr int kSegments = 72;
  auto envelope = [](double t) { return std::sqrt(std::max(0.0, 1.0 - std::pow(std::abs(2.0 * t - 1.0), 5.0))); };
  auto half_width = [](double t) { return 30.0 + 20.0 * std::exp(-std::pow((t - 0.72) / 0.25, 2.0)); };
  auto top = [](double t) { return 28.0 + 55.0 * std::exp(-std::pow((t - 0.30) / 0.28, 2.0)); };
  auto lateral = [](double t) { return 8.0 * (t - 0.5) * (t - 0.5) - 2.0; };
  constexpr double kSole = 0.0;

  TriMesh mesh;
  auto center_at = [&](double t) { return Vec3(t * kLength, lateral(t), 0.5 * (top(t) + kSole)); };
  mesh.vertices.push_back(center_at(0.0));
  for (int i = 1; i <= kRings; ++i) {
    const double u = static_cast<double>(i) / (kRings + 1);
    const double t = 0.5 * (1.0 - std::cos(std::numbers::pi * u));
    const Vec3 c = center_at(t);
    const double env = envelope(t);
    const double wy = half_width(t) * env;
    const double hz = 0.5 * (top(t) - kSole) * env;
    for (int j = 0; j < kSegments; ++j) {
      const double v = 2.0 * std::numbers::pi * j / kSegments;
      mesh.vertices.emplace_back(c.x(), c.y() + wy * std::cos(v), c.z() + hz * std::sin(v));
    }
  }
  mesh.vertices.push_back(center_at(1.0));
  const int heel = 0;
  const int toe = static_cast<int>(mesh.vertices.size()) - 1;
  auto ring = [&](int i, int j) { return 1 + (i - 1) * kSegments + (j % kSegments); };
  for (int j = 0; j < kSegments; ++j) {
    mesh.faces.push_back({heel, ring(1, j + 1), ring(1, j)});
    mesh.faces.push_back({toe, ring(kRings, j), ring(kRings, j + 1)});
  }
  for (int i = 1; i < kRings; ++i) {
    for (int j = 0; j < kSegments; ++j) {
      mesh.faces.push_back({ring(i, j), ring(i, j + 1), ring(i + 1, j + 1)});
      mesh.faces.push_back({ring(i, j), ring(i + 1, j + 1), ring(i + 1, j)});
    }
  }
  if (signed_volume(mesh, bounding_box(mesh.vertices).center()) < 0.0) {
    for (auto& f : mesh.faces) std::swap(f[1], f[2]);
  }
  return mesh;
}

DeformableModel DeformableModel::from_template(TriMesh template_mesh, std::uint64_t seed, int shape_dims,
                                               int pose_dims) {
  if (shape_dims < 0) throw Error(ErrorCode::InvalidSpec, "shape_dims must be non-negative");
  const BoundingBox box = bounding_box(template_mesh.vertices);
  auto modes = make_shape_modes(box.extent(), seed, shape_dims);
  auto bends = make_bends(box.min, box.extent(), pose_dims);
  return DeformableModel(std::move(template_mesh), std::move(modes), std::move(bends));
}

DeformableModel DeformableModel::procedural(std::uint64_t seed, int shape_dims, int pose_dims) {
  return from_template(make_foot_template(), seed, shape_dims, pose_dims);
}

Vec3 DeformableModel::template_to_toc(const Vec3& x) const {
  if (!((x - bbox_min_).minCoeff() >= -1e-9 && (bbox_max_ - x).minCoeff() >= -1e-9)) {
    std::ostringstream os;
    os << "template point (" << x.transpose() << ") lies outside the template bounding box";
    throw Error(ErrorCode::OutOfRange, os.str());
  }
  return ((x - bbox_min_).array() / (bbox_max_ - bbox_min_).array()).matrix();
}

Vec3 DeformableModel::toc_to_template(const Vec3& toc) const {
  if (!(toc.minCoeff() >= 0.0 && toc.maxCoeff() <= 1.0)) {
    std::ostringstream os;
    os << "toc (" << toc.transpose() << ") outside [0,1]^3";
    throw Error(ErrorCode::OutOfRange, os.str());
  }
  return bbox_min_ + (toc.array() * (bbox_max_ - bbox_min_).array()).matrix();
}

void DeformableModel::check_params(const ModelParams& params) const {
  if (params.shape_dims() != shape_dims() || params.pose_dims() != pose_dims()) {
    throw Error(ErrorCode::InvalidSpec, "parameter dimensions do not match the model");
  }
}

Vec3 DeformableModel::deform(const Vec3& x, const ModelParams& params) const {
  check_params(params);
  Vec3 y = x;
  for (std::size_t i = 0; i < shape_modes_.size(); ++i) {
    const ShapeMode& m = shape_modes_[i];
    const Vec3 arg = m.frequency * x + m.phase;
    for (int k = 0; k < 3; ++k) y(k) += params.z_shape(i) * m.amplitude(k) * std::sin(arg(k));
  }
  for (std::size_t j = 0; j < bends_.size(); ++j) {
    const Bend& bend = bends_[j];
    const Vec3 v = x - bend.pivot;
    y += axis_rotation(bend.axis, ramp(bend, x.x()).weight * params.z_pose(j)) * v - v;
  }
  return params.s * (rodrigues(params.r) * y) + params.t;
}

DeformJacobians DeformableModel::jacobians(const Vec3& x, const ModelParams& params) const {
  return derivatives(x, params).jac;
}

DeformDerivatives DeformableModel::derivatives(const Vec3& x, const ModelParams& params) const {
  check_params(params);
  const LocalTerms lt = local_terms(shape_modes_, bends_, x, params, true);
  const Mat3 rot = rodrigues(params.r);
  const auto d_rot = rodrigues_derivatives(params.r);
  const double s = params.s;
  const int n = param_count();

  DeformDerivatives out;
  out.point = s * (rot * lt.y) + params.t;
  out.jac.d_params.resize(3, n);
  out.jac.d_x = s * rot * lt.y_x;
  out.d_x_d_params.assign(n, Mat3::Zero());
  for (int k = 0; k < 3; ++k) {
    out.jac.d_params.col(param_index::kRotation + k) = s * (d_rot[k] * lt.y);
    out.d_x_d_params[param_index::kRotation + k] = s * d_rot[k] * lt.y_x;
  }
  out.jac.d_params.col(param_index::kScale) = rot * lt.y;
  out.d_x_d_params[param_index::kScale] = rot * lt.y_x;
  out.jac.d_params.middleCols<3>(param_index::kTranslation).setIdentity();
  for (int i = 0; i < shape_dims(); ++i) {
    out.jac.d_params.col(param_index::kShape + i) = s * (rot * lt.shape[i]);
    out.d_x_d_params[param_index::kShape + i] = s * rot * lt.shape_x[i];
  }
  for (int j = 0; j < pose_dims(); ++j) {
    const int col = param_index::kShape + shape_dims() + j;
    out.jac.d_params.col(col) = s * (rot * lt.pose[j]);
    out.d_x_d_params[col] = s * rot * lt.pose_x[j];
  }
  return out;
}

TriMesh DeformableModel::deformed_mesh(const ModelParams& params) const {
  params.validate();
  TriMesh mesh;
  mesh.faces = template_.faces;
  mesh.vertices.reserve(template_.vertices.size());
  for (const auto& v : template_.vertices) mesh.vertices.push_back(deform(v, params));
  mesh.normals = compute_vertex_normals(mesh);
  mesh.tocs = template_.tocs;
  return mesh;
}

}  // namespace focus
