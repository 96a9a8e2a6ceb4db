#include "focus/geometry.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "focus/error.hpp"

namespace focus {

void CameraView::validate() const {
  const double orth = (rotation * rotation.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  const double det = rotation.determinant();
  if (!(orth <= 1e-9) || !(std::abs(det - 1.0) <= 1e-9)) {
    std::ostringstream os;
    os << "rotation is not orthonormal with det +1 (max |RR^T - I| = " << orth << ", det = " << det << ")";
    throw Error(ErrorCode::InvalidSpec, os.str());
  }
  if (!(intrinsics.fx > 0.0) || !(intrinsics.fy > 0.0)) {
    throw Error(ErrorCode::InvalidSpec, "focal lengths must be positive");
  }
  if (image_size.width <= 0 || image_size.height <= 0) {
    throw Error(ErrorCode::InvalidSpec, "image size must be positive");
  }
  if (!translation.allFinite() || !std::isfinite(intrinsics.cx) || !std::isfinite(intrinsics.cy)) {
    throw Error(ErrorCode::InvalidSpec, "camera parameters must be finite");
  }
}

Vec2 project_camera_point(const Intrinsics& k, const Vec3& cam) {
  if (!(cam.z() > 0.0)) {
    std::ostringstream os;
    os << "point has depth " << cam.z() << " in camera frame";
    throw Error(ErrorCode::BehindCamera, os.str());
  }
  return {k.fx * cam.x() / cam.z() + k.cx, k.fy * cam.y() / cam.z() + k.cy};
}

Vec2 project(const CameraView& camera, const Vec3& world) {
  return project_camera_point(camera.intrinsics, camera.to_camera(world));
}

Mat23 projection_jacobian_camera(const Intrinsics& k, const Vec3& cam) {
  const double iz = 1.0 / cam.z();
  Mat23 j;
  j << k.fx * iz, 0.0, -k.fx * cam.x() * iz * iz,  //
      0.0, k.fy * iz, -k.fy * cam.y() * iz * iz;
  return j;
}

Mat23 projection_jacobian(const CameraView& camera, const Vec3& world) {
  return projection_jacobian_camera(camera.intrinsics, camera.to_camera(world)) * camera.rotation;
}

Vec3 triangulate_dlt(std::span<const Observation> observations) {
  if (observations.size() < 2) {
    throw Error(ErrorCode::InsufficientViews,
                "triangulation needs at least 2 observations, got " + std::to_string(observations.size()));
  }
  // Rows are built in normalized image coordinates, which keeps the system
  // well scaled regardless of focal length.
  Eigen::MatrixXd a(2 * observations.size(), 4);
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const CameraView& cam = observations[i].camera.get();
    const Vec2& px = observations[i].pixel;
    const double xn = (px.x() - cam.intrinsics.cx) / cam.intrinsics.fx;
    const double yn = (px.y() - cam.intrinsics.cy) / cam.intrinsics.fy;
    Eigen::Matrix<double, 3, 4> pose;
    pose.leftCols<3>() = cam.rotation;
    pose.col(3) = cam.translation;
    Eigen::RowVector4d r0 = xn * pose.row(2) - pose.row(0);
    Eigen::RowVector4d r1 = yn * pose.row(2) - pose.row(1);
    a.row(2 * i) = r0 / r0.norm();
    a.row(2 * i + 1) = r1 / r1.norm();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  if (!(sv(2) > 1e-10 * sv(0))) {
    throw Error(ErrorCode::DegenerateConfiguration, "triangulation system is rank deficient (coincident rays)");
  }
  const Eigen::Vector4d x = svd.matrixV().col(3);
  if (!(std::abs(x(3)) >= 1e-12 * x.norm())) {
    throw Error(ErrorCode::DegenerateConfiguration, "triangulated point lies at infinity");
  }
  return x.head<3>() / x(3);
}

double reprojection_error(const Vec3& point, std::span<const Observation> observations) {
  if (observations.empty()) throw Error(ErrorCode::EmptyInput, "no observations");
  double sum = 0.0;
  for (const auto& obs : observations) sum += (project(obs.camera.get(), point) - obs.pixel).norm();
  return sum / static_cast<double>(observations.size());
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),  //
      v.z(), 0.0, -v.x(),   //
      -v.y(), v.x(), 0.0;
  return m;
}

Mat3 rodrigues(const Vec3& r) {
  const double theta = r.norm();
  if (theta < 1e-12) return Mat3::Identity() + skew(r);
  return Eigen::AngleAxisd(theta, r / theta).toRotationMatrix();
}

std::array<Mat3, 3> rodrigues_derivatives(const Vec3& r) {
  std::array<Mat3, 3> d;
  const double theta2 = r.squaredNorm();
  if (theta2 < 1e-16) {
    for (int k = 0; k < 3; ++k) d[k] = skew(Vec3::Unit(k));
    return d;
  }
  // Gallego & Yezzi closed form: dR/dr_k = (r_k [r]x + [r x (I - R) e_k]x) R / |r|^2.
  const Mat3 rot = rodrigues(r);
  const Mat3 rx = skew(r);
  for (int k = 0; k < 3; ++k) {
    const Vec3 v = r.cross((Mat3::Identity() - rot) * Vec3::Unit(k));
    d[k] = (r(k) * rx + skew(v)) * rot / theta2;
  }
  return d;
}

CameraView look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Intrinsics& intrinsics,
                   ImageSize size) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);
  CameraView cam;
  cam.intrinsics = intrinsics;
  cam.rotation.row(0) = x.transpose();
  cam.rotation.row(1) = y.transpose();
  cam.rotation.row(2) = z.transpose();
  cam.translation = -cam.rotation * eye;
  cam.image_size = size;
  return cam;
}

}  // namespace focus
