#pragma once

#include <array>
#include <functional>
#include <span>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace focus {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  static Intrinsics single_focal(double f, double cx, double cy) { return {f, f, cx, cy}; }
};

struct ImageSize {
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

/// Calibrated pinhole camera. The pose maps world to camera coordinates,
/// x_cam = rotation * x_world + translation, with +Z looking into the scene.
/// Pixel centers sit at integer coordinates.
struct CameraView {
  Intrinsics intrinsics;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  ImageSize image_size;

  Vec3 to_camera(const Vec3& world) const { return rotation * world + translation; }
  Vec3 center() const { return -rotation.transpose() * translation; }

  /// Throws InvalidSpec when the rotation is not a proper rotation within
  /// 1e-9, a focal length is non-positive, or the image size is empty.
  void validate() const;
};

/// Pixel of a world point. Throws BehindCamera for non-positive depth.
Vec2 project(const CameraView& camera, const Vec3& world);

/// Pixel of a point already expressed in the camera frame.
Vec2 project_camera_point(const Intrinsics& intrinsics, const Vec3& cam);

/// d(pixel)/d(camera-frame point).
Mat23 projection_jacobian_camera(const Intrinsics& intrinsics, const Vec3& cam);

/// d(pixel)/d(world point).
Mat23 projection_jacobian(const CameraView& camera, const Vec3& world);

struct Observation {
  std::reference_wrapper<const CameraView> camera;
  Vec2 pixel;
};

/// Joint linear triangulation over every observation: the right singular
/// vector of the stacked 2n x 4 system for the smallest singular value,
/// dehomogenized. Throws InsufficientViews for fewer than two observations
/// and DegenerateConfiguration when the system is rank deficient.
Vec3 triangulate_dlt(std::span<const Observation> observations);

/// Mean pixel distance between the projection of `point` and each observation.
double reprojection_error(const Vec3& point, std::span<const Observation> observations);

Mat3 skew(const Vec3& v);

/// Rotation matrix of an axis-angle vector.
Mat3 rodrigues(const Vec3& axis_angle);

/// dR/dr_k for the Rodrigues map, k = 0..2.
std::array<Mat3, 3> rodrigues_derivatives(const Vec3& axis_angle);

/// Camera at `eye` looking at `target`; `up` fixes the roll (image -Y).
CameraView look_at(const Vec3& eye, const Vec3& target, const Vec3& up, const Intrinsics& intrinsics,
                   ImageSize size);

}  // namespace focus
