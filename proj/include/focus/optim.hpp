#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "focus/image.hpp"
#include "focus/model.hpp"
#include "focus/scene.hpp"

namespace focus {

struct OptimConfig {
  int samples_per_image = 3000;
  int stage1_epochs = 500;  // r, s, t only
  int stage2_epochs = 500;  // every parameter
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  bool use_uncertainty = true;
  double variance_floor = 1e-8;  // TOC units^2
  /// The optimizer steps translation in units of this many mm (metres by
  /// default), so one learning-rate step moves the model by about 1 mm.
  double translation_unit_mm = 1000.0;
  /// Tracks used by the translation initialization.
  int init_tracks = 100;
  std::uint64_t seed = 42;
  unsigned threads = 0;
  /// Starting point; when unset r = 0, s = 1, z = 0 and t from the
  /// triangulation heuristic.
  std::optional<ModelParams> initial;
  /// Called at every epoch with (epoch, loss, parameters the loss was taken at).
  std::function<void(int, double, const ModelParams&)> on_epoch;

  void validate() const;
};

/// Sum over axes of (mu - gt)^2 / exp(logvar) + logvar.
double toc_nll_loss(const Vec3& mu, const Vec3& logvar, const Vec3& gt);

struct TocSample {
  int view = 0;
  Vec2 pixel = Vec2::Zero();
  Vec3 toc = Vec3::Zero();
  Vec3 variance = Vec3::Ones();  // TOC units^2, floored
  Vec3 template_point = Vec3::Zero();
};

/// P in-mask samples per view, fixed for the whole fit.
std::vector<TocSample> collect_samples(const DeformableModel& model, const std::vector<TocImage>& images,
                                       const OptimConfig& config);

/// project(camera, deform(template_point)). Throws BehindCamera.
Vec2 reproject(const DeformableModel& model, const CameraView& camera, const TocSample& sample,
               const ModelParams& params);

struct PixelCovariance {
  Eigen::Matrix2d covariance;
  Vec2 sigma;
};

/// J diag(sigma2) J^T and the square roots of its diagonal. Throws
/// InvalidJacobian when J is not finite.
PixelCovariance propagate_uncertainty(const Mat23& jacobian, const Vec3& sigma2);

/// d(pixel)/d(toc) through projection, deformation and TOC denormalization.
Mat23 toc_to_pixel_jacobian(const DeformableModel& model, const CameraView& camera, const Vec3& template_point,
                            const ModelParams& params);

struct LossEvaluation {
  double loss = 0.0;
  Eigen::VectorXd gradient;  // flattened ModelParams order; empty unless requested
  std::size_t used = 0;
  std::size_t excluded = 0;  // behind the camera at these params
};

/// Mean over usable samples of ||(p_hat - p) / sigma_p_hat||_2 (sigma = 1 when
/// use_uncertainty is off). Throws EmptyBatch when no sample is usable.
LossEvaluation focus_o_loss(const std::vector<TocSample>& samples, const ModelParams& params,
                            const DeformableModel& model, const std::vector<CameraView>& cameras,
                            bool use_uncertainty, bool with_gradient = false, unsigned threads = 0);

struct FitResult {
  ModelParams params;
  std::vector<double> loss_trace;  // loss before each update, then the final loss
  TriMesh mesh;
  std::size_t samples = 0;
  std::size_t excluded_samples = 0;  // summed over epochs
  double mean_reprojection_error = 0.0;
  bool under_constrained = false;    // a single view
};

/// Translation placing the template's triangulated track points on their
/// triangulated positions, or centring the template at the origin when too
/// few tracks triangulate.
Vec3 initial_translation(const DeformableModel& model, const std::vector<TocImage>& images,
                         const std::vector<CameraView>& cameras, const OptimConfig& config);

/// Two-stage Adam fit: stage 1 moves r, s, t; stage 2 moves everything.
/// Throws Divergence naming the epoch when the loss stops being finite.
FitResult fit(const DeformableModel& model, const std::vector<TocImage>& images, const std::vector<CameraView>& cameras,
              const OptimConfig& config);

FitResult fit(const Scene& scene, const OptimConfig& config);

/// Mean pixel distance between reprojected samples and their pixels.
double mean_reprojection_error(const std::vector<TocSample>& samples, const ModelParams& params,
                               const DeformableModel& model, const std::vector<CameraView>& cameras);

nlohmann::json fit_to_json(const FitResult& result);

}  // namespace focus
