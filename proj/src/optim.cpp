#include "focus/optim.hpp"

#include <algorithm>
#include <cmath>

#include "focus/error.hpp"
#include "focus/io.hpp"
#include "focus/parallel.hpp"
#include "focus/rng.hpp"
#include "focus/sfm.hpp"

namespace focus {

void OptimConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidSpec, what);
  };
  require(samples_per_image >= 1, "samples per image must be at least 1");
  require(stage1_epochs >= 1 && stage2_epochs >= 1, "each stage needs at least one epoch");
  require(learning_rate > 0.0, "learning rate must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must lie in [0, 1)");
  require(epsilon > 0.0, "Adam epsilon must be positive");
  require(variance_floor > 0.0, "variance floor must be positive");
  require(translation_unit_mm > 0.0, "translation unit must be positive");
}

double toc_nll_loss(const Vec3& mu, const Vec3& logvar, const Vec3& gt) {
  double sum = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double r = mu(a) - gt(a);
    sum += r * r / std::exp(logvar(a)) + logvar(a);
  }
  return sum;
}

std::vector<TocSample> collect_samples(const DeformableModel& model, const std::vector<TocImage>& images,
                                       const OptimConfig& config) {
  std::vector<TocSample> out;
  for (std::size_t v = 0; v < images.size(); ++v) {
    const TocImage& img = images[v];
    const auto picks = sample_points(img, config.samples_per_image, derive_seed(config.seed, v));
    for (const PixelSample& p : picks) {
      TocSample s;
      s.view = static_cast<int>(v);
      s.pixel = Vec2(p.u, p.v);
      s.toc = p.toc.cwiseMax(0.0).cwiseMin(1.0);
      s.variance = img.toc_variance(img.index(p.u, p.v)).cwiseMax(config.variance_floor);
      s.template_point = model.toc_to_template(s.toc);
      out.push_back(s);
    }
  }
  return out;
}

Vec2 reproject(const DeformableModel& model, const CameraView& camera, const TocSample& sample,
               const ModelParams& params) {
  return project(camera, model.deform(sample.template_point, params));
}

PixelCovariance propagate_uncertainty(const Mat23& jacobian, const Vec3& sigma2) {
  if (!jacobian.allFinite()) throw Error(ErrorCode::InvalidJacobian, "Jacobian has non-finite entries");
  PixelCovariance out;
  out.covariance = jacobian * sigma2.asDiagonal() * jacobian.transpose();
  out.sigma = out.covariance.diagonal().cwiseSqrt();
  return out;
}

Mat23 toc_to_pixel_jacobian(const DeformableModel& model, const CameraView& camera, const Vec3& template_point,
                            const ModelParams& params) {
  const DeformJacobians j = model.jacobians(template_point, params);
  return projection_jacobian(camera, model.deform(template_point, params)) * j.d_x *
         model.bbox_extent().asDiagonal();
}

namespace {

struct SampleTerm {
  bool used = false;
  double loss = 0.0;
  Eigen::VectorXd grad;
};

// d(Jc)/d(cam) contracted with a camera-frame direction dc.
Mat23 projection_jacobian_derivative(const Intrinsics& k, const Vec3& c, const Vec3& dc) {
  const double iz = 1.0 / c.z();
  const double iz2 = iz * iz;
  const double iz3 = iz2 * iz;
  Mat23 d;
  d << -k.fx * dc.z() * iz2, 0.0, -k.fx * dc.x() * iz2 + 2.0 * k.fx * c.x() * dc.z() * iz3,  //
      0.0, -k.fy * dc.z() * iz2, -k.fy * dc.y() * iz2 + 2.0 * k.fy * c.y() * dc.z() * iz3;
  return d;
}

SampleTerm sample_term(const TocSample& s, const ModelParams& params, const DeformableModel& model,
                       const CameraView& cam, bool use_uncertainty, bool with_gradient) {
  SampleTerm out;
  const int n = model.param_count();
  if (!with_gradient && !use_uncertainty) {
    const Vec3 c = cam.to_camera(model.deform(s.template_point, params));
    if (!(c.z() > 0.0)) return out;
    out.used = true;
    out.loss = (project_camera_point(cam.intrinsics, c) - s.pixel).norm();
    return out;
  }
  const DeformDerivatives d = model.derivatives(s.template_point, params);
  const Vec3 c = cam.to_camera(d.point);
  if (!(c.z() > 0.0)) return out;
  out.used = true;
  const Vec2 r = project_camera_point(cam.intrinsics, c) - s.pixel;
  const Mat23 jc = projection_jacobian_camera(cam.intrinsics, c);
  const Mat23 jf = jc * cam.rotation;
  const Vec3 extent = model.bbox_extent();

  Vec2 sigma = Vec2::Ones();
  Mat23 a;
  if (use_uncertainty) {
    a = jf * d.jac.d_x * extent.asDiagonal();
    sigma = propagate_uncertainty(a, s.variance).sigma;
  }
  const Vec2 e = r.cwiseQuotient(sigma);
  out.loss = e.norm();
  if (!with_gradient) return out;

  out.grad = Eigen::VectorXd::Zero(n);
  if (out.loss == 0.0) return out;
  for (int k = 0; k < n; ++k) {
    const Vec3 dx2 = d.jac.d_params.col(k);
    const Vec2 dr = jf * dx2;
    Vec2 de = dr.cwiseQuotient(sigma);
    if (use_uncertainty) {
      const Mat23 djf = projection_jacobian_derivative(cam.intrinsics, c, cam.rotation * dx2) * cam.rotation;
      const Mat23 da = (djf * d.jac.d_x + jf * d.d_x_d_params[k]) * extent.asDiagonal();
      for (int ax = 0; ax < 2; ++ax) {
        double dvar = 0.0;
        for (int m = 0; m < 3; ++m) dvar += 2.0 * a(ax, m) * s.variance(m) * da(ax, m);
        const double dsigma = dvar / (2.0 * sigma(ax));
        de(ax) -= r(ax) * dsigma / (sigma(ax) * sigma(ax));
      }
    }
    out.grad(k) = e.dot(de) / out.loss;
  }
  return out;
}

}  // namespace

LossEvaluation focus_o_loss(const std::vector<TocSample>& samples, const ModelParams& params,
                            const DeformableModel& model, const std::vector<CameraView>& cameras,
                            bool use_uncertainty, bool with_gradient, unsigned threads) {
  std::vector<SampleTerm> terms(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    terms[i] = sample_term(samples[i], params, model, cameras.at(samples[i].view), use_uncertainty, with_gradient);
  });
  LossEvaluation out;
  for (const auto& t : terms) (t.used ? out.used : out.excluded) += 1;
  if (out.used == 0) {
    throw Error(ErrorCode::EmptyBatch, "no sample projects in front of its camera (" + std::to_string(samples.size()) +
                                           " samples)");
  }
  const double inv = 1.0 / static_cast<double>(out.used);
  out.loss = pairwise_sum(0, terms.size(), 0.0, [&](std::size_t i) { return terms[i].loss; }) * inv;
  if (with_gradient) {
    const int n = model.param_count();
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(n);
    out.gradient = pairwise_sum(0, terms.size(), zero, [&](std::size_t i) -> const Eigen::VectorXd& {
                     return terms[i].used ? terms[i].grad : zero;
                   }) *
                   inv;
  }
  return out;
}

double mean_reprojection_error(const std::vector<TocSample>& samples, const ModelParams& params,
                               const DeformableModel& model, const std::vector<CameraView>& cameras) {
  return focus_o_loss(samples, params, model, cameras, false, false, 1).loss;
}

Vec3 initial_translation(const DeformableModel& model, const std::vector<TocImage>& images,
                         const std::vector<CameraView>& cameras, const OptimConfig& config) {
  const Vec3 fallback = -bounding_box(model.template_mesh().vertices).center();
  if (images.size() < 2) return fallback;
  SfmConfig sfm;
  sfm.samples_per_image = std::max(1, (2 * config.init_tracks + static_cast<int>(images.size()) - 1) /
                                          static_cast<int>(images.size()));
  sfm.seed = derive_seed(config.seed, 0x1417);
  sfm.threads = config.threads;
  std::vector<CorrespondenceTrack> tracks;
  try {
    tracks = match_correspondences(images, sfm);
  } catch (const Error&) {
    return fallback;
  }
  triangulate_tracks(tracks, cameras, config.threads);
  Vec3 observed = Vec3::Zero();
  Vec3 predicted = Vec3::Zero();
  int used = 0;
  for (const auto& t : tracks) {
    if (used == config.init_tracks) break;
    if (!t.point || *t.reprojection_error > sfm.reproj_threshold) continue;
    observed += *t.point;
    predicted += model.toc_to_template(t.query_toc.cwiseMax(0.0).cwiseMin(1.0));
    ++used;
  }
  if (used == 0) return fallback;
  return (observed - predicted) / used;
}

namespace {

class Adam {
 public:
  Adam(int n, const OptimConfig& c) : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)), c_(c) {}

  void step(Eigen::VectorXd& x, const Eigen::VectorXd& g, const std::vector<bool>& active) {
    ++t_;
    const double b1 = 1.0 - std::pow(c_.beta1, t_);
    const double b2 = 1.0 - std::pow(c_.beta2, t_);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (!active[i]) continue;
      m_(i) = c_.beta1 * m_(i) + (1.0 - c_.beta1) * g(i);
      v_(i) = c_.beta2 * v_(i) + (1.0 - c_.beta2) * g(i) * g(i);
      x(i) -= c_.learning_rate * (m_(i) / b1) / (std::sqrt(v_(i) / b2) + c_.epsilon);
    }
  }

 private:
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
  const OptimConfig& c_;
  int t_ = 0;
};

}  // namespace

FitResult fit(const DeformableModel& model, const std::vector<TocImage>& images, const std::vector<CameraView>& cameras,
              const OptimConfig& config) {
  config.validate();
  if (images.empty()) throw Error(ErrorCode::InsufficientViews, "fitting needs at least one view");
  if (images.size() != cameras.size()) throw Error(ErrorCode::InvalidSpec, "image and camera counts differ");

  FitResult result;
  result.under_constrained = images.size() == 1;
  const std::vector<TocSample> samples = collect_samples(model, images, config);
  result.samples = samples.size();

  ModelParams start = model.identity_params();
  if (config.initial) {
    start = *config.initial;
    if (start.shape_dims() != model.shape_dims() || start.pose_dims() != model.pose_dims()) {
      throw Error(ErrorCode::InvalidSpec, "initial parameters do not match the model dimensions");
    }
  } else {
    start.t = initial_translation(model, images, cameras, config);
  }
  start.validate();

  const int n = model.param_count();
  // Optimizer coordinates: physical = scale .* x.
  Eigen::VectorXd scale = Eigen::VectorXd::Ones(n);
  scale.segment<3>(param_index::kTranslation).setConstant(config.translation_unit_mm);
  Eigen::VectorXd x = start.pack().cwiseQuotient(scale);
  auto physical = [&](const Eigen::VectorXd& v) {
    return ModelParams::unpack(v.cwiseProduct(scale), model.shape_dims(), model.pose_dims());
  };

  std::vector<bool> stage1(n, false);
  for (int i = 0; i < param_index::kShape; ++i) stage1[i] = true;
  const std::vector<bool> stage2(n, true);

  int epoch = 0;
  auto run_stage = [&](int epochs, const std::vector<bool>& active) {
    Adam adam(n, config);
    for (int e = 0; e < epochs; ++e, ++epoch) {
      const ModelParams current = physical(x);
      const LossEvaluation ev =
          focus_o_loss(samples, current, model, cameras, config.use_uncertainty, true, config.threads);
      if (!std::isfinite(ev.loss) || !ev.gradient.allFinite()) {
        throw Error(ErrorCode::Divergence, "loss became non-finite at epoch " + std::to_string(epoch));
      }
      result.loss_trace.push_back(ev.loss);
      if (config.on_epoch) config.on_epoch(epoch, ev.loss, current);
      result.excluded_samples += ev.excluded;
      adam.step(x, ev.gradient.cwiseProduct(scale), active);
      if (x(param_index::kScale) <= 0.0) {
        throw Error(ErrorCode::Divergence, "scale became non-positive at epoch " + std::to_string(epoch));
      }
    }
  };
  run_stage(config.stage1_epochs, stage1);
  run_stage(config.stage2_epochs, stage2);

  result.params = physical(x);
  const LossEvaluation last =
      focus_o_loss(samples, result.params, model, cameras, config.use_uncertainty, false, config.threads);
  if (!std::isfinite(last.loss)) {
    throw Error(ErrorCode::Divergence, "loss became non-finite at epoch " + std::to_string(epoch));
  }
  result.loss_trace.push_back(last.loss);
  result.mean_reprojection_error = mean_reprojection_error(samples, result.params, model, cameras);
  result.mesh = model.deformed_mesh(result.params);
  return result;
}

FitResult fit(const Scene& scene, const OptimConfig& config) {
  const DeformableModel model = build_model(scene.manifest.model, scene.directory);
  return fit(model, scene.images, scene.cameras, config);
}

nlohmann::json fit_to_json(const FitResult& r) {
  nlohmann::json j = params_to_json(r.params);
  j["loss_trace"] = r.loss_trace;
  j["samples"] = r.samples;
  j["excluded_samples"] = r.excluded_samples;
  j["mean_reprojection_error_px"] = r.mean_reprojection_error;
  j["under_constrained"] = r.under_constrained;
  return j;
}

}  // namespace focus
