#include "focus/sfm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "focus/error.hpp"
#include "focus/io.hpp"
#include "focus/parallel.hpp"
#include "focus/rng.hpp"

namespace focus {

void SfmConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw Error(ErrorCode::InvalidSpec, what);
  };
  require(samples_per_image >= 1, "samples per image must be at least 1");
  require(match_threshold > 0.0, "match threshold must be positive");
  require(subpixel_factor >= 1, "subpixel factor must be at least 1");
  require(reproj_threshold > 0.0, "reprojection threshold must be positive");
  require(sor.k >= 1, "outlier-removal k must be at least 1");
  require(sor.std_ratio > 0.0, "outlier-removal std ratio must be positive");
  require(pca_neighbors >= 3, "PCA normals need at least 3 neighbours");
}

nlohmann::json poisson_sidecar_json(const PoissonConfig& c) {
  return {{"method", "screened_poisson"},
          {"depth", c.depth},
          {"iterations", c.iterations},
          {"crop_padding_mm", c.crop_padding_mm},
          {"height_interval_mm", {c.height_min_mm, c.height_max_mm}}};
}

std::vector<PixelSample> sample_points(const TocImage& image, int count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::InvalidSpec, "sample count must be at least 1");
  std::vector<int> pixels;
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    if (image.in_mask(i)) pixels.push_back(static_cast<int>(i));
  }
  if (pixels.empty()) throw Error(ErrorCode::EmptyMask, "view has no in-mask pixels to sample");
  Rng rng(seed);
  std::vector<int> chosen(count);
  const std::size_t n = pixels.size();
  if (n >= static_cast<std::size_t>(count)) {
    for (int k = 0; k < count; ++k) {
      const std::size_t j = k + rng.index(n - k);
      std::swap(pixels[k], pixels[j]);
      chosen[k] = pixels[k];
    }
  } else {
    for (int k = 0; k < count; ++k) chosen[k] = pixels[rng.index(n)];
  }
  std::vector<PixelSample> out(count);
  for (int k = 0; k < count; ++k) {
    const auto i = static_cast<std::size_t>(chosen[k]);
    out[k] = {static_cast<int>(i % image.width), static_cast<int>(i / image.width), image.toc(i), image.normal_at(i)};
  }
  return out;
}

TocIndex::TocIndex(const TocImage& image) : image_(&image) {
  std::vector<Vec3> values;
  for (std::size_t i = 0; i < image.pixel_count(); ++i) {
    if (!image.in_mask(i)) continue;
    pixels_.push_back(static_cast<int>(i));
    values.push_back(image.toc(i));
  }
  if (pixels_.empty()) throw Error(ErrorCode::EmptyMask, "cannot index a view with an empty mask");
  tree_ = KdTree(std::move(values));
}

TocMatch TocIndex::nearest(const Vec3& toc) const {
  const Neighbor nb = tree_.nearest(toc);
  const auto i = static_cast<std::size_t>(pixels_[nb.index]);
  return {static_cast<int>(i % image_->width), static_cast<int>(i / image_->width), tree_.point(nb.index),
          std::sqrt(nb.squared_distance)};
}

Vec3 bilinear_toc(const TocImage& image, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  Vec3 acc = Vec3::Zero();
  const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  const int du[4] = {0, 1, 0, 1};
  const int dv[4] = {0, 0, 1, 1};
  for (int k = 0; k < 4; ++k) {
    if (wts[k] == 0.0) continue;
    acc += wts[k] * image.toc(image.index(x0 + du[k], y0 + dv[k]));
  }
  return acc;
}

std::optional<SubpixelMatch> refine_subpixel(const TocImage& image, const Vec3& query, int u, int v, double threshold,
                                             int factor) {
  bool patch_in_mask = true;
  for (int dv = -1; dv <= 1 && patch_in_mask; ++dv) {
    for (int du = -1; du <= 1; ++du) {
      if (!image.in_mask(u + du, v + dv)) {
        patch_in_mask = false;
        break;
      }
    }
  }
  if (!patch_in_mask || factor <= 1) {
    const Vec3 toc = image.toc(image.index(u, v));
    const double d = (toc - query).norm();
    if (d > threshold) return std::nullopt;
    return SubpixelMatch{Vec2(u, v), toc, d};
  }

  // patch[r][c] holds the TOC at (u + c - 1, v + r - 1).
  double patch[3][3][3];
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      const Vec3 t = image.toc(image.index(u + c - 1, v + r - 1));
      for (int a = 0; a < 3; ++a) patch[r][c][a] = t(a);
      lo = lo.cwiseMin(t);
      hi = hi.cwiseMax(t);
    }
  }
  // Interpolated values stay inside the bounding box of the patch, so a query
  // farther than the threshold from that box cannot match.
  const Vec3 gap = (lo - query).cwiseMax(query - hi).cwiseMax(0.0);
  if (gap.norm() > threshold) return std::nullopt;

  const double q[3] = {query.x(), query.y(), query.z()};
  const double step = 1.0 / factor;
  double best_d2 = std::numeric_limits<double>::infinity();
  int best_r2 = 0;
  int best_i = 0;
  int best_j = 0;
  for (int j = -factor; j <= factor; ++j) {
    // Row offset dv = j / factor; rows r0, r0 + 1 of the patch, weight fy.
    const double y = 1.0 + j * step;
    const int r0 = std::min(static_cast<int>(std::floor(y)), 1);
    const double fy = y - r0;
    for (int i = -factor; i <= factor; ++i) {
      const double x = 1.0 + i * step;
      const int c0 = std::min(static_cast<int>(std::floor(x)), 1);
      const double fx = x - c0;
      const double w00 = (1 - fx) * (1 - fy), w01 = fx * (1 - fy), w10 = (1 - fx) * fy, w11 = fx * fy;
      double d2 = 0.0;
      for (int a = 0; a < 3; ++a) {
        const double val = w00 * patch[r0][c0][a] + w01 * patch[r0][c0 + 1][a] + w10 * patch[r0 + 1][c0][a] +
                           w11 * patch[r0 + 1][c0 + 1][a];
        const double diff = val - q[a];
        d2 += diff * diff;
      }
      const int r2 = i * i + j * j;
      if (d2 < best_d2 || (d2 == best_d2 && r2 < best_r2)) {
        best_d2 = d2;
        best_r2 = r2;
        best_i = i;
        best_j = j;
      }
    }
  }
  const double d = std::sqrt(best_d2);
  if (d > threshold) return std::nullopt;
  const Vec2 pos(u + best_i * step, v + best_j * step);
  return SubpixelMatch{pos, bilinear_toc(image, pos.x(), pos.y()), d};
}

std::vector<CorrespondenceTrack> match_correspondences(const std::vector<TocImage>& images, const SfmConfig& config) {
  config.validate();
  const std::size_t n = images.size();
  if (n < 2) throw Error(ErrorCode::InsufficientViews, "matching needs at least 2 views, got " + std::to_string(n));

  std::vector<std::optional<TocIndex>> indices(n);
  std::vector<std::vector<PixelSample>> samples(n);
  parallel_for(n, config.threads, [&](std::size_t i) {
    indices[i].emplace(images[i]);
    samples[i] = sample_points(images[i], config.samples_per_image, derive_seed(config.seed, i));
  });

  const std::size_t per_view = static_cast<std::size_t>(config.samples_per_image);
  std::vector<CorrespondenceTrack> slots(n * per_view);
  parallel_for(slots.size(), config.threads, [&](std::size_t slot) {
    const std::size_t src = slot / per_view;
    const std::size_t s = slot % per_view;
    const PixelSample& sample = samples[src][s];
    CorrespondenceTrack track;
    track.query_toc = sample.toc;
    track.source_view = static_cast<int>(src);
    track.sample_index = static_cast<int>(s);
    for (std::size_t j = 0; j < n; ++j) {
      const TocMatch hit = indices[j]->nearest(sample.toc);
      const int factor = config.subpixel ? config.subpixel_factor : 1;
      const auto refined = refine_subpixel(images[j], sample.toc, hit.u, hit.v, config.match_threshold, factor);
      if (!refined) continue;
      const int pu = static_cast<int>(std::lround(refined->position.x()));
      const int pv = static_cast<int>(std::lround(refined->position.y()));
      track.observations.push_back(
          {static_cast<int>(j), refined->position, refined->toc, images[j].normal_at(images[j].index(pu, pv))});
    }
    slots[slot] = std::move(track);
  });

  std::vector<CorrespondenceTrack> tracks;
  for (auto& t : slots) {
    if (t.observations.size() >= 2) tracks.push_back(std::move(t));
  }
  return tracks;
}

void triangulate_tracks(std::vector<CorrespondenceTrack>& tracks, const std::vector<CameraView>& cameras,
                        unsigned threads) {
  parallel_for(tracks.size(), threads, [&](std::size_t i) {
    CorrespondenceTrack& t = tracks[i];
    t.point.reset();
    t.reprojection_error.reset();
    std::vector<Observation> obs;
    obs.reserve(t.observations.size());
    for (const auto& o : t.observations) obs.push_back({cameras.at(o.view), o.pixel});
    try {
      const Vec3 p = triangulate_dlt(obs);
      const double err = reprojection_error(p, obs);
      t.point = p;
      t.reprojection_error = err;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateConfiguration && e.code() != ErrorCode::BehindCamera &&
          e.code() != ErrorCode::InsufficientViews) {
        throw;
      }
    }
  });
}

std::vector<bool> statistical_outlier_mask(const std::vector<Vec3>& points, const SorConfig& config) {
  const std::size_t n = points.size();
  std::vector<bool> keep(n, true);
  if (n < 3) return keep;
  const int k = std::min<int>(config.k, static_cast<int>(n) - 1);
  const KdTree tree(points);
  std::vector<double> stat(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto nbs = tree.k_nearest(points[i], k + 1);
    double sum = 0.0;
    int used = 0;
    for (const Neighbor& nb : nbs) {
      if (nb.index == static_cast<int>(i) || used == k) continue;
      sum += std::sqrt(nb.squared_distance);
      ++used;
    }
    stat[i] = sum / used;
  }
  const double mean = pairwise_sum(0, n, 0.0, [&](std::size_t i) { return stat[i]; }) / n;
  const double var =
      pairwise_sum(0, n, 0.0, [&](std::size_t i) { return (stat[i] - mean) * (stat[i] - mean); }) / (n - 1);
  const double limit = mean + config.std_ratio * std::sqrt(var);
  for (std::size_t i = 0; i < n; ++i) keep[i] = stat[i] <= limit;
  return keep;
}

std::vector<CorrespondenceTrack> filter_points(const std::vector<CorrespondenceTrack>& tracks, const SfmConfig& config,
                                               FilterStats* stats) {
  FilterStats st;
  st.input = tracks.size();
  std::vector<const CorrespondenceTrack*> stage;
  for (const auto& t : tracks) {
    if (t.point) stage.push_back(&t);
  }
  st.triangulated = stage.size();
  std::erase_if(stage, [&](const CorrespondenceTrack* t) { return *t->reprojection_error > config.reproj_threshold; });
  st.after_reprojection = stage.size();
  std::erase_if(stage, [&](const CorrespondenceTrack* t) { return t->point->z() < config.floor_z; });
  st.after_floor = stage.size();

  std::vector<Vec3> pts;
  pts.reserve(stage.size());
  for (const auto* t : stage) pts.push_back(*t->point);
  const std::vector<bool> keep = statistical_outlier_mask(pts, config.sor);
  std::vector<CorrespondenceTrack> out;
  for (std::size_t i = 0; i < stage.size(); ++i) {
    if (keep[i]) out.push_back(*stage[i]);
  }
  st.after_sor = out.size();
  if (stats) *stats = st;
  if (out.empty()) {
    throw Error(ErrorCode::EmptyCloud, "no points survived filtering (" + std::to_string(st.input) + " tracks, " +
                                           std::to_string(st.triangulated) + " triangulated, " +
                                           std::to_string(st.after_reprojection) + " after reprojection, " +
                                           std::to_string(st.after_floor) + " above the floor)");
  }
  return out;
}

Vec3 aggregate_normals(std::span<const Vec3> normals) {
  if (normals.empty()) throw Error(ErrorCode::EmptyInput, "no normals to aggregate");
  double theta = 0.0;
  double sin_phi = 0.0;
  double cos_phi = 0.0;
  for (const Vec3& n : normals) {
    const Vec3 u = n.normalized();
    theta += std::acos(std::clamp(u.z(), -1.0, 1.0));
    const double phi = std::atan2(u.y(), u.x());
    sin_phi += std::sin(phi);
    cos_phi += std::cos(phi);
  }
  theta /= static_cast<double>(normals.size());
  const double phi = std::atan2(sin_phi, cos_phi);
  return Vec3(std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), std::cos(theta)).normalized();
}

std::vector<Vec3> pca_normals(const std::vector<Vec3>& points, int neighbors) {
  std::vector<Vec3> normals(points.size(), Vec3::UnitZ());
  if (points.size() < 3) return normals;
  const KdTree tree(points);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto nbs = tree.k_nearest(points[i], neighbors);
    Vec3 mean = Vec3::Zero();
    for (const auto& nb : nbs) mean += points[nb.index];
    mean /= static_cast<double>(nbs.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& nb : nbs) {
      const Vec3 d = points[nb.index] - mean;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Vec3 n = eig.eigenvectors().col(0).normalized();
    int axis = 0;
    n.cwiseAbs().maxCoeff(&axis);
    if (n(axis) < 0) n = -n;
    normals[i] = n;
  }
  return normals;
}

SfmResult reconstruct_sfm(const std::vector<TocImage>& images, const std::vector<CameraView>& cameras,
                          const SfmConfig& config) {
  if (images.size() != cameras.size()) throw Error(ErrorCode::InvalidSpec, "image and camera counts differ");
  SfmResult result;
  result.samples = images.size() * static_cast<std::size_t>(config.samples_per_image);
  std::vector<CorrespondenceTrack> tracks = match_correspondences(images, config);
  result.tracks = tracks.size();
  triangulate_tracks(tracks, cameras, config.threads);
  const std::vector<CorrespondenceTrack> kept = filter_points(tracks, config, &result.filter);

  result.cloud.resize(kept.size());
  parallel_for(kept.size(), config.threads, [&](std::size_t i) {
    const CorrespondenceTrack& t = kept[i];
    OrientedPoint& p = result.cloud[i];
    p.position = *t.point;
    p.provenance = {t.query_toc, static_cast<int>(t.observations.size()), *t.reprojection_error};
    if (config.normal_aggregation) {
      std::vector<Vec3> world;
      world.reserve(t.observations.size());
      for (const auto& o : t.observations) world.push_back(cameras[o.view].rotation.transpose() * o.normal);
      p.normal = aggregate_normals(world);
    }
  });
  if (!config.normal_aggregation) {
    std::vector<Vec3> pts;
    pts.reserve(result.cloud.size());
    for (const auto& p : result.cloud) pts.push_back(p.position);
    const std::vector<Vec3> normals = pca_normals(pts, config.pca_neighbors);
    for (std::size_t i = 0; i < normals.size(); ++i) result.cloud[i].normal = normals[i];
  }
  return result;
}

SfmResult reconstruct_sfm(const Scene& scene, const SfmConfig& config) {
  return reconstruct_sfm(scene.images, scene.cameras, config);
}

std::filesystem::path poisson_sidecar_path(const std::filesystem::path& cloud_ply) {
  std::filesystem::path p = cloud_ply;
  p.replace_extension(".poisson.json");
  return p;
}

SfmResult run_sfm(const std::filesystem::path& scene_dir, const std::filesystem::path& out_ply,
                  const SfmConfig& config, const PoissonConfig& poisson) {
  const Scene scene = load_scene(scene_dir);
  SfmResult result = reconstruct_sfm(scene, config);
  write_ply(out_ply, result.cloud);
  write_text_file(poisson_sidecar_path(out_ply), poisson_sidecar_json(poisson).dump(2) + "\n");
  return result;
}

}  // namespace focus
