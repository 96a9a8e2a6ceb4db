#include "focus/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "focus/error.hpp"
#include "focus/kdtree.hpp"
#include "focus/parallel.hpp"
#include "focus/rng.hpp"

namespace focus {

TriMesh crop_at_height(const TriMesh& mesh, double z_max) {
  bool any_below = false;
  bool any_above = false;
  for (const auto& v : mesh.vertices) {
    (v.z() <= z_max ? any_below : any_above) = true;
  }
  if (!any_below) throw Error(ErrorCode::EmptyMesh, "mesh lies entirely above the crop height");
  if (!any_above) return mesh;

  TriMesh out;
  const bool normals = mesh.has_normals();
  const bool tocs = mesh.has_tocs();
  std::vector<int> remap(mesh.vertices.size(), -1);
  auto keep_vertex = [&](int i) {
    if (remap[i] < 0) {
      remap[i] = static_cast<int>(out.vertices.size());
      out.vertices.push_back(mesh.vertices[i]);
      if (normals) out.normals.push_back(mesh.normals[i]);
      if (tocs) out.tocs.push_back(mesh.tocs[i]);
    }
    return remap[i];
  };
  std::map<std::pair<int, int>, int> cuts;
  auto cut_vertex = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    const auto it = cuts.find(key);
    if (it != cuts.end()) return it->second;
    const Vec3& pa = mesh.vertices[key.first];
    const Vec3& pb = mesh.vertices[key.second];
    const double t = (z_max - pa.z()) / (pb.z() - pa.z());
    const int idx = static_cast<int>(out.vertices.size());
    Vec3 p = pa + t * (pb - pa);
    p.z() = z_max;
    out.vertices.push_back(p);
    if (normals) out.normals.push_back((mesh.normals[key.first] + t * (mesh.normals[key.second] - mesh.normals[key.first])).normalized());
    if (tocs) out.tocs.push_back(mesh.tocs[key.first] + t * (mesh.tocs[key.second] - mesh.tocs[key.first]));
    cuts.emplace(key, idx);
    return idx;
  };

  for (const Face& f : mesh.faces) {
    std::array<int, 4> poly{};
    int count = 0;
    for (int k = 0; k < 3; ++k) {
      const int a = f[k];
      const int b = f[(k + 1) % 3];
      const bool a_in = mesh.vertices[a].z() <= z_max;
      const bool b_in = mesh.vertices[b].z() <= z_max;
      if (a_in) poly[count++] = keep_vertex(a);
      if (a_in != b_in) poly[count++] = cut_vertex(a, b);
    }
    for (int k = 1; k + 1 < count; ++k) out.faces.push_back({poly[0], poly[k], poly[k + 1]});
  }
  if (out.faces.empty()) throw Error(ErrorCode::EmptyMesh, "no faces remain below the crop height");
  return out;
}

std::vector<SurfaceSample> sample_surface(const TriMesh& mesh, int count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::InvalidSpec, "sample count must be at least 1");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    total += face_area(mesh, static_cast<int>(f));
    cumulative[f] = total;
  }
  if (!(total > 0.0)) throw Error(ErrorCode::DegenerateMesh, "mesh has zero surface area");
  Rng rng(seed);
  std::vector<SurfaceSample> out(count);
  for (int i = 0; i < count; ++i) {
    const double pick = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const int f = static_cast<int>(it - cumulative.begin());
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    const Face& face = mesh.faces[f];
    out[i].point = (1.0 - r1) * mesh.vertices[face[0]] + r1 * (1.0 - r2) * mesh.vertices[face[1]] +
                   r1 * r2 * mesh.vertices[face[2]];
    out[i].normal = face_normal(mesh, f);
  }
  return out;
}

namespace {

double box_squared_distance(const BoundingBox& b, const Vec3& p) {
  const Vec3 d = (b.min - p).cwiseMax(p - b.max).cwiseMax(0.0);
  return d.squaredNorm();
}

void consider(const TriMesh& mesh, int f, const Vec3& p, SurfaceHit& best) {
  const Face& face = mesh.faces[f];
  const ClosestPoint c = closest_point_on_triangle(p, mesh.vertices[face[0]], mesh.vertices[face[1]],
                                                   mesh.vertices[face[2]]);
  if (best.face < 0 || c.squared_distance < best.squared_distance ||
      (c.squared_distance == best.squared_distance && f < best.face)) {
    best = {f, c.point, c.squared_distance};
  }
}

}  // namespace

MeshBvh::MeshBvh(const TriMesh& mesh) : mesh_(&mesh) {
  if (mesh.faces.empty()) throw Error(ErrorCode::EmptyMesh, "cannot build a BVH over a mesh without faces");
  const int n = static_cast<int>(mesh.faces.size());
  faces_.resize(n);
  std::iota(faces_.begin(), faces_.end(), 0);
  face_boxes_.resize(n);
  centroids_.resize(n);
  for (int f = 0; f < n; ++f) {
    BoundingBox b;
    for (int v : mesh.faces[f]) b.extend(mesh.vertices[v]);
    face_boxes_[f] = b;
    centroids_[f] = b.center();
  }
  nodes_.reserve(2 * n / 4 + 2);
  build(0, n);
}

int MeshBvh::build(int begin, int end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({});
  BoundingBox box;
  BoundingBox cbox;
  for (int i = begin; i < end; ++i) {
    box.extend(face_boxes_[faces_[i]].min);
    box.extend(face_boxes_[faces_[i]].max);
    cbox.extend(centroids_[faces_[i]]);
  }
  nodes_[id].box = box;
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= 4) return id;
  int axis = 0;
  cbox.extent().maxCoeff(&axis);
  const int mid = begin + (end - begin) / 2;
  std::nth_element(faces_.begin() + begin, faces_.begin() + mid, faces_.begin() + end, [&](int a, int b) {
    const double ca = centroids_[a](axis);
    const double cb = centroids_[b](axis);
    return ca < cb || (ca == cb && a < b);
  });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void MeshBvh::closest_rec(int node, const Vec3& p, SurfaceHit& best) const {
  const Node& nd = nodes_[node];
  if (nd.left < 0) {
    for (int i = nd.begin; i < nd.end; ++i) consider(*mesh_, faces_[i], p, best);
    return;
  }
  const double dl = box_squared_distance(nodes_[nd.left].box, p);
  const double dr = box_squared_distance(nodes_[nd.right].box, p);
  const int first = dl <= dr ? nd.left : nd.right;
  const int second = dl <= dr ? nd.right : nd.left;
  const double d_first = std::min(dl, dr);
  const double d_second = std::max(dl, dr);
  if (best.face < 0 || d_first <= best.squared_distance) closest_rec(first, p, best);
  if (best.face < 0 || d_second <= best.squared_distance) closest_rec(second, p, best);
}

SurfaceHit MeshBvh::closest(const Vec3& p) const {
  SurfaceHit best;
  closest_rec(0, p, best);
  return best;
}

SurfaceHit closest_point_brute_force(const TriMesh& mesh, const Vec3& p) {
  if (mesh.faces.empty()) throw Error(ErrorCode::EmptyMesh, "mesh has no faces");
  SurfaceHit best;
  for (int f = 0; f < static_cast<int>(mesh.faces.size()); ++f) consider(mesh, f, p, best);
  return best;
}

double angle_degrees(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b)) * 180.0 / std::numbers::pi;
}

Statistics summarize(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "no values to summarize");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  Statistics s;
  s.mean = pairwise_sum(0, n, 0.0, [&](std::size_t i) { return values[i]; }) / n;
  s.rmse = std::sqrt(pairwise_sum(0, n, 0.0, [&](std::size_t i) { return values[i] * values[i]; }) / n);
  s.median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  s.max = values.back();
  return s;
}

DirectionalErrors nn_errors(const std::vector<SurfaceSample>& samples, const MeshBvh& surface, unsigned threads) {
  if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no samples to evaluate");
  DirectionalErrors out;
  out.distance.resize(samples.size());
  out.angle.resize(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const SurfaceHit hit = surface.closest(samples[i].point);
    out.distance[i] = std::sqrt(hit.squared_distance);
    out.angle[i] = angle_degrees(samples[i].normal, face_normal(surface.mesh(), hit.face));
  });
  return out;
}

MetricReport nn_metrics(const std::vector<SurfaceSample>& a, const TriMesh& b, bool bidirectional,
                        const std::vector<SurfaceSample>& b_samples, const TriMesh* a_mesh, unsigned threads) {
  if (a.empty() || b.faces.empty()) throw Error(ErrorCode::EmptyInput, "metric inputs must be non-empty");
  const MeshBvh b_bvh(b);
  const DirectionalErrors fwd = nn_errors(a, b_bvh, threads);
  MetricReport r;
  r.forward_chamfer = summarize(fwd.distance);
  r.forward_normal = summarize(fwd.angle);
  if (!bidirectional) {
    r.chamfer = *r.forward_chamfer;
    r.normal = *r.forward_normal;
    r.samples = a.size();
    return r;
  }
  if (b_samples.empty() || a_mesh == nullptr || a_mesh->faces.empty()) {
    throw Error(ErrorCode::EmptyInput, "bidirectional metrics need samples of the reference and the prediction mesh");
  }
  const MeshBvh a_bvh(*a_mesh);
  const DirectionalErrors bwd = nn_errors(b_samples, a_bvh, threads);
  r.backward_chamfer = summarize(bwd.distance);
  r.backward_normal = summarize(bwd.angle);
  std::vector<double> dist = fwd.distance;
  dist.insert(dist.end(), bwd.distance.begin(), bwd.distance.end());
  std::vector<double> ang = fwd.angle;
  ang.insert(ang.end(), bwd.angle.begin(), bwd.angle.end());
  r.chamfer = summarize(std::move(dist));
  r.normal = summarize(std::move(ang));
  r.samples = a.size() + b_samples.size();
  return r;
}

MetricReport mesh_to_mesh(const TriMesh& prediction, const TriMesh& reference, const EvalOptions& options) {
  const TriMesh pred = options.crop_z_mm ? crop_at_height(prediction, *options.crop_z_mm) : prediction;
  const TriMesh ref = options.crop_z_mm ? crop_at_height(reference, *options.crop_z_mm) : reference;
  const auto pred_samples = sample_surface(pred, options.samples, options.seed);
  const auto ref_samples = sample_surface(ref, options.samples, options.seed);
  return nn_metrics(pred_samples, ref, true, ref_samples, &pred, options.threads);
}

MetricReport cloud_to_mesh(const OrientedPointCloud& cloud, const TriMesh& reference, const EvalOptions& options) {
  std::vector<SurfaceSample> points;
  for (const auto& p : cloud) {
    if (options.crop_z_mm && p.position.z() > *options.crop_z_mm) continue;
    points.push_back({p.position, p.normal});
  }
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "point cloud is empty after cropping");
  const TriMesh ref = options.crop_z_mm ? crop_at_height(reference, *options.crop_z_mm) : reference;
  MetricReport r = nn_metrics(points, ref, false, {}, nullptr, options.threads);

  std::vector<Vec3> positions;
  positions.reserve(points.size());
  for (const auto& p : points) positions.push_back(p.point);
  const KdTree tree(std::move(positions));
  const auto ref_samples = sample_surface(ref, options.samples, options.seed);
  std::vector<double> back(ref_samples.size());
  parallel_for(ref_samples.size(), options.threads,
               [&](std::size_t i) { back[i] = std::sqrt(tree.nearest(ref_samples[i].point).squared_distance); });
  const double radius = options.coverage_radius_mm;
  const auto covered = std::count_if(back.begin(), back.end(), [&](double d) { return d <= radius; });
  r.coverage = static_cast<double>(covered) / static_cast<double>(back.size());
  r.backward_chamfer = summarize(std::move(back));
  return r;
}

namespace {

nlohmann::json stats_json(const Statistics& s) {
  return {{"mean", s.mean}, {"median", s.median}, {"rmse", s.rmse}, {"max", s.max}};
}

}  // namespace

nlohmann::json report_to_json(const MetricReport& r) {
  nlohmann::json j;
  j["chamfer_mm"] = stats_json(r.chamfer);
  j["normal_deg"] = stats_json(r.normal);
  j["samples"] = r.samples;
  j["bidirectional"] = r.backward_normal.has_value();
  if (r.forward_chamfer) j["forward"]["chamfer_mm"] = stats_json(*r.forward_chamfer);
  if (r.forward_normal) j["forward"]["normal_deg"] = stats_json(*r.forward_normal);
  if (r.backward_chamfer) j["backward"]["chamfer_mm"] = stats_json(*r.backward_chamfer);
  if (r.backward_normal) j["backward"]["normal_deg"] = stats_json(*r.backward_normal);
  if (r.coverage) j["coverage"] = *r.coverage;
  return j;
}

const char* to_string(BenchMethod method) { return method == BenchMethod::Sfm ? "sfm" : "optim"; }

std::vector<BenchRow> bench_views(const Scene& scene, BenchMethod method, const std::vector<int>& counts,
                                  const SfmConfig& sfm, const OptimConfig& optim, const EvalOptions& eval) {
  if (!scene.ground_truth_mesh) throw Error(ErrorCode::InvalidRequest, "scene has no ground-truth mesh");
  const int available = static_cast<int>(scene.cameras.size());
  for (int k : counts) {
    if (k < 1 || k > available) {
      throw Error(ErrorCode::InvalidRequest,
                  "view count " + std::to_string(k) + " exceeds the " + std::to_string(available) + " available views");
    }
  }
  const Vec3 center = bounding_box(scene.ground_truth_mesh->vertices).center();
  std::vector<BenchRow> rows;
  for (int k : counts) {
    const Scene sub = subset_views(scene, select_views_by_azimuth(scene.cameras, k, center));
    BenchRow row;
    row.views = k;
    row.method = method;
    try {
      if (method == BenchMethod::Sfm) {
        const SfmResult res = reconstruct_sfm(sub, sfm);
        row.report = cloud_to_mesh(res.cloud, *scene.ground_truth_mesh, eval);
      } else {
        const FitResult res = fit(sub, optim);
        row.report = mesh_to_mesh(res.mesh, *scene.ground_truth_mesh, eval);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyCloud && e.code() != ErrorCode::InsufficientViews &&
          e.code() != ErrorCode::EmptyInput) {
        throw;
      }
      row.failure = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os.precision(9);
  os << "views,method,status,chamfer_mean_mm,chamfer_median_mm,chamfer_rmse_mm,normal_mean_deg,normal_median_deg,"
        "normal_rmse_deg,samples,coverage\n";
  for (const auto& r : rows) {
    os << r.views << ',' << to_string(r.method) << ',';
    if (!r.report) {
      os << "failed,,,,,,,,\n";
      continue;
    }
    const MetricReport& m = *r.report;
    os << "ok," << m.chamfer.mean << ',' << m.chamfer.median << ',' << m.chamfer.rmse << ',' << m.normal.mean << ','
       << m.normal.median << ',' << m.normal.rmse << ',' << m.samples << ',';
    if (m.coverage) os << *m.coverage;
    os << '\n';
  }
  return os.str();
}

}  // namespace focus
