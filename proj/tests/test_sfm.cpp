#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "doctest.h"
#include "focus/error.hpp"
#include "focus/eval.hpp"
#include "focus/io.hpp"
#include "focus/sfm.hpp"
#include "focus/synth.hpp"
#include "test_support.hpp"

using namespace focus;

namespace {

TocImage ramp_image(int width, int height, double slope_u, double slope_v) {
  TocImage img = TocImage::blank(width, height);
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const std::size_t i = img.index(u, v);
      img.mask[i] = 1.0f;
      img.depth[i] = 500.0f;
      TocImage::write3(img.toc_mean, i, Vec3(0.1 + slope_u * u, 0.2 + slope_v * v, 0.5));
      TocImage::write3(img.normal, i, Vec3(0, 0, -1));
    }
  }
  return img;
}

const GeneratedScene& clean_scene() {
  static const GeneratedScene scene = render_scene(default_scene_spec(10, 42));
  return scene;
}

const std::vector<CameraView>& clean_cameras() {
  static const std::vector<CameraView> cams = default_scene_spec(10, 42).cameras;
  return cams;
}

const std::vector<CorrespondenceTrack>& clean_tracks() {
  static const std::vector<CorrespondenceTrack> tracks = [] {
    auto t = match_correspondences(clean_scene().images, SfmConfig{});
    triangulate_tracks(t, clean_cameras());
    return t;
  }();
  return tracks;
}

CorrespondenceTrack track_at(const Vec3& p, double reprojection) {
  CorrespondenceTrack t;
  t.point = p;
  t.reprojection_error = reprojection;
  t.observations.resize(2);
  return t;
}

Vec3 spherical(double theta_deg, double phi_deg) {
  const double t = theta_deg * std::numbers::pi / 180.0;
  const double p = phi_deg * std::numbers::pi / 180.0;
  return {std::sin(t) * std::cos(p), std::sin(t) * std::sin(p), std::cos(t)};
}

// Mean distance to the k nearest other points, by exhaustive search.
std::vector<double> mean_knn_distance(const std::vector<Vec3>& pts, int k) {
  std::vector<double> out;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < pts.size(); ++j) {
      if (j != i) d.push_back((pts[i] - pts[j]).norm());
    }
    std::sort(d.begin(), d.end());
    double s = 0.0;
    for (int m = 0; m < k; ++m) s += d[m];
    out.push_back(s / k);
  }
  return out;
}

}  // namespace

TEST_SUITE("sfm") {
  TEST_CASE("sampling a full mask gives distinct pixels") {
    const TocImage img = ramp_image(100, 100, 0.001, 0.001);
    const auto s = sample_points(img, 3000, 1);
    REQUIRE(s.size() == 3000);
    std::set<std::pair<int, int>> seen;
    for (const auto& p : s) {
      seen.insert({p.u, p.v});
      CHECK(p.toc == img.toc(img.index(p.u, p.v)));
    }
    CHECK(seen.size() == 3000);
  }

  TEST_CASE("sampling a five-pixel mask") {
    TocImage img = TocImage::blank(10, 10);
    const std::set<std::pair<int, int>> mask{{1, 1}, {2, 5}, {9, 9}, {0, 7}, {4, 4}};
    for (const auto& [u, v] : mask) img.mask[img.index(u, v)] = 1.0f;
    const auto five = sample_points(img, 5, 3);
    std::set<std::pair<int, int>> got;
    for (const auto& p : five) got.insert({p.u, p.v});
    CHECK(got == mask);
    const auto eight = sample_points(img, 8, 3);
    CHECK(eight.size() == 8);
    for (const auto& p : eight) CHECK(mask.count({p.u, p.v}) == 1);
  }

  TEST_CASE("sampling is seeded") {
    const TocImage img = ramp_image(60, 40, 0.01, 0.01);
    const auto a = sample_points(img, 500, 9);
    const auto b = sample_points(img, 500, 9);
    const auto c = sample_points(img, 500, 10);
    bool same = true, differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      same = same && a[i].u == b[i].u && a[i].v == b[i].v;
      differs = differs || a[i].u != c[i].u || a[i].v != c[i].v;
    }
    CHECK(same);
    CHECK(differs);
  }

  TEST_CASE("empty mask is an error") {
    const TocImage img = TocImage::blank(8, 8);
    auto code = [&](auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        return e.code();
      }
      return ErrorCode::Io;
    };
    CHECK(code([&] { sample_points(img, 10, 1); }) == ErrorCode::EmptyMask);
    CHECK(code([&] { TocIndex index(img); }) == ErrorCode::EmptyMask);
  }

  TEST_CASE("TOC index agrees with a linear scan") {
    Rng rng(17);
    TocImage img = TocImage::blank(50, 50);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      if (rng.uniform() < 0.5) continue;
      img.mask[i] = 1.0f;
      TocImage::write3(img.toc_mean, i, Vec3(rng.uniform(), rng.uniform(), rng.uniform()));
    }
    const TocIndex index(img);
    for (int q = 0; q < 1000; ++q) {
      const Vec3 query(rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2), rng.uniform(-0.2, 1.2));
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_i = 0;
      for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        if (!img.in_mask(i)) continue;
        const double d = (img.toc(i) - query).norm();
        if (d < best) {
          best = d;
          best_i = i;
        }
      }
      const TocMatch m = index.nearest(query);
      CHECK(img.index(m.u, m.v) == best_i);
      CHECK(m.distance == doctest::Approx(best).epsilon(1e-12));
    }
    const TocMatch self = index.nearest(img.toc(img.index(10, 10)).eval());
    if (img.in_mask(10, 10)) CHECK(self.distance == 0.0);
  }

  TEST_CASE("far query still returns its nearest neighbour") {
    const TocImage img = ramp_image(20, 20, 0.01, 0.01);
    const TocMatch m = TocIndex(img).nearest(Vec3(5, 5, 5));
    CHECK(m.u == 19);
    CHECK(m.v == 19);
    CHECK(m.distance > 1.0);
  }

  TEST_CASE("subpixel refinement on a linear ramp") {
    const TocImage img = ramp_image(40, 40, 0.01, 0.004);
    for (double offset : {0.375, 0.3, -0.8, 0.05}) {
      const Vec3 query(0.1 + 0.01 * (20 + offset), 0.2 + 0.004 * 20, 0.5);
      const auto m = refine_subpixel(img, query, 20, 20, 0.002);
      REQUIRE(m.has_value());
      CHECK(std::abs(m->position.x() - (20 + offset)) <= 1.0 / 16.0);
      CHECK(std::abs(m->position.y() - 20) <= 1.0 / 16.0);
    }
    const auto exact = refine_subpixel(img, Vec3(0.1 + 0.01 * 20.375, 0.28, 0.5), 20, 20, 0.002);
    CHECK(exact->position.x() == doctest::Approx(20.375).epsilon(1e-12));
  }

  TEST_CASE("constant patch refines to the pixel itself") {
    TocImage img = ramp_image(9, 9, 0.0, 0.0);
    const auto m = refine_subpixel(img, img.toc(img.index(4, 4)), 4, 4, 0.002);
    REQUIRE(m.has_value());
    CHECK(m->position == Vec2(4, 4));
    CHECK(m->distance == 0.0);
  }

  TEST_CASE("query far from the patch is rejected") {
    TocImage img = ramp_image(9, 9, 0.0, 0.0);
    const Vec3 query = img.toc(img.index(4, 4)) + Vec3(0.006, 0.008, 0.0);
    CHECK_FALSE(refine_subpixel(img, query, 4, 4, 0.002).has_value());
    CHECK(refine_subpixel(img, query, 4, 4, 0.0101).has_value());
  }

  TEST_CASE("patch leaving the mask falls back to the integer pixel") {
    TocImage img = ramp_image(9, 9, 0.01, 0.01);
    img.mask[img.index(5, 4)] = 0.0f;
    const Vec3 query = img.toc(img.index(4, 4)) + Vec3(0.004, 0, 0);
    const auto m = refine_subpixel(img, query, 4, 4, 0.01);
    REQUIRE(m.has_value());
    CHECK(m->position == Vec2(4, 4));
    CHECK(m->distance == doctest::Approx(0.004));
  }

  TEST_CASE("refinement never does worse than the integer match") {
    const TocImage noisy = emulate_prediction(clean_scene().images[0], NoiseSpec{0.005, 0.005}, 2);
    const TocImage other = emulate_prediction(clean_scene().images[1], NoiseSpec{0.005, 0.005}, 3);
    const TocIndex index(other);
    for (const auto& s : sample_points(noisy, 500, 4)) {
      const TocMatch m = index.nearest(s.toc);
      const auto r = refine_subpixel(other, s.toc, m.u, m.v, std::numeric_limits<double>::infinity());
      REQUIRE(r.has_value());
      CHECK(r->distance <= m.distance + 1e-7);
    }
  }

  TEST_CASE("bilinear TOC at integer positions is the pixel value") {
    const TocImage img = ramp_image(10, 10, 0.03, 0.02);
    CHECK((bilinear_toc(img, 3, 7) - img.toc(img.index(3, 7))).norm() == 0.0);
    const Vec3 mid = bilinear_toc(img, 3.5, 7.25);
    CHECK(mid.x() == doctest::Approx(0.1 + 0.03 * 3.5));
    CHECK(mid.y() == doctest::Approx(0.2 + 0.02 * 7.25));
  }

  TEST_CASE("two identical views match themselves") {
    const std::vector<TocImage> images{clean_scene().images[0], clean_scene().images[0]};
    SfmConfig cfg;
    cfg.samples_per_image = 500;
    const auto tracks = match_correspondences(images, cfg);
    CHECK(tracks.size() == 1000);
    for (const auto& t : tracks) {
      REQUIRE(t.observations.size() == 2);
      CHECK(t.observations[0].pixel == t.observations[1].pixel);
      CHECK(t.observations[0].view == 0);
      CHECK(t.observations[1].view == 1);
    }
  }

  TEST_CASE("tracks are ordered by source view then sample") {
    const auto& tracks = clean_tracks();
    for (std::size_t i = 1; i < tracks.size(); ++i) {
      const bool ordered = tracks[i - 1].source_view < tracks[i].source_view ||
                           (tracks[i - 1].source_view == tracks[i].source_view &&
                            tracks[i - 1].sample_index < tracks[i].sample_index);
      CHECK(ordered);
    }
  }

  TEST_CASE("disjoint TOC ranges produce no tracks") {
    TocImage left = ramp_image(40, 40, 0.005, 0.005);
    TocImage right = left;
    for (std::size_t i = 0; i < right.pixel_count(); ++i) right.toc_mean[3 * i] += 0.5f;
    CHECK(match_correspondences({left, right}, SfmConfig{}).empty());
  }

  TEST_CASE("single view is rejected") {
    try {
      match_correspondences({clean_scene().images[0]}, SfmConfig{});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InsufficientViews);
    }
  }

  TEST_CASE("noiseless ring: most tracks span three views") {
    const auto& tracks = clean_tracks();
    REQUIRE(!tracks.empty());
    const auto multi = std::count_if(tracks.begin(), tracks.end(), [](const auto& t) { return t.observations.size() >= 3; });
    MESSAGE("tracks " << tracks.size() << ", with >= 3 views " << multi);
    CHECK(static_cast<double>(multi) / tracks.size() >= 0.8);
  }

  TEST_CASE("noiseless ring: median reprojection error") {
    std::vector<double> errs;
    for (const auto& t : clean_tracks()) {
      if (t.reprojection_error) errs.push_back(*t.reprojection_error);
    }
    REQUIRE(errs.size() > 1000);
    std::nth_element(errs.begin(), errs.begin() + errs.size() / 2, errs.end());
    CHECK(errs[errs.size() / 2] < 0.25);
  }

  TEST_CASE("coincident rays mark the track failed") {
    const CameraView cam = focus::test::camera_looking_at(Vec3(0, -500, 0), Vec3::Zero());
    CorrespondenceTrack t;
    t.observations = {{0, Vec2(320, 240), Vec3::Zero(), Vec3::UnitZ()}, {1, Vec2(320, 240), Vec3::Zero(), Vec3::UnitZ()}};
    std::vector<CorrespondenceTrack> tracks{t};
    triangulate_tracks(tracks, {cam, cam});
    CHECK_FALSE(tracks[0].point.has_value());
  }

  TEST_CASE("exact observations triangulate exactly") {
    const CameraView a = focus::test::camera_looking_at(Vec3(0, -500, 100), Vec3::Zero());
    const CameraView b = focus::test::camera_looking_at(Vec3(400, -300, 150), Vec3::Zero());
    const Vec3 p(12, -5, 30);
    CorrespondenceTrack t;
    t.observations = {{0, project(a, p), Vec3::Zero(), Vec3::UnitZ()}, {1, project(b, p), Vec3::Zero(), Vec3::UnitZ()}};
    std::vector<CorrespondenceTrack> tracks{t};
    triangulate_tracks(tracks, {a, b});
    REQUIRE(tracks[0].point.has_value());
    CHECK((*tracks[0].point - p).norm() < 1e-6);
    CHECK(*tracks[0].reprojection_error < 1e-6);
  }

  TEST_CASE("outlier removal drops a distant point") {
    std::vector<Vec3> pts;
    for (int x = 0; x < 5; ++x)
      for (int y = 0; y < 5; ++y)
        for (int z = 0; z < 5; ++z) pts.emplace_back(x, y, z);
    pts.emplace_back(102, 2, 2);
    const auto keep = statistical_outlier_mask(pts, SorConfig{});
    const auto stat = mean_knn_distance(pts, 20);
    double mean = 0.0;
    for (double s : stat) mean += s;
    mean /= stat.size();
    double var = 0.0;
    for (double s : stat) var += (s - mean) * (s - mean);
    const double limit = mean + 2.0 * std::sqrt(var / (stat.size() - 1));
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(keep[i] == (stat[i] <= limit));
    CHECK_FALSE(keep.back());
    CHECK(std::count(keep.begin(), keep.end(), true) == 125);
  }

  TEST_CASE("filters apply reprojection, floor and outlier rules") {
    std::vector<CorrespondenceTrack> tracks;
    for (int x = 0; x < 6; ++x)
      for (int y = 0; y < 6; ++y) tracks.push_back(track_at(Vec3(x, y, 10), 0.5));
    tracks.push_back(track_at(Vec3(2, 2, 10.5), 5.0));
    tracks.push_back(track_at(Vec3(2, 3, -1.0), 0.5));
    tracks.push_back(track_at(Vec3(3, 3, 0.0), 0.5));
    CorrespondenceTrack failed;
    failed.observations.resize(2);
    tracks.push_back(failed);
    SfmConfig cfg;
    cfg.sor.std_ratio = 1e9;
    FilterStats stats;
    const auto out = filter_points(tracks, cfg, &stats);
    CHECK(stats.input == 40);
    CHECK(stats.triangulated == 39);
    CHECK(stats.after_reprojection == 38);
    CHECK(stats.after_floor == 37);
    CHECK(out.size() == 37);
    for (const auto& t : out) {
      CHECK(*t.reprojection_error <= 3.0);
      CHECK(t.point->z() >= 0.0);
    }
  }

  TEST_CASE("filtering everything is an error") {
    std::vector<CorrespondenceTrack> tracks{track_at(Vec3(0, 0, -5), 0.1), track_at(Vec3(0, 0, 5), 4.0)};
    try {
      filter_points(tracks, SfmConfig{});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::EmptyCloud);
    }
  }

  TEST_CASE("aggregating identical normals") {
    const Vec3 n = Vec3(0.3, -0.5, 0.8).normalized();
    const std::vector<Vec3> ns(7, n);
    CHECK((aggregate_normals(ns) - n).norm() < 1e-12);
  }

  TEST_CASE("azimuth is averaged on the circle") {
    const std::vector<Vec3> ns{spherical(90, 179), spherical(90, -179)};
    const Vec3 m = aggregate_normals(ns);
    CHECK((m - Vec3(-1, 0, 0)).norm() < 1e-12);
  }

  TEST_CASE("symmetric normals average into the bisecting plane") {
    const std::vector<Vec3> ns{spherical(45, 60), spherical(45, -60)};
    const Vec3 m = aggregate_normals(ns);
    CHECK((m - spherical(45, 0)).norm() < 1e-12);
    CHECK(m.norm() == doctest::Approx(1.0));
    const std::vector<Vec3> mixed{spherical(30, 10), spherical(60, 50)};
    CHECK((aggregate_normals(mixed) - spherical(45, 30)).norm() < 1e-12);
    CHECK_THROWS_AS(aggregate_normals(std::vector<Vec3>{}), Error);
  }

  TEST_CASE("PCA normals of a plane") {
    Rng rng(3);
    std::vector<Vec3> pts;
    for (int i = 0; i < 300; ++i) pts.emplace_back(rng.uniform(-10, 10), rng.uniform(-10, 10), 4.0);
    for (const Vec3& n : pca_normals(pts, 20)) CHECK((n - Vec3::UnitZ()).norm() < 1e-9);
    std::vector<Vec3> tilted;
    for (const Vec3& p : pts) tilted.emplace_back(p.x(), -4.0, p.y());
    for (const Vec3& n : pca_normals(tilted, 20)) CHECK((n - Vec3::UnitY()).norm() < 1e-9);
  }

  TEST_CASE("noiseless reconstruction lies on the ground truth") {
    const SfmResult r = reconstruct_sfm(clean_scene().images, clean_cameras(), SfmConfig{});
    REQUIRE(r.cloud.size() > 1000);
    const MeshBvh bvh(clean_scene().ground_truth);
    double sum = 0.0;
    for (const auto& p : r.cloud) {
      CHECK(p.provenance.view_count >= 2);
      CHECK(p.provenance.mean_reprojection_error <= 3.0);
      CHECK(p.position.z() >= 0.0);
      CHECK(std::abs(p.normal.norm() - 1.0) < 1e-9);
      sum += std::sqrt(bvh.closest(p.position).squared_distance);
    }
    CHECK(sum / r.cloud.size() < 0.5);
  }

  TEST_CASE("output does not depend on the thread count") {
    const std::vector<TocImage> imgs(clean_scene().images.begin(), clean_scene().images.begin() + 3);
    const std::vector<CameraView> cams(clean_cameras().begin(), clean_cameras().begin() + 3);
    SfmConfig cfg;
    cfg.samples_per_image = 800;
    cfg.threads = 1;
    const SfmResult a = reconstruct_sfm(imgs, cams, cfg);
    cfg.threads = 4;
    const SfmResult b = reconstruct_sfm(imgs, cams, cfg);
    REQUIRE(a.cloud.size() == b.cloud.size());
    for (std::size_t i = 0; i < a.cloud.size(); ++i) {
      CHECK(a.cloud[i].position == b.cloud[i].position);
      CHECK(a.cloud[i].normal == b.cloud[i].normal);
    }
  }

  TEST_CASE("run_sfm writes identical files and the mesher sidecar") {
    const auto dir = focus::test::scratch_dir("sfm_run");
    generate_scene(default_scene_spec(4, 42, NoiseSpec{0.002, 0.0}), dir / "scene");
    SfmConfig cfg;
    cfg.samples_per_image = 600;
    run_sfm(dir / "scene", dir / "a.ply", cfg);
    run_sfm(dir / "scene", dir / "b.ply", cfg);
    CHECK(read_text_file(dir / "a.ply") == read_text_file(dir / "b.ply"));
    const auto sidecar = nlohmann::json::parse(read_text_file(poisson_sidecar_path(dir / "a.ply")));
    CHECK(sidecar["method"] == "screened_poisson");
    CHECK(sidecar["depth"] == 8);
    CHECK(sidecar["iterations"] == 8);
    CHECK(sidecar["crop_padding_mm"] == 1.0);
    CHECK(sidecar["height_interval_mm"] == nlohmann::json::array({0, 150}));
    const OrientedPointCloud cloud = read_ply_cloud(dir / "a.ply");
    CHECK(!cloud.empty());
  }

  TEST_CASE("configuration validation") {
    SfmConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.samples_per_image = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SfmConfig{};
    cfg.match_threshold = -1;
    CHECK_THROWS_AS(cfg.validate(), Error);
  }
}
