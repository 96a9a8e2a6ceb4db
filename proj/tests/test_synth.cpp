#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "focus/error.hpp"
#include "focus/io.hpp"
#include "focus/synth.hpp"
#include "test_support.hpp"

using namespace focus;

namespace {

CameraView front_camera(int width = 640, int height = 480) {
  CameraView cam;
  cam.intrinsics = Intrinsics::single_focal(500.0, (width - 1) / 2.0, (height - 1) / 2.0);
  cam.image_size = {width, height};
  return cam;
}

TriMesh triangle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& ta, const Vec3& tb, const Vec3& tc) {
  TriMesh m;
  m.vertices = {a, b, c};
  m.faces = {{0, 1, 2}};
  m.tocs = {ta, tb, tc};
  return m;
}

// Ray through pixel (u, v) hits triangle (a, b, c); returns the barycentric
// weights of b and c at the hit.
Eigen::Vector2d ray_barycentric(const CameraView& cam, int u, int v, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 dir((u - cam.intrinsics.cx) / cam.intrinsics.fx, (v - cam.intrinsics.cy) / cam.intrinsics.fy, 1.0);
  Eigen::Matrix3d m;
  m.col(0) = dir;
  m.col(1) = a - b;
  m.col(2) = a - c;
  const Vec3 sol = m.colPivHouseholderQr().solve(a);
  return {sol(1), sol(2)};
}

const SceneSpec& default_spec() {
  static const SceneSpec spec = default_scene_spec(10, 42);
  return spec;
}

const GeneratedScene& default_render() {
  static const GeneratedScene scene = render_scene(default_spec());
  return scene;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("tilted triangle interpolates TOC perspective-correctly") {
    const CameraView cam = front_camera();
    const Vec3 a(-150, -120, 600), b(180, -100, 900), c(-100, 160, 1200);
    const TocImage img = rasterize_mesh(triangle(a, b, c, {0, 0, 0}, {1, 0, 0}, {0, 1, 0}), cam);
    int checked = 0;
    double worst = 0.0;
    for (int v = 0; v < img.height; ++v) {
      for (int u = 0; u < img.width; ++u) {
        if (!img.in_mask(u, v)) continue;
        const Eigen::Vector2d bc = ray_barycentric(cam, u, v, a, b, c);
        const Vec3 expect(bc(0), bc(1), 0.0);
        worst = std::max(worst, (img.toc(img.index(u, v)) - expect).norm());
        ++checked;
      }
    }
    CHECK(checked > 10000);
    CHECK(worst < 1e-5);
  }

  TEST_CASE("triangle centre pixel carries the barycentric TOC") {
    const CameraView cam = front_camera(101, 101);
    // Vertices project to (0,0), (100,0), (0,100); the centroid lands off-grid,
    // so check pixel (30, 40) against the closed form.
    const double z = 1000.0;
    const auto back = [&](double u, double v) {
      return Vec3((u - 50) * z / 500.0, (v - 50) * z / 500.0, z);
    };
    const TocImage img = rasterize_mesh(triangle(back(0, 0), back(100, 0), back(0, 100), {0, 0, 0}, {1, 0, 0}, {0, 1, 0}), cam);
    const Vec3 toc = img.toc(img.index(30, 40));
    CHECK(toc.x() == doctest::Approx(0.3).epsilon(1e-5));
    CHECK(toc.y() == doctest::Approx(0.4).epsilon(1e-5));
    CHECK(toc.z() == 0.0);
    CHECK(img.in_mask(0, 0));
    CHECK_FALSE(img.in_mask(60, 60));
  }

  TEST_CASE("flat-shaded normals match the face normal") {
    const CameraView cam = front_camera();
    const Vec3 a(-150, -120, 600), b(180, -100, 900), c(-100, 160, 1200);
    const TriMesh mesh = triangle(a, b, c, {0, 0, 0}, {1, 0, 0}, {0, 1, 0});
    const TocImage img = rasterize_mesh(mesh, cam);
    const Vec3 expect = (b - a).cross(c - a).normalized();
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      if (!img.in_mask(i)) continue;
      CHECK((img.normal_at(i) - expect).norm() < 1e-3);
      CHECK(std::abs(img.normal_at(i).norm() - 1.0) < 1e-4);
    }
  }

  TEST_CASE("background pixels keep the sentinels") {
    const CameraView cam = front_camera();
    const TocImage img = rasterize_mesh(triangle({-10, -10, 500}, {10, -10, 500}, {-10, 10, 500}, {0, 0, 0}, {1, 0, 0}, {0, 1, 0}), cam);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
      if (img.in_mask(i)) continue;
      CHECK(std::isinf(img.depth[i]));
      CHECK(img.toc(i) == Vec3::Zero());
    }
  }

  TEST_CASE("model outside the frustum renders an empty mask") {
    const DeformableModel model = DeformableModel::procedural(7);
    CameraView cam = front_camera();
    cam.translation = Vec3(5000, 0, 800);
    const TocImage img = rasterize(model, model.identity_params(), cam);
    CHECK(img.mask_count() == 0);
  }

  TEST_CASE("model behind the camera is an error") {
    const DeformableModel model = DeformableModel::procedural(7);
    CameraView cam = front_camera();
    cam.translation = Vec3(0, 0, -800);
    try {
      rasterize(model, model.identity_params(), cam);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BehindCamera);
    }
  }

  TEST_CASE("nearer triangle wins contested pixels") {
    const CameraView cam = front_camera();
    TriMesh m;
    m.vertices = {{-200, -200, 1000}, {200, -200, 1000}, {0, 200, 1000}, {-200, -200, 800}, {200, -200, 800}, {0, 200, 800}};
    m.faces = {{0, 1, 2}, {3, 4, 5}};
    m.tocs = {{0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}, {0.1, 0.1, 0.1}, {0.9, 0.9, 0.9}, {0.9, 0.9, 0.9}, {0.9, 0.9, 0.9}};
    const TocImage first = rasterize_mesh(m, cam);
    std::swap(m.faces[0], m.faces[1]);
    const TocImage second = rasterize_mesh(m, cam);
    int contested = 0;
    for (std::size_t i = 0; i < first.pixel_count(); ++i) {
      if (!first.in_mask(i)) continue;
      const Vec3 near(0.9, 0.9, 0.9);
      // Contested pixels are those the far triangle also covers; the far one
      // projects to a strict subset, so every masked pixel of the far one counts.
      if (first.depth[i] < 900.0f) {
        CHECK((first.toc(i) - near).norm() < 1e-6);
        ++contested;
      }
      CHECK(first.depth[i] == second.depth[i]);
      CHECK(first.toc(i) == second.toc(i));
    }
    CHECK(contested > 1000);
  }

  TEST_CASE("zero noise returns the input unchanged") {
    const TocImage& clean = default_render().images[0];
    const TocImage rendered = rasterize(DeformableModel::procedural(7), default_spec().ground_truth, default_spec().cameras[0]);
    CHECK(rendered.toc_mean == clean.toc_mean);
    const TocImage out = emulate_prediction(clean, NoiseSpec{}, 5);
    CHECK(out.toc_mean == clean.toc_mean);
    CHECK(out.toc_logvar == clean.toc_logvar);
  }

  TEST_CASE("emulated noise has the requested spread") {
    // A screen-filling quad at TOC 0.5 keeps clamping out of the statistics.
    const CameraView cam = front_camera();
    TriMesh quad;
    quad.vertices = {{-1000, -1000, 500}, {1000, -1000, 500}, {1000, 1000, 500}, {-1000, 1000, 500}};
    quad.faces = {{0, 1, 2}, {0, 2, 3}};
    quad.tocs.assign(4, Vec3::Constant(0.5));
    const TocImage clean = rasterize_mesh(quad, cam);
    REQUIRE(clean.mask_count() == clean.pixel_count());
    const TocImage noisy = emulate_prediction(clean, NoiseSpec{0.01, 0.0}, 11);
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < 3 * clean.pixel_count(); ++i) {
      const double d = static_cast<double>(noisy.toc_mean[i]) - clean.toc_mean[i];
      sum += d;
      sum_sq += d * d;
      ++n;
    }
    REQUIRE(n >= 100000);
    const double mean = sum / n;
    const double std_dev = std::sqrt(sum_sq / n - mean * mean);
    CHECK(std_dev >= 0.009);
    CHECK(std_dev <= 0.011);
    CHECK(std::abs(noisy.logvar(0).x() - std::log(1e-4)) < 1e-5);
  }

  TEST_CASE("emulation is deterministic and keeps mask and depth") {
    const TocImage& clean = default_render().images[1];
    const NoiseSpec noise{0.005, 0.01};
    const TocImage a = emulate_prediction(clean, noise, 3);
    const TocImage b = emulate_prediction(clean, noise, 3);
    const TocImage c = emulate_prediction(clean, noise, 4);
    CHECK(a.toc_mean == b.toc_mean);
    CHECK(a.toc_logvar == b.toc_logvar);
    CHECK(a.toc_mean != c.toc_mean);
    CHECK(a.mask == clean.mask);
    CHECK(a.depth == clean.depth);
    CHECK(a.normal == clean.normal);
    for (std::size_t i = 0; i < a.pixel_count(); ++i) {
      if (!a.in_mask(i)) continue;
      const Vec3 t = a.toc(i);
      CHECK((t.array() >= 0.0).all());
      CHECK((t.array() <= 1.0).all());
      const double sigma = std::sqrt(a.toc_variance(i).x());
      CHECK(sigma >= 0.005 - 1e-7);
      CHECK(sigma <= 0.015 + 1e-7);
    }
  }

  TEST_CASE("negative sigma is rejected") {
    const TocImage img = TocImage::blank(4, 4);
    CHECK_THROWS_AS(emulate_prediction(img, NoiseSpec{-0.1, 0.0}, 1), Error);
    CHECK_THROWS_AS(emulate_prediction(img, NoiseSpec{0.0, -0.1}, 1), Error);
  }

  TEST_CASE("sigma field is smooth") {
    const std::vector<double> f = sigma_field(64, 48, NoiseSpec{0.0, 1.0}, 9);
    double max_step = 0.0;
    for (int v = 0; v < 48; ++v) {
      for (int u = 1; u < 64; ++u) max_step = std::max(max_step, std::abs(f[v * 64 + u] - f[v * 64 + u - 1]));
    }
    // Neighbouring control values differ by at most 1 across 21 pixels.
    CHECK(max_step <= 1.0 / 21.0 + 1e-12);
  }

  TEST_CASE("every default view sees at least 30% foreground") {
    for (const TocImage& img : default_render().images) {
      const double fraction = static_cast<double>(img.mask_count()) / img.pixel_count();
      CHECK(fraction >= 0.30);
    }
  }

  TEST_CASE("in-mask invariants of the default render") {
    for (const TocImage& img : default_render().images) {
      for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        if (!img.in_mask(i)) continue;
        CHECK(std::isfinite(img.logvar(i).x()));
        CHECK(std::abs(img.normal_at(i).norm() - 1.0) < 1e-4);
      }
    }
  }

  TEST_CASE("rendered TOC reprojects to its pixel") {
    const DeformableModel model = DeformableModel::procedural(7);
    const SceneSpec& spec = default_spec();
    const GeneratedScene& scene = default_render();
    double worst = 0.0;
    for (std::size_t view = 0; view < scene.images.size(); ++view) {
      const TocImage& img = scene.images[view];
      for (int v = 0; v < img.height; v += 3) {
        for (int u = 0; u < img.width; u += 3) {
          if (!img.in_mask(u, v)) continue;
          const Vec3 x = model.deform(model.toc_to_template(img.toc(img.index(u, v))), spec.ground_truth);
          worst = std::max(worst, (project(spec.cameras[view], x) - Vec2(u, v)).norm());
        }
      }
    }
    CHECK(worst < 1.0);
  }

  TEST_CASE("scene without cameras is rejected") {
    SceneSpec spec = default_scene_spec(3, 1);
    spec.cameras.clear();
    try {
      render_scene(spec);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::InvalidSpec);
    }
  }

  TEST_CASE("three-view scene on disk") {
    const auto dir = focus::test::scratch_dir("synth3");
    SceneSpec spec = default_scene_spec(3, 42, NoiseSpec{0.005, 0.0});
    generate_scene(spec, dir);
    int views = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
      if (entry.is_directory()) {
        ++views;
        for (const char* name : {"toc_mean.fimg", "toc_logvar.fimg", "normal.fimg", "mask.fimg", "depth.fimg"}) {
          CHECK(std::filesystem::exists(entry.path() / name));
        }
      }
    }
    CHECK(views == 3);
    CHECK(std::filesystem::exists(dir / "gt.ply"));
    const SceneManifest m = read_manifest(dir / "manifest.json");
    CHECK(m.views.size() == 3);
    const Scene loaded = load_scene(dir);
    const GeneratedScene again = render_scene(spec, 1);
    for (int i = 0; i < 3; ++i) CHECK(loaded.images[i].toc_mean == again.images[i].toc_mean);
  }

  TEST_CASE("ring views are evenly spaced in azimuth") {
    const auto& cams = default_spec().cameras;
    const DeformableModel model = DeformableModel::procedural(7);
    const Vec3 c = bounding_box(model.deformed_mesh(default_spec().ground_truth).vertices).center();
    for (std::size_t i = 0; i < cams.size(); ++i) {
      const Vec3 a = cams[i].center() - c;
      const Vec3 b = cams[(i + 1) % cams.size()].center() - c;
      double step = std::atan2(b.y(), b.x()) - std::atan2(a.y(), a.x());
      while (step < 0) step += 2 * std::numbers::pi;
      CHECK(step == doctest::Approx(2 * std::numbers::pi / cams.size()).epsilon(1e-9));
    }
  }
}
