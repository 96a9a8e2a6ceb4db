#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "doctest.h"
#include "focus/error.hpp"
#include "focus/io.hpp"
#include "focus/synth.hpp"
#include "test_support.hpp"

using namespace focus;

namespace {

std::string error_text(const std::function<void()>& fn, ErrorCode expected) {
  try {
    fn();
  } catch (const Error& e) {
    CHECK(e.code() == expected);
    return e.what();
  }
  FAIL("expected an error");
  return {};
}

std::uint32_t read_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return b[at] | (b[at + 1] << 8) | (b[at + 2] << 16) | (static_cast<std::uint32_t>(b[at + 3]) << 24);
}

SceneManifest two_view_manifest() {
  SceneManifest m;
  m.model.seed = 3;
  m.model.shape_dims = 2;
  m.model.pose_dims = 1;
  const SceneSpec spec = default_scene_spec(2, 5);
  for (int i = 0; i < 2; ++i) {
    const std::string dir = "v" + std::to_string(i);
    m.views.push_back({dir, spec.cameras[i],
                       {dir + "/m.fimg", dir + "/l.fimg", dir + "/n.fimg", dir + "/k.fimg", dir + "/d.fimg"}});
  }
  return m;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("FIMG round trip is bit-identical") {
    Rng rng(1);
    FimgRaster r;
    r.width = 640;
    r.height = 480;
    r.channels = 3;
    r.semantics = ChannelSemantics::Normal;
    r.data.resize(640 * 480 * 3);
    for (float& v : r.data) v = static_cast<float>(rng.uniform(-10, 10));
    r.data[0] = std::numeric_limits<float>::infinity();
    r.data[1] = -std::numeric_limits<float>::infinity();
    r.data[2] = std::numeric_limits<float>::quiet_NaN();
    r.data[3] = -0.0f;
    const auto dir = focus::test::scratch_dir("fimg");
    write_fimg(dir / "a.fimg", r);
    const FimgRaster back = read_fimg(dir / "a.fimg");
    CHECK(back.width == 640);
    CHECK(back.height == 480);
    CHECK(back.channels == 3);
    CHECK(back.semantics == ChannelSemantics::Normal);
    REQUIRE(back.data.size() == r.data.size());
    CHECK(std::memcmp(back.data.data(), r.data.data(), r.data.size() * sizeof(float)) == 0);
  }

  TEST_CASE("FIMG header layout") {
    FimgRaster r;
    r.width = 2;
    r.height = 1;
    r.channels = 1;
    r.semantics = ChannelSemantics::Depth;
    r.data = {1.0f, -2.5f};
    const auto bytes = encode_fimg(r);
    REQUIRE(bytes.size() == 21 + 8);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "FIMG");
    CHECK(read_u32(bytes, 4) == 1);
    CHECK(read_u32(bytes, 8) == 2);
    CHECK(read_u32(bytes, 12) == 1);
    CHECK(read_u32(bytes, 16) == 1);
    CHECK(bytes[20] == 4);
    CHECK(read_u32(bytes, 21) == std::bit_cast<std::uint32_t>(1.0f));
    CHECK(read_u32(bytes, 25) == std::bit_cast<std::uint32_t>(-2.5f));
  }

  TEST_CASE("FIMG format errors") {
    FimgRaster r;
    r.width = 4;
    r.height = 4;
    r.channels = 1;
    r.data.assign(16, 0.5f);
    auto bytes = encode_fimg(r);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK(error_text([&] { decode_fimg(bad); }, ErrorCode::Format).find("magic") != std::string::npos);
    bad = bytes;
    bad[4] = 9;
    CHECK(error_text([&] { decode_fimg(bad); }, ErrorCode::Format).find("version") != std::string::npos);
    bad = bytes;
    bad[20] = 77;
    error_text([&] { decode_fimg(bad); }, ErrorCode::Format);
    bad = bytes;
    bad.resize(bytes.size() - 5);
    const std::string msg = error_text([&] { decode_fimg(bad); }, ErrorCode::Format);
    CHECK(msg.find("expected 85 bytes, got 80") != std::string::npos);
    bad.resize(10);
    error_text([&] { decode_fimg(bad); }, ErrorCode::Format);
  }

  TEST_CASE("TocImage survives a write and read") {
    const GeneratedScene s = render_scene(default_scene_spec(1, 2, NoiseSpec{0.01, 0.0}));
    const auto dir = focus::test::scratch_dir("tocimg");
    const RasterPaths paths{"m.fimg", "l.fimg", "n.fimg", "k.fimg", "d.fimg"};
    write_toc_image(s.images[0], dir, paths);
    const TocImage back = read_toc_image(dir, paths);
    CHECK(back.toc_mean == s.images[0].toc_mean);
    CHECK(back.toc_logvar == s.images[0].toc_logvar);
    CHECK(back.normal == s.images[0].normal);
    CHECK(back.mask == s.images[0].mask);
    CHECK(std::memcmp(back.depth.data(), s.images[0].depth.data(), back.depth.size() * 4) == 0);
    error_text([&] { read_fimg(dir / "missing.fimg"); }, ErrorCode::Io);
  }

  TEST_CASE("oriented cloud round trip") {
    OrientedPointCloud cloud{{Vec3(1.5, -2.25, 3.125), Vec3(0, 0, 1), {}},
                             {Vec3(0.1, 0.2, 0.3), Vec3(0.6, 0.8, 0), {}},
                             {Vec3(-1e3, 4e2, 7), Vec3(0, -1, 0), {}}};
    const auto dir = focus::test::scratch_dir("ply");
    for (PlyEncoding enc : {PlyEncoding::BinaryLittleEndian, PlyEncoding::Ascii}) {
      write_ply(dir / "c.ply", cloud, enc);
      const OrientedPointCloud back = read_ply_cloud(dir / "c.ply");
      REQUIRE(back.size() == 3);
      for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) {
          CHECK(static_cast<float>(back[i].position(k)) == static_cast<float>(cloud[i].position(k)));
          CHECK(static_cast<float>(back[i].normal(k)) == static_cast<float>(cloud[i].normal(k)));
        }
      }
    }
    write_ply(dir / "a.ply", cloud);
    write_ply(dir / "b.ply", cloud);
    CHECK(read_text_file(dir / "a.ply") == read_text_file(dir / "b.ply"));
  }

  TEST_CASE("one-triangle mesh encoding") {
    TriMesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}};
    const std::string bin = encode_ply(m);
    const std::size_t body = bin.find("end_header\n") + 11;
    CHECK(bin.find("format binary_little_endian 1.0") != std::string::npos);
    CHECK(bin.find("element vertex 3") != std::string::npos);
    CHECK(bin.find("element face 1") != std::string::npos);
    CHECK(bin.find("property list uchar int vertex_indices") != std::string::npos);
    REQUIRE(bin.size() == body + 3 * 12 + 13);
    const std::string face = bin.substr(body + 36);
    CHECK(face[0] == 3);
    std::int32_t idx[3];
    std::memcpy(idx, face.data() + 1, 12);
    CHECK(idx[0] == 0);
    CHECK(idx[1] == 1);
    CHECK(idx[2] == 2);
    const std::string ascii = encode_ply(m, PlyEncoding::Ascii);
    CHECK(ascii.substr(ascii.size() - 8) == "3 0 1 2\n");
    const TriMesh back = decode_ply(bin);
    CHECK(back.faces == m.faces);
    CHECK(back.vertices == m.vertices);
    CHECK_FALSE(back.has_normals());
  }

  TEST_CASE("mesh round trip preserves order and normals") {
    TriMesh m = make_icosphere(10.0, 2);
    m.normals = compute_vertex_normals(m);
    const TriMesh back = decode_ply(encode_ply(m));
    REQUIRE(back.vertices.size() == m.vertices.size());
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
      CHECK(back.vertices[i] == m.vertices[i].cast<float>().cast<double>());
      CHECK(back.normals[i] == m.normals[i].cast<float>().cast<double>());
    }
    CHECK(back.faces == m.faces);
    CHECK(decode_ply(encode_ply(m, PlyEncoding::Ascii)).faces == m.faces);
  }

  TEST_CASE("PLY element counts must match the data") {
    std::string text = "ply\nformat ascii 1.0\nelement vertex 10\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    for (int i = 0; i < 5; ++i) text += "1 2 3\n";
    CHECK(error_text([&] { decode_ply(text); }, ErrorCode::Format).find("vertex 5 of 10") != std::string::npos);

    TriMesh five;
    for (int i = 0; i < 5; ++i) five.vertices.emplace_back(i, 0, 0);
    std::string bin = encode_ply(five);
    const std::size_t at = bin.find("element vertex 5");
    bin.replace(at, 16, "element vertex 10");
    error_text([&] { decode_ply(bin); }, ErrorCode::Format);
  }

  TEST_CASE("malformed PLY headers") {
    error_text([] { decode_ply("plx\nend_header\n"); }, ErrorCode::Format);
    error_text([] { decode_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\n"); }, ErrorCode::Format);
    error_text([] { decode_ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty quux x\nend_header\n1\n"); },
               ErrorCode::Format);
    const std::string bad_face =
        "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
        "element face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 7\n";
    error_text([&] { decode_ply(bad_face); }, ErrorCode::Format);
  }

  TEST_CASE("manifest JSON round trip") {
    const SceneManifest m = two_view_manifest();
    const SceneManifest back = manifest_from_json(manifest_to_json(m));
    CHECK(manifest_to_json(back) == manifest_to_json(m));
    REQUIRE(back.views.size() == 2);
    CHECK(back.views[1].camera.rotation == m.views[1].camera.rotation);
    CHECK(back.views[1].camera.translation == m.views[1].camera.translation);
    CHECK(back.views[0].camera.intrinsics.fx == m.views[0].camera.intrinsics.fx);
    CHECK(back.views[0].rasters.depth == "v0/d.fimg");
    CHECK(back.model.pose_dims == 1);
    CHECK_FALSE(back.ground_truth.has_value());
  }

  TEST_CASE("manifest on disk") {
    const auto dir = focus::test::scratch_dir("manifest");
    const GeneratedScene s = generate_scene(default_scene_spec(2, 9), dir);
    const SceneManifest m = read_manifest(dir / "manifest.json");
    CHECK(manifest_to_json(m) == manifest_to_json(s.manifest));
    REQUIRE(m.ground_truth.has_value());
    CHECK(m.ground_truth->params.pack() == s.manifest.ground_truth->params.pack());
    std::filesystem::remove(dir / "view_001" / "mask.fimg");
    error_text([&] { read_manifest(dir / "manifest.json"); }, ErrorCode::Io);
    error_text([&] { read_manifest(dir / "nope.json"); }, ErrorCode::Io);
    error_text([&] { load_scene(dir / "absent"); }, ErrorCode::Io);
  }

  TEST_CASE("manifest schema errors name the field") {
    nlohmann::json j = manifest_to_json(two_view_manifest());
    j.erase("views");
    CHECK(error_text([&] { manifest_from_json(j); }, ErrorCode::Schema).find("views") != std::string::npos);

    j = manifest_to_json(two_view_manifest());
    j["views"][1]["colour"] = 1;
    CHECK(error_text([&] { manifest_from_json(j); }, ErrorCode::Schema).find("/views/1/colour") != std::string::npos);

    j = manifest_to_json(two_view_manifest());
    j["format_version"] = 99;
    error_text([&] { manifest_from_json(j); }, ErrorCode::Schema);

    j = manifest_to_json(two_view_manifest());
    j["views"][0]["image_size"] = "big";
    error_text([&] { manifest_from_json(j); }, ErrorCode::Schema);
  }

  TEST_CASE("non-orthonormal rotation is rejected at load") {
    SceneManifest m = two_view_manifest();
    m.views[0].camera.rotation(0, 0) += 1e-3;
    const nlohmann::json j = manifest_to_json(m);
    CHECK(error_text([&] { manifest_from_json(j); }, ErrorCode::Schema).find("rotation") != std::string::npos);
  }

  TEST_CASE("parameter JSON") {
    ModelParams p = ModelParams::identity(2, 3);
    p.r = Vec3(0.1, -0.2, 0.3);
    p.s = 1.25;
    p.t = Vec3(-100, 5.5, 7);
    p.z_shape << 0.5, -0.25;
    p.z_pose << 0.1, 0.2, 0.3;
    const auto j = params_to_json(p);
    CHECK(j.contains("z_s"));
    CHECK(j.contains("z_p"));
    CHECK(params_from_json(j).pack() == p.pack());
    nlohmann::json bad = j;
    bad["s"] = -1.0;
    CHECK_THROWS_AS(params_from_json(bad), Error);
  }
}
