#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "focus/image.hpp"
#include "focus/mesh.hpp"
#include "focus/scene.hpp"

namespace focus {

// ---------------------------------------------------------------------------
// FIMG rasters
//
// Header (21 bytes, little endian):
//   magic "FIMG" | u32 version (=1) | u32 width | u32 height | u32 channels |
//   u8 channel-semantics tag
// Payload: width * height * channels float32, row-major, channel-interleaved.
// ---------------------------------------------------------------------------

enum class ChannelSemantics : std::uint8_t {
  TocMean = 0,
  TocLogvar = 1,
  Normal = 2,
  Mask = 3,
  Depth = 4,
};

struct FimgRaster {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  ChannelSemantics semantics = ChannelSemantics::TocMean;
  std::vector<float> data;
};

inline constexpr std::uint32_t kFimgVersion = 1;
inline constexpr std::size_t kFimgHeaderSize = 21;

std::vector<std::uint8_t> encode_fimg(const FimgRaster& raster);
/// Throws Format errors (bad magic, unknown version, bad tag, truncation)
/// that name the byte offset; `source` labels the message.
FimgRaster decode_fimg(const std::vector<std::uint8_t>& bytes, const std::string& source = "<memory>");

void write_fimg(const std::filesystem::path& path, const FimgRaster& raster);
FimgRaster read_fimg(const std::filesystem::path& path);

/// Writes the five rasters of a TocImage to `base_dir / paths.*`.
void write_toc_image(const TocImage& image, const std::filesystem::path& base_dir, const RasterPaths& paths);
TocImage read_toc_image(const std::filesystem::path& base_dir, const RasterPaths& paths);

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

enum class PlyEncoding { BinaryLittleEndian, Ascii };

/// Vertices as float32 x,y,z (plus nx,ny,nz when normals exist); faces as
/// "list uchar int vertex_indices" when present.
void write_ply(const std::filesystem::path& path, const TriMesh& mesh,
               PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);
void write_ply(const std::filesystem::path& path, const OrientedPointCloud& cloud,
               PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

std::string encode_ply(const TriMesh& mesh, PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);
TriMesh decode_ply(const std::string& bytes, const std::string& source = "<memory>");

/// Reads vertices, optional normals and optional faces. Accepts binary little
/// endian and ASCII; unknown scalar vertex properties are skipped.
TriMesh read_ply(const std::filesystem::path& path);

/// Cloud view of a PLY; points without normals get +Z.
OrientedPointCloud read_ply_cloud(const std::filesystem::path& path);

/// Face-less mesh holding the cloud's positions and normals.
TriMesh points_as_mesh(const OrientedPointCloud& cloud);

// ---------------------------------------------------------------------------
// Scene manifest (JSON)
// ---------------------------------------------------------------------------

nlohmann::json manifest_to_json(const SceneManifest& manifest);
/// Schema validation: required fields, types, no unknown fields, camera
/// invariants. Errors are Schema errors naming the JSON path.
SceneManifest manifest_from_json(const nlohmann::json& json);

void write_manifest(const std::filesystem::path& path, const SceneManifest& manifest);
/// Parses, validates and checks that every referenced file exists relative
/// to the manifest's directory.
SceneManifest read_manifest(const std::filesystem::path& path);

nlohmann::json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& json, const std::string& path = "");

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace focus
