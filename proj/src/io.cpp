#include "focus/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "focus/error.hpp"

namespace focus {

using nlohmann::json;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, path.string() + ": cannot open for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw Error(ErrorCode::Io, path.string() + ": write failed");
}

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

void append_f32(std::string& out, float f) {
  const std::uint32_t v = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_i32(std::string& out, std::int32_t i) {
  const auto v = static_cast<std::uint32_t>(i);
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

}  // namespace

// ---------------------------------------------------------------------------
// FIMG

std::vector<std::uint8_t> encode_fimg(const FimgRaster& r) {
  const std::size_t expected = static_cast<std::size_t>(r.width) * r.height * r.channels;
  if (r.data.size() != expected) throw Error(ErrorCode::Format, "raster data length does not match its header");
  std::vector<std::uint8_t> out;
  out.reserve(kFimgHeaderSize + 4 * expected);
  for (char c : {'F', 'I', 'M', 'G'}) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, kFimgVersion);
  put_u32(out, r.width);
  put_u32(out, r.height);
  put_u32(out, r.channels);
  out.push_back(static_cast<std::uint8_t>(r.semantics));
  for (float f : r.data) put_f32(out, f);
  return out;
}

FimgRaster decode_fimg(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  auto fail = [&](std::size_t offset, const std::string& what) {
    throw Error(ErrorCode::Format, source + ": " + what + " at byte offset " + std::to_string(offset));
  };
  if (bytes.size() < kFimgHeaderSize) {
    fail(bytes.size(), "truncated header (expected " + std::to_string(kFimgHeaderSize) + " bytes, got " +
                           std::to_string(bytes.size()) + ")");
  }
  if (std::memcmp(bytes.data(), "FIMG", 4) != 0) fail(0, "bad magic (expected \"FIMG\")");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kFimgVersion) fail(4, "unknown version " + std::to_string(version));
  FimgRaster r;
  r.width = get_u32(bytes.data() + 8);
  r.height = get_u32(bytes.data() + 12);
  r.channels = get_u32(bytes.data() + 16);
  const std::uint8_t tag = bytes[20];
  if (tag > static_cast<std::uint8_t>(ChannelSemantics::Depth)) fail(20, "unknown channel-semantics tag " + std::to_string(tag));
  r.semantics = static_cast<ChannelSemantics>(tag);
  const std::size_t count = static_cast<std::size_t>(r.width) * r.height * r.channels;
  const std::size_t expected = kFimgHeaderSize + 4 * count;
  if (bytes.size() != expected) {
    fail(std::min(bytes.size(), expected), (bytes.size() < expected ? "truncated payload" : "trailing bytes after payload") +
                                               std::string(" (expected ") + std::to_string(expected) +
                                               " bytes, got " + std::to_string(bytes.size()) + ")");
  }
  r.data.resize(count);
  for (std::size_t i = 0; i < count; ++i) r.data[i] = get_f32(bytes.data() + kFimgHeaderSize + 4 * i);
  return r;
}

void write_fimg(const std::filesystem::path& path, const FimgRaster& raster) {
  const auto bytes = encode_fimg(raster);
  write_text_file(path, std::string(bytes.begin(), bytes.end()));
}

FimgRaster read_fimg(const std::filesystem::path& path) {
  const std::string s = read_text_file(path);
  return decode_fimg(std::vector<std::uint8_t>(s.begin(), s.end()), path.string());
}

void write_toc_image(const TocImage& image, const std::filesystem::path& base_dir, const RasterPaths& paths) {
  const auto w = static_cast<std::uint32_t>(image.width);
  const auto h = static_cast<std::uint32_t>(image.height);
  write_fimg(base_dir / paths.toc_mean, {w, h, 3, ChannelSemantics::TocMean, image.toc_mean});
  write_fimg(base_dir / paths.toc_logvar, {w, h, 3, ChannelSemantics::TocLogvar, image.toc_logvar});
  write_fimg(base_dir / paths.normal, {w, h, 3, ChannelSemantics::Normal, image.normal});
  write_fimg(base_dir / paths.mask, {w, h, 1, ChannelSemantics::Mask, image.mask});
  write_fimg(base_dir / paths.depth, {w, h, 1, ChannelSemantics::Depth, image.depth});
}

TocImage read_toc_image(const std::filesystem::path& base_dir, const RasterPaths& paths) {
  struct Part {
    const std::string* rel;
    ChannelSemantics semantics;
    std::uint32_t channels;
    std::vector<float> TocImage::*member;
  };
  const Part parts[] = {{&paths.toc_mean, ChannelSemantics::TocMean, 3, &TocImage::toc_mean},
                        {&paths.toc_logvar, ChannelSemantics::TocLogvar, 3, &TocImage::toc_logvar},
                        {&paths.normal, ChannelSemantics::Normal, 3, &TocImage::normal},
                        {&paths.mask, ChannelSemantics::Mask, 1, &TocImage::mask},
                        {&paths.depth, ChannelSemantics::Depth, 1, &TocImage::depth}};
  TocImage img;
  bool first = true;
  for (const Part& part : parts) {
    const auto path = base_dir / *part.rel;
    FimgRaster r = read_fimg(path);
    if (r.semantics != part.semantics || r.channels != part.channels) {
      throw Error(ErrorCode::Format, path.string() + ": unexpected channel semantics or channel count");
    }
    if (first) {
      img.width = static_cast<int>(r.width);
      img.height = static_cast<int>(r.height);
      first = false;
    } else if (static_cast<int>(r.width) != img.width || static_cast<int>(r.height) != img.height) {
      throw Error(ErrorCode::Format, path.string() + ": raster size differs from the other rasters of this view");
    }
    img.*(part.member) = std::move(r.data);
  }
  return img;
}

// ---------------------------------------------------------------------------
// PLY

namespace {

std::string ply_header(std::size_t vertices, bool normals, std::size_t faces, PlyEncoding encoding) {
  std::ostringstream h;
  h << "ply\n";
  h << "format " << (encoding == PlyEncoding::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
  h << "element vertex " << vertices << "\n";
  h << "property float x\nproperty float y\nproperty float z\n";
  if (normals) h << "property float nx\nproperty float ny\nproperty float nz\n";
  if (faces > 0) h << "element face " << faces << "\nproperty list uchar int vertex_indices\n";
  h << "end_header\n";
  return h.str();
}

std::string format_float(float f) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<float>::max_digits10) << f;
  return os.str();
}

std::string encode_ply_parts(const std::vector<Vec3>& positions, const std::vector<Vec3>* normals,
                             const std::vector<Face>& faces, PlyEncoding encoding) {
  std::string out = ply_header(positions.size(), normals != nullptr, faces.size(), encoding);
  if (encoding == PlyEncoding::Ascii) {
    std::ostringstream body;
    for (std::size_t i = 0; i < positions.size(); ++i) {
      for (int k = 0; k < 3; ++k) body << (k ? " " : "") << format_float(static_cast<float>(positions[i](k)));
      if (normals) {
        for (int k = 0; k < 3; ++k) body << " " << format_float(static_cast<float>((*normals)[i](k)));
      }
      body << "\n";
    }
    for (const Face& f : faces) body << "3 " << f[0] << " " << f[1] << " " << f[2] << "\n";
    out += body.str();
    return out;
  }
  out.reserve(out.size() + positions.size() * 24 + faces.size() * 13);
  for (std::size_t i = 0; i < positions.size(); ++i) {
    for (int k = 0; k < 3; ++k) append_f32(out, static_cast<float>(positions[i](k)));
    if (normals) {
      for (int k = 0; k < 3; ++k) append_f32(out, static_cast<float>((*normals)[i](k)));
    }
  }
  for (const Face& f : faces) {
    out.push_back(static_cast<char>(3));
    for (int idx : f) append_i32(out, idx);
  }
  return out;
}

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_ply_type(const std::string& name, const std::string& source) {
  if (name == "char" || name == "int8") return PlyType::Int8;
  if (name == "uchar" || name == "uint8") return PlyType::UInt8;
  if (name == "short" || name == "int16") return PlyType::Int16;
  if (name == "ushort" || name == "uint16") return PlyType::UInt16;
  if (name == "int" || name == "int32") return PlyType::Int32;
  if (name == "uint" || name == "uint32") return PlyType::UInt32;
  if (name == "float" || name == "float32") return PlyType::Float32;
  if (name == "double" || name == "float64") return PlyType::Float64;
  throw Error(ErrorCode::Format, source + ": unknown PLY type '" + name + "'");
}

std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::Int8:
    case PlyType::UInt8: return 1;
    case PlyType::Int16:
    case PlyType::UInt16: return 2;
    case PlyType::Int32:
    case PlyType::UInt32:
    case PlyType::Float32: return 4;
    case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::Float32;
  bool is_list = false;
  PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

// Sequential reader over the body, binary little endian or ASCII tokens.
class PlyBodyReader {
 public:
  PlyBodyReader(const std::string& data, std::size_t offset, bool ascii, const std::string& source)
      : data_(data), pos_(offset), ascii_(ascii), source_(source) {}

  double read(PlyType type, const std::string& what) {
    if (ascii_) return read_ascii(what);
    const std::size_t size = ply_type_size(type);
    if (pos_ + size > data_.size()) {
      throw Error(ErrorCode::Format, source_ + ": unexpected end of data while reading " + what + " at byte offset " +
                                         std::to_string(pos_) + " (file has " + std::to_string(data_.size()) + " bytes)");
    }
    std::uint64_t raw = 0;
    for (std::size_t i = 0; i < size; ++i) raw |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
    pos_ += size;
    switch (type) {
      case PlyType::Int8: return static_cast<std::int8_t>(raw);
      case PlyType::UInt8: return static_cast<std::uint8_t>(raw);
      case PlyType::Int16: return static_cast<std::int16_t>(raw);
      case PlyType::UInt16: return static_cast<std::uint16_t>(raw);
      case PlyType::Int32: return static_cast<std::int32_t>(raw);
      case PlyType::UInt32: return static_cast<std::uint32_t>(raw);
      case PlyType::Float32: return std::bit_cast<float>(static_cast<std::uint32_t>(raw));
      case PlyType::Float64: return std::bit_cast<double>(raw);
    }
    return 0.0;
  }

  bool at_end() {
    if (ascii_) {
      while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    }
    return pos_ >= data_.size();
  }
  std::size_t position() const { return pos_; }

 private:
  double read_ascii(const std::string& what) {
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    if (start == pos_) {
      throw Error(ErrorCode::Format, source_ + ": unexpected end of data while reading " + what + " at byte offset " +
                                         std::to_string(start));
    }
    double value = 0.0;
    const auto res = std::from_chars(data_.data() + start, data_.data() + pos_, value);
    if (res.ec != std::errc() || res.ptr != data_.data() + pos_) {
      throw Error(ErrorCode::Format, source_ + ": malformed number while reading " + what + " at byte offset " +
                                         std::to_string(start));
    }
    return value;
  }

  const std::string& data_;
  std::size_t pos_;
  bool ascii_;
  const std::string& source_;
};

}  // namespace

std::string encode_ply(const TriMesh& mesh, PlyEncoding encoding) {
  return encode_ply_parts(mesh.vertices, mesh.has_normals() ? &mesh.normals : nullptr, mesh.faces, encoding);
}

void write_ply(const std::filesystem::path& path, const TriMesh& mesh, PlyEncoding encoding) {
  write_text_file(path, encode_ply(mesh, encoding));
}

void write_ply(const std::filesystem::path& path, const OrientedPointCloud& cloud, PlyEncoding encoding) {
  write_ply(path, points_as_mesh(cloud), encoding);
}

TriMesh points_as_mesh(const OrientedPointCloud& cloud) {
  TriMesh mesh;
  mesh.vertices.reserve(cloud.size());
  mesh.normals.reserve(cloud.size());
  for (const auto& p : cloud) {
    mesh.vertices.push_back(p.position);
    mesh.normals.push_back(p.normal);
  }
  return mesh;
}

TriMesh decode_ply(const std::string& data, const std::string& source) {
  auto fail = [&](const std::string& what) { throw Error(ErrorCode::Format, source + ": " + what); };
  const std::size_t header_end = data.find("end_header");
  if (data.compare(0, 3, "ply") != 0) fail("missing 'ply' magic");
  if (header_end == std::string::npos) fail("missing end_header");
  std::size_t body = data.find('\n', header_end);
  if (body == std::string::npos) fail("missing newline after end_header");
  ++body;

  std::istringstream header(data.substr(0, header_end));
  std::string line;
  bool ascii = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  std::size_t line_no = 0;
  while (std::getline(header, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword.empty() || keyword == "ply" || keyword == "comment" || keyword == "obj_info") continue;
    if (keyword == "format") {
      std::string fmt, version;
      ls >> fmt >> version;
      if (fmt == "ascii") {
        ascii = true;
      } else if (fmt != "binary_little_endian") {
        fail("unsupported PLY format '" + fmt + "'");
      }
      have_format = true;
    } else if (keyword == "element") {
      PlyElement e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) fail("malformed element line " + std::to_string(line_no));
      e.count = static_cast<std::size_t>(count);
      elements.push_back(e);
    } else if (keyword == "property") {
      if (elements.empty()) fail("property before any element (line " + std::to_string(line_no) + ")");
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ls >> count_type >> item_type >> p.name;
        p.is_list = true;
        p.count_type = parse_ply_type(count_type, source);
        p.type = parse_ply_type(item_type, source);
      } else {
        p.type = parse_ply_type(type, source);
        ls >> p.name;
      }
      if (p.name.empty()) fail("malformed property line " + std::to_string(line_no));
      elements.back().properties.push_back(p);
    } else {
      fail("unknown header keyword '" + keyword + "' on line " + std::to_string(line_no));
    }
  }
  if (!have_format) fail("missing format line");

  TriMesh mesh;
  PlyBodyReader reader(data, body, ascii, source);
  for (const PlyElement& e : elements) {
    if (e.name == "vertex") {
      int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1;
      for (int k = 0; k < static_cast<int>(e.properties.size()); ++k) {
        const std::string& n = e.properties[k].name;
        if (n == "x") ix = k;
        if (n == "y") iy = k;
        if (n == "z") iz = k;
        if (n == "nx") inx = k;
        if (n == "ny") iny = k;
        if (n == "nz") inz = k;
      }
      if (ix < 0 || iy < 0 || iz < 0) fail("vertex element lacks x/y/z");
      const bool normals = inx >= 0 && iny >= 0 && inz >= 0;
      mesh.vertices.resize(e.count);
      if (normals) mesh.normals.resize(e.count);
      std::vector<double> values(e.properties.size());
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const PlyProperty& p = e.properties[k];
          const std::string what = "vertex " + std::to_string(i) + " of " + std::to_string(e.count);
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.read(p.count_type, what));
            for (std::size_t j = 0; j < n; ++j) reader.read(p.type, what);
            values[k] = 0.0;
          } else {
            values[k] = reader.read(p.type, what);
          }
        }
        mesh.vertices[i] = Vec3(values[ix], values[iy], values[iz]);
        if (normals) mesh.normals[i] = Vec3(values[inx], values[iny], values[inz]);
      }
    } else if (e.name == "face") {
      mesh.faces.reserve(e.count);
      for (std::size_t i = 0; i < e.count; ++i) {
        const std::string what = "face " + std::to_string(i) + " of " + std::to_string(e.count);
        std::vector<int> poly;
        for (const PlyProperty& p : e.properties) {
          if (!p.is_list) {
            reader.read(p.type, what);
            continue;
          }
          const auto n = static_cast<long long>(reader.read(p.count_type, what));
          if (n < 0) fail("negative list length in " + what);
          std::vector<int> items(static_cast<std::size_t>(n));
          for (auto& it : items) it = static_cast<int>(reader.read(p.type, what));
          if (p.name == "vertex_indices" || p.name == "vertex_index") poly = std::move(items);
        }
        if (poly.size() < 3) fail(what + " has fewer than 3 vertices");
        for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
      }
    } else {
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const PlyProperty& p : e.properties) {
          const std::string what = e.name + " " + std::to_string(i);
          if (p.is_list) {
            const auto n = static_cast<std::size_t>(reader.read(p.count_type, what));
            for (std::size_t j = 0; j < n; ++j) reader.read(p.type, what);
          } else {
            reader.read(p.type, what);
          }
        }
      }
    }
  }
  if (!reader.at_end()) {
    fail("element counts do not match the data: " + std::to_string(data.size() - reader.position()) +
         " unread bytes after the declared elements");
  }
  const int nv = static_cast<int>(mesh.vertices.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (int idx : mesh.faces[f]) {
      if (idx < 0 || idx >= nv) fail("face " + std::to_string(f) + " references missing vertex " + std::to_string(idx));
    }
  }
  return mesh;
}

TriMesh read_ply(const std::filesystem::path& path) { return decode_ply(read_text_file(path), path.string()); }

OrientedPointCloud read_ply_cloud(const std::filesystem::path& path) {
  const TriMesh mesh = read_ply(path);
  OrientedPointCloud cloud(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    cloud[i].position = mesh.vertices[i];
    cloud[i].normal = mesh.has_normals() ? mesh.normals[i] : Vec3::UnitZ();
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::Schema, (path.empty() ? std::string("/") : path) + ": " + what);
}

const json& require_object(const json& j, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) schema_error(path, "expected an object");
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!keys.count(item.key())) schema_error(path + "/" + item.key(), "unknown field");
  }
  return j;
}

const json& member(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) schema_error(path + "/" + key, "missing required field");
  return obj.at(key);
}

double number(const json& j, const std::string& path) {
  if (!j.is_number()) schema_error(path, "expected a number");
  return j.get<double>();
}

std::int64_t integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) schema_error(path, "expected an integer");
  return j.get<std::int64_t>();
}

std::string string_field(const json& j, const std::string& path) {
  if (!j.is_string()) schema_error(path, "expected a string");
  return j.get<std::string>();
}

Vec3 vec3(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) schema_error(path, "expected an array of 3 numbers");
  return {number(j[0], path + "/0"), number(j[1], path + "/1"), number(j[2], path + "/2")};
}

Eigen::VectorXd vecn(const json& j, const std::string& path) {
  if (!j.is_array()) schema_error(path, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = number(j[i], path + "/" + std::to_string(i));
  return v;
}

json vec_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace

json params_to_json(const ModelParams& p) {
  return {{"r", vec_json(p.r)}, {"s", p.s}, {"t", vec_json(p.t)}, {"z_s", vec_json(p.z_shape)}, {"z_p", vec_json(p.z_pose)}};
}

ModelParams params_from_json(const json& j, const std::string& path) {
  require_object(j, path, {"r", "s", "t", "z_s", "z_p"});
  ModelParams p;
  p.r = vec3(member(j, path, "r"), path + "/r");
  p.s = number(member(j, path, "s"), path + "/s");
  p.t = vec3(member(j, path, "t"), path + "/t");
  p.z_shape = vecn(member(j, path, "z_s"), path + "/z_s");
  p.z_pose = vecn(member(j, path, "z_p"), path + "/z_p");
  try {
    p.validate();
  } catch (const Error& e) {
    schema_error(path, e.what());
  }
  return p;
}

json manifest_to_json(const SceneManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["units"] = m.units;
  json model = {{"seed", m.model.seed}, {"shape_dims", m.model.shape_dims}, {"pose_dims", m.model.pose_dims}};
  if (!m.model.template_path.empty()) model["template"] = m.model.template_path;
  j["model"] = model;
  if (m.ground_truth) j["ground_truth"] = {{"params", params_to_json(m.ground_truth->params)}, {"mesh", m.ground_truth->mesh_path}};
  if (m.noise) {
    json noise = {{"sigma_base", m.noise->sigma_base}, {"sigma_range", m.noise->sigma_range}};
    if (m.noise_seed) noise["seed"] = *m.noise_seed;
    j["noise"] = noise;
  }
  json views = json::array();
  for (const ViewRecord& v : m.views) {
    const CameraView& c = v.camera;
    json rot = json::array();
    for (int r = 0; r < 3; ++r) rot.push_back({c.rotation(r, 0), c.rotation(r, 1), c.rotation(r, 2)});
    views.push_back({{"name", v.name},
                     {"intrinsics", {{"fx", c.intrinsics.fx}, {"fy", c.intrinsics.fy}, {"cx", c.intrinsics.cx}, {"cy", c.intrinsics.cy}}},
                     {"rotation", rot},
                     {"translation", vec_json(c.translation)},
                     {"image_size", {{"width", c.image_size.width}, {"height", c.image_size.height}}},
                     {"rasters",
                      {{"toc_mean", v.rasters.toc_mean},
                       {"toc_logvar", v.rasters.toc_logvar},
                       {"normal", v.rasters.normal},
                       {"mask", v.rasters.mask},
                       {"depth", v.rasters.depth}}}});
  }
  j["views"] = views;
  return j;
}

SceneManifest manifest_from_json(const json& j) {
  require_object(j, "", {"format_version", "units", "model", "ground_truth", "noise", "views"});
  SceneManifest m;
  m.format_version = static_cast<int>(integer(member(j, "", "format_version"), "/format_version"));
  if (m.format_version != SceneManifest::kFormatVersion) {
    schema_error("/format_version", "unsupported version " + std::to_string(m.format_version));
  }
  m.units = string_field(member(j, "", "units"), "/units");
  if (m.units != "mm") schema_error("/units", "only \"mm\" is supported");

  const json& model = require_object(member(j, "", "model"), "/model", {"seed", "shape_dims", "pose_dims", "template"});
  const std::int64_t seed = integer(member(model, "/model", "seed"), "/model/seed");
  if (seed < 0) schema_error("/model/seed", "must be non-negative");
  m.model.seed = static_cast<std::uint64_t>(seed);
  m.model.shape_dims = static_cast<int>(integer(member(model, "/model", "shape_dims"), "/model/shape_dims"));
  m.model.pose_dims = static_cast<int>(integer(member(model, "/model", "pose_dims"), "/model/pose_dims"));
  if (m.model.shape_dims < 0) schema_error("/model/shape_dims", "must be non-negative");
  if (m.model.pose_dims < 0 || m.model.pose_dims > 4) schema_error("/model/pose_dims", "must be in [0, 4]");
  if (model.contains("template")) m.model.template_path = string_field(model["template"], "/model/template");

  if (j.contains("ground_truth")) {
    const json& gt = require_object(j["ground_truth"], "/ground_truth", {"params", "mesh"});
    GroundTruthRecord rec;
    rec.params = params_from_json(member(gt, "/ground_truth", "params"), "/ground_truth/params");
    if (rec.params.shape_dims() != m.model.shape_dims || rec.params.pose_dims() != m.model.pose_dims) {
      schema_error("/ground_truth/params", "embedding sizes do not match /model");
    }
    rec.mesh_path = string_field(member(gt, "/ground_truth", "mesh"), "/ground_truth/mesh");
    m.ground_truth = rec;
  }
  if (j.contains("noise")) {
    const json& n = require_object(j["noise"], "/noise", {"sigma_base", "sigma_range", "seed"});
    NoiseSpec spec{number(member(n, "/noise", "sigma_base"), "/noise/sigma_base"),
                   number(member(n, "/noise", "sigma_range"), "/noise/sigma_range")};
    if (!(spec.sigma_base >= 0.0) || !(spec.sigma_range >= 0.0)) schema_error("/noise", "sigmas must be non-negative");
    m.noise = spec;
    if (n.contains("seed")) {
      const std::int64_t s = integer(n["seed"], "/noise/seed");
      if (s < 0) schema_error("/noise/seed", "must be non-negative");
      m.noise_seed = static_cast<std::uint64_t>(s);
    }
  }

  const json& views = member(j, "", "views");
  if (!views.is_array()) schema_error("/views", "expected an array");
  for (std::size_t i = 0; i < views.size(); ++i) {
    const std::string p = "/views/" + std::to_string(i);
    const json& v = require_object(views[i], p, {"name", "intrinsics", "rotation", "translation", "image_size", "rasters"});
    ViewRecord rec;
    rec.name = string_field(member(v, p, "name"), p + "/name");
    const json& k = require_object(member(v, p, "intrinsics"), p + "/intrinsics", {"fx", "fy", "cx", "cy"});
    rec.camera.intrinsics.fx = number(member(k, p + "/intrinsics", "fx"), p + "/intrinsics/fx");
    rec.camera.intrinsics.fy = number(member(k, p + "/intrinsics", "fy"), p + "/intrinsics/fy");
    rec.camera.intrinsics.cx = number(member(k, p + "/intrinsics", "cx"), p + "/intrinsics/cx");
    rec.camera.intrinsics.cy = number(member(k, p + "/intrinsics", "cy"), p + "/intrinsics/cy");
    const json& rot = member(v, p, "rotation");
    if (!rot.is_array() || rot.size() != 3) schema_error(p + "/rotation", "expected a 3x3 array");
    for (int r = 0; r < 3; ++r) rec.camera.rotation.row(r) = vec3(rot[r], p + "/rotation/" + std::to_string(r)).transpose();
    rec.camera.translation = vec3(member(v, p, "translation"), p + "/translation");
    const json& size = require_object(member(v, p, "image_size"), p + "/image_size", {"width", "height"});
    rec.camera.image_size.width = static_cast<int>(integer(member(size, p + "/image_size", "width"), p + "/image_size/width"));
    rec.camera.image_size.height = static_cast<int>(integer(member(size, p + "/image_size", "height"), p + "/image_size/height"));
    try {
      rec.camera.validate();
    } catch (const Error& e) {
      schema_error(p, e.what());
    }
    const json& r = require_object(member(v, p, "rasters"), p + "/rasters", {"toc_mean", "toc_logvar", "normal", "mask", "depth"});
    rec.rasters.toc_mean = string_field(member(r, p + "/rasters", "toc_mean"), p + "/rasters/toc_mean");
    rec.rasters.toc_logvar = string_field(member(r, p + "/rasters", "toc_logvar"), p + "/rasters/toc_logvar");
    rec.rasters.normal = string_field(member(r, p + "/rasters", "normal"), p + "/rasters/normal");
    rec.rasters.mask = string_field(member(r, p + "/rasters", "mask"), p + "/rasters/mask");
    rec.rasters.depth = string_field(member(r, p + "/rasters", "depth"), p + "/rasters/depth");
    m.views.push_back(std::move(rec));
  }
  return m;
}

void write_manifest(const std::filesystem::path& path, const SceneManifest& manifest) {
  write_text_file(path, manifest_to_json(manifest).dump(2) + "\n");
}

SceneManifest read_manifest(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::Format, path.string() + ": " + e.what());
  }
  SceneManifest m = manifest_from_json(j);
  const auto base = path.parent_path();
  auto check = [&](const std::string& rel, const std::string& field) {
    if (!std::filesystem::exists(base / rel)) {
      throw Error(ErrorCode::Io, path.string() + ": " + field + " references missing file " + (base / rel).string());
    }
  };
  if (!m.model.template_path.empty()) check(m.model.template_path, "/model/template");
  if (m.ground_truth) check(m.ground_truth->mesh_path, "/ground_truth/mesh");
  for (std::size_t i = 0; i < m.views.size(); ++i) {
    const std::string p = "/views/" + std::to_string(i) + "/rasters/";
    const RasterPaths& r = m.views[i].rasters;
    check(r.toc_mean, p + "toc_mean");
    check(r.toc_logvar, p + "toc_logvar");
    check(r.normal, p + "normal");
    check(r.mask, p + "mask");
    check(r.depth, p + "depth");
  }
  return m;
}

}  // namespace focus
