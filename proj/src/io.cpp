#include "icgmvs/io.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace icgmvs {

std::string view_name(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%08zu", id);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream s;
  s << f.rdbuf();
  if (f.bad()) throw IoError("read failed: " + path);
  return s.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

namespace {

// Cursor over a header made of whitespace-separated tokens.
class HeaderReader {
 public:
  explicit HeaderReader(const std::string& s) : s_(s) {}

  void skip_space() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '#') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::string token(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && !std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) throw ParseError(std::string("expected ") + what, start);
    return s_.substr(start, pos_ - start);
  }

  long long integer(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    const std::string t = token(what);
    char* end = nullptr;
    const long long v = std::strtoll(t.c_str(), &end, 10);
    if (*end != '\0') throw ParseError(std::string("bad ") + what + " '" + t + "'", start);
    return v;
  }

  double real(const char* what) {
    skip_space();
    const std::size_t start = pos_;
    const std::string t = token(what);
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (*end != '\0' || !std::isfinite(v)) throw ParseError(std::string("bad ") + what + " '" + t + "'", start);
    return v;
  }

  // Consumes exactly one whitespace byte that separates header and payload.
  void single_space() {
    if (pos_ >= s_.size() || !std::isspace(static_cast<unsigned char>(s_[pos_])))
      throw ParseError("expected whitespace before payload", pos_);
    ++pos_;
  }

  std::string line() {
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
    std::string out = s_.substr(start, pos_ - start);
    if (pos_ < s_.size()) ++pos_;
    if (!out.empty() && out.back() == '\r') out.pop_back();
    return out;
  }

  std::size_t pos() const { return pos_; }
  bool done() {
    skip_space();
    return pos_ >= s_.size();
  }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

std::size_t positive_dim(long long v, const char* what, std::size_t offset) {
  if (v <= 0 || v > (1LL << 24)) throw ParseError(std::string("invalid ") + what, offset);
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string encode_pfm(const Tensor& depth) {
  if (depth.rank() != 2) throw DimensionError("PFM expects (H,W), got " + shape_str(depth.shape()));
  const std::size_t H = depth.dim(0), W = depth.dim(1);
  std::string out = "Pf\n" + std::to_string(W) + " " + std::to_string(H) + "\n-1.0\n";
  const std::size_t header = out.size();
  out.resize(header + 4 * H * W);
  auto d = depth.data();
  char* p = out.data() + header;
  for (std::size_t row = 0; row < H; ++row) {
    const std::size_t y = H - 1 - row;
    for (std::size_t x = 0; x < W; ++x) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(d[y * W + x]));
      if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
      std::memcpy(p, &bits, 4);
      p += 4;
    }
  }
  return out;
}

Tensor decode_pfm(const std::string& bytes) {
  HeaderReader r(bytes);
  const std::string magic = r.token("PFM magic");
  if (magic == "PF") throw ParseError("colour PFM is not supported for depth maps", 0);
  if (magic != "Pf") throw ParseError("not a greyscale PFM (magic '" + magic + "')", 0);
  std::size_t off = r.pos();
  const std::size_t W = positive_dim(r.integer("width"), "width", off);
  off = r.pos();
  const std::size_t H = positive_dim(r.integer("height"), "height", off);
  off = r.pos();
  const double scale = r.real("scale");
  if (scale == 0.0) throw ParseError("PFM scale must be non-zero", off);
  r.single_space();
  const bool little = scale < 0.0;
  const std::size_t start = r.pos();
  if (bytes.size() - start < 4 * H * W)
    throw ParseError("PFM payload truncated: need " + std::to_string(4 * H * W) + " bytes", bytes.size());
  std::vector<double> out(H * W);
  const bool swap = little != (std::endian::native == std::endian::little);
  const char* p = bytes.data() + start;
  for (std::size_t row = 0; row < H; ++row) {
    const std::size_t y = H - 1 - row;
    for (std::size_t x = 0; x < W; ++x) {
      std::uint32_t bits;
      std::memcpy(&bits, p, 4);
      p += 4;
      if (swap) bits = byteswap32(bits);
      out[y * W + x] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  return Tensor(Shape{H, W}, std::move(out));
}

void write_pfm(const std::string& path, const Tensor& depth) { write_file(path, encode_pfm(depth)); }

Tensor read_pfm(const std::string& path) {
  try {
    return decode_pfm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

namespace {
unsigned char quantize(double v) {
  return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}
}  // namespace

std::string encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3) throw DimensionError("PPM expects (3,H,W), got " + shape_str(image.shape()));
  const std::size_t H = image.dim(1), W = image.dim(2), HW = H * W;
  std::string out = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + 3 * HW);
  auto d = image.data();
  for (std::size_t i = 0; i < HW; ++i)
    for (std::size_t c = 0; c < 3; ++c) out[header + 3 * i + c] = static_cast<char>(quantize(d[c * HW + i]));
  return out;
}

Tensor decode_ppm(const std::string& bytes) {
  HeaderReader r(bytes);
  const std::string magic = r.token("PPM magic");
  if (magic != "P6") throw ParseError("only binary PPM (P6) is supported, got '" + magic + "'", 0);
  std::size_t off = r.pos();
  const std::size_t W = positive_dim(r.integer("width"), "width", off);
  off = r.pos();
  const std::size_t H = positive_dim(r.integer("height"), "height", off);
  off = r.pos();
  const long long maxval = r.integer("maxval");
  if (maxval != 255) throw ParseError("only maxval 255 is supported", off);
  r.single_space();
  const std::size_t start = r.pos(), HW = H * W;
  if (bytes.size() - start < 3 * HW) throw ParseError("PPM payload truncated", bytes.size());
  std::vector<double> out(3 * HW);
  for (std::size_t i = 0; i < HW; ++i)
    for (std::size_t c = 0; c < 3; ++c)
      out[c * HW + i] = static_cast<double>(static_cast<unsigned char>(bytes[start + 3 * i + c])) / 255.0;
  return Tensor(Shape{3, H, W}, std::move(out));
}

void write_ppm(const std::string& path, const Tensor& image) { write_file(path, encode_ppm(image)); }

Tensor read_ppm(const std::string& path) {
  try {
    return decode_ppm(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

std::string encode_ply(const PointCloud& cloud, bool binary) {
  if (cloud.colors.size() != cloud.points.size()) throw DimensionError("point cloud colours do not match points");
  std::ostringstream s;
  s << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
    << "element vertex " << cloud.size() << "\n"
    << "property float x\nproperty float y\nproperty float z\n"
    << "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  std::string out = s.str();
  if (binary) {
    const std::size_t header = out.size();
    out.resize(header + 15 * cloud.size());
    char* p = out.data() + header;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(cloud.points[i][a]));
        if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
        std::memcpy(p, &bits, 4);
        p += 4;
      }
      for (int c = 0; c < 3; ++c) *p++ = static_cast<char>(quantize(cloud.colors[i][static_cast<std::size_t>(c)]));
    }
  } else {
    std::ostringstream body;
    body << std::setprecision(9);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      for (int a = 0; a < 3; ++a) body << static_cast<float>(cloud.points[i][a]) << ' ';
      body << int(quantize(cloud.colors[i][0])) << ' ' << int(quantize(cloud.colors[i][1])) << ' '
           << int(quantize(cloud.colors[i][2])) << '\n';
    }
    out += body.str();
  }
  return out;
}

PointCloud decode_ply(const std::string& bytes) {
  HeaderReader r(bytes);
  if (r.line() != "ply") throw ParseError("missing 'ply' magic", 0);
  bool binary = false, have_format = false;
  std::size_t count = 0;
  std::vector<std::string> props;
  bool in_vertex = false;
  while (true) {
    const std::size_t off = r.pos();
    if (off >= bytes.size()) throw ParseError("PLY header has no end_header", off);
    std::istringstream ls(r.line());
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw == "comment" || kw == "obj_info" || kw.empty()) continue;
    if (kw == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt != "ascii") throw ParseError("unsupported PLY format '" + fmt + "'", off);
      have_format = true;
    } else if (kw == "element") {
      std::string name;
      long long n = -1;
      ls >> name >> n;
      in_vertex = name == "vertex";
      if (!in_vertex) throw ParseError("unsupported PLY element '" + name + "'", off);
      if (n < 0) throw ParseError("invalid vertex count", off);
      count = static_cast<std::size_t>(n);
    } else if (kw == "property") {
      std::string type, name;
      ls >> type >> name;
      if (!in_vertex) throw ParseError("property outside the vertex element", off);
      props.push_back(type + " " + name);
    } else {
      throw ParseError("unexpected PLY header keyword '" + kw + "'", off);
    }
  }
  if (!have_format) throw ParseError("PLY header lacks a format line", 0);
  const std::vector<std::string> expected{"float x", "float y", "float z", "uchar red", "uchar green", "uchar blue"};
  if (props != expected) throw ParseError("PLY vertex layout must be float x y z, uchar red green blue", r.pos());

  PointCloud cloud;
  cloud.points.resize(count);
  cloud.colors.resize(count);
  cloud.view.assign(count, -1);
  cloud.pixel.assign(count, 0);
  std::size_t pos = r.pos();
  if (binary) {
    if (bytes.size() - pos < 15 * count) throw ParseError("PLY payload truncated", bytes.size());
    const char* p = bytes.data() + pos;
    for (std::size_t i = 0; i < count; ++i) {
      for (int a = 0; a < 3; ++a) {
        std::uint32_t bits;
        std::memcpy(&bits, p, 4);
        p += 4;
        if constexpr (std::endian::native == std::endian::big) bits = byteswap32(bits);
        cloud.points[i][a] = static_cast<double>(std::bit_cast<float>(bits));
      }
      for (std::size_t c = 0; c < 3; ++c) cloud.colors[i][c] = static_cast<unsigned char>(*p++) / 255.0;
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      for (int a = 0; a < 3; ++a) {
        const std::size_t off = r.pos();
        const double v = r.real("vertex coordinate");
        const float f = static_cast<float>(v);
        if (!std::isfinite(f)) throw ParseError("vertex coordinate out of float range", off);
        cloud.points[i][a] = static_cast<double>(f);
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const std::size_t off = r.pos();
        const long long v = r.integer("colour");
        if (v < 0 || v > 255) throw ParseError("colour out of range", off);
        cloud.colors[i][c] = static_cast<double>(v) / 255.0;
      }
    }
  }
  return cloud;
}

void write_ply(const std::string& path, const PointCloud& cloud, bool binary) {
  write_file(path, encode_ply(cloud, binary));
}

PointCloud read_ply(const std::string& path) {
  try {
    return decode_ply(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

std::string encode_camera(const Camera& cam) {
  std::ostringstream s;
  s << std::setprecision(17) << "extrinsic\n";
  for (int i = 0; i < 3; ++i)
    s << cam.R(i, 0) << ' ' << cam.R(i, 1) << ' ' << cam.R(i, 2) << ' ' << cam.t(i) << '\n';
  s << "0 0 0 1\n\nintrinsic\n";
  for (int i = 0; i < 3; ++i) s << cam.K(i, 0) << ' ' << cam.K(i, 1) << ' ' << cam.K(i, 2) << '\n';
  s << '\n' << cam.dmin << ' ' << cam.dmax << '\n';
  return s.str();
}

Camera decode_camera(const std::string& text) {
  HeaderReader r(text);
  std::size_t off = r.pos();
  if (r.token("'extrinsic'") != "extrinsic") throw ParseError("camera file must start with 'extrinsic'", off);
  Camera cam;
  double E[4][4];
  for (auto& row : E)
    for (double& v : row) v = r.real("extrinsic entry");
  off = r.pos();
  if (r.token("'intrinsic'") != "intrinsic") throw ParseError("expected 'intrinsic'", off);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) cam.K(i, j) = r.real("intrinsic entry");
  cam.dmin = r.real("dmin");
  cam.dmax = r.real("dmax");
  if (!r.done()) throw ParseError("trailing data in camera file", r.pos());
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) cam.R(i, j) = E[i][j];
    cam.t(i) = E[i][3];
  }
  if (E[3][0] != 0.0 || E[3][1] != 0.0 || E[3][2] != 0.0 || E[3][3] != 1.0)
    throw ParseError("extrinsic last row must be 0 0 0 1", 0);
  cam.validate();
  return cam;
}

void write_camera(const std::string& path, const Camera& cam) { write_file(path, encode_camera(cam)); }

Camera read_camera(const std::string& path) {
  try {
    return decode_camera(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  } catch (const ParameterError& e) {
    throw DatasetError(path + ": " + e.what());
  }
}

std::string encode_pair_file(const std::vector<PairEntry>& pairs) {
  std::ostringstream s;
  s << std::setprecision(10) << pairs.size() << '\n';
  for (const auto& p : pairs) {
    s << p.ref << '\n' << p.sources.size();
    for (const auto& [id, score] : p.sources) s << ' ' << id << ' ' << score;
    s << '\n';
  }
  return s.str();
}

std::vector<PairEntry> decode_pair_file(const std::string& text) {
  HeaderReader r(text);
  std::size_t off = r.pos();
  const long long n = r.integer("view count");
  if (n < 0) throw ParseError("negative view count", off);
  std::vector<PairEntry> out;
  for (long long i = 0; i < n; ++i) {
    PairEntry e;
    off = r.pos();
    const long long ref = r.integer("reference id");
    if (ref < 0) throw ParseError("negative view id", off);
    e.ref = static_cast<std::size_t>(ref);
    off = r.pos();
    const long long k = r.integer("source count");
    if (k < 0) throw ParseError("negative source count", off);
    for (long long j = 0; j < k; ++j) {
      off = r.pos();
      const long long id = r.integer("source id");
      if (id < 0) throw ParseError("negative view id", off);
      e.sources.emplace_back(static_cast<std::size_t>(id), r.real("score"));
    }
    out.push_back(std::move(e));
  }
  if (!r.done()) throw ParseError("trailing data in pair file", r.pos());
  return out;
}

void write_pair_file(const std::string& path, const std::vector<PairEntry>& pairs) {
  write_file(path, encode_pair_file(pairs));
}

std::vector<PairEntry> read_pair_file(const std::string& path) {
  try {
    return decode_pair_file(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.offset());
  }
}

std::vector<std::string> list_scenes(const std::string& root) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw DatasetError("dataset directory not found: " + root);
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(root, ec))
    if (entry.is_directory() && fs::exists(entry.path() / "pair.txt")) out.push_back(entry.path().string());
  if (ec) throw IoError("cannot list " + root + ": " + ec.message());
  std::sort(out.begin(), out.end());
  return out;
}

SceneRecord load_scene(const std::string& scene_dir, bool require_depth) {
  namespace fs = std::filesystem;
  const fs::path root(scene_dir);
  SceneRecord s;
  s.path = scene_dir;
  s.name = root.filename().string();
  s.pairs = read_pair_file((root / "pair.txt").string());
  std::size_t n = 0;
  for (const auto& p : s.pairs) {
    n = std::max(n, p.ref + 1);
    for (const auto& src : p.sources) n = std::max(n, src.first + 1);
  }
  for (std::size_t v = 0; v < n; ++v) {
    const std::string id = view_name(v);
    const fs::path img = root / "images" / (id + ".ppm");
    const fs::path cam = root / "cams" / (id + "_cam.txt");
    const fs::path dep = root / "depths" / (id + ".pfm");
    if (!fs::exists(img) || !fs::exists(cam))
      throw DatasetError("view " + id + " listed in " + (root / "pair.txt").string() + " is missing its image or camera");
    ViewRecord rec;
    rec.image = read_ppm(img.string());
    rec.cam = read_camera(cam.string());
    if (fs::exists(dep)) {
      rec.depth = read_pfm(dep.string());
    } else if (require_depth) {
      throw DatasetError("missing GT depth " + dep.string());
    }
    s.views.push_back(std::move(rec));
  }
  return s;
}

}  // namespace icgmvs
