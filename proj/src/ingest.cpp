#include "bevrec/ingest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include <Eigen/SVD>
#include <png.h>

#include "bevrec/binary_io.hpp"
#include "bevrec/errors.hpp"

namespace bevrec::ingest {
namespace {

constexpr std::size_t kLidarRecordBytes = 16;

float load_f32_le(const std::byte* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(std::to_integer<std::uint8_t>(p[i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

void store_f32_le(float v, std::vector<std::byte>& out) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((bits >> (8 * i)) & 0xFFu));
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

// Parses every whitespace-separated number of `text`; false on a bad token.
bool parse_numbers(const std::string& text, std::vector<double>& out) {
  out.clear();
  std::istringstream ss(text);
  std::string token;
  while (ss >> token) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      return false;
    }
    if (used != token.size() || !std::isfinite(v)) return false;
    out.push_back(v);
  }
  return true;
}

Mat3 nearest_rotation(const Mat3& m) {
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return r;
}

struct PngReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

template <class Map>
Map map_from_png(const std::filesystem::path& path, double scale, const char* what) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError(std::string(what) + " scale must be positive");
  const Gray16 raw = read_png16(path);
  Map map(raw.height, raw.width);
  for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
    if (raw.pixels[i] == 0) continue;
    map.values[i] = static_cast<double>(raw.pixels[i]) * scale;
    map.valid[i] = 1;
  }
  return map;
}

}  // namespace

PointCloud read_lidar_scan(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() % kLidarRecordBytes != 0)
    throw FormatError(path.string() + ": length " + std::to_string(bytes.size()) + " is not a multiple of 16");
  PointCloud cloud;
  cloud.points.reserve(bytes.size() / kLidarRecordBytes);
  for (std::size_t off = 0; off < bytes.size(); off += kLidarRecordBytes) {
    const std::byte* rec = bytes.data() + off;
    cloud.points.emplace_back(load_f32_le(rec), load_f32_le(rec + 4), load_f32_le(rec + 8));
  }
  return cloud;
}

void write_lidar_scan(const std::filesystem::path& path, const PointCloud& cloud, float intensity) {
  std::vector<std::byte> bytes;
  bytes.reserve(cloud.size() * kLidarRecordBytes);
  for (const auto& p : cloud.points) {
    store_f32_le(static_cast<float>(p.x()), bytes);
    store_f32_le(static_cast<float>(p.y()), bytes);
    store_f32_le(static_cast<float>(p.z()), bytes);
    store_f32_le(intensity, bytes);
  }
  io::write_file(path, bytes);
}

std::vector<Pose> read_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Pose> poses;
  std::string line;
  std::vector<double> values;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const std::string where = path.string() + " line " + std::to_string(line_no);
    if (!parse_numbers(line, values)) throw FormatError(where + ": unparseable number");
    if (values.size() != 12)
      throw FormatError(where + ": expected 12 numbers, found " + std::to_string(values.size()));
    Pose pose = Pose::from_row_major(values.data());
    if (!is_orthonormal(pose.rotation)) {
      if (!is_orthonormal(pose.rotation, 1e-3)) throw FormatError(where + ": rotation block is not orthonormal");
      pose.rotation = nearest_rotation(pose.rotation);
    }
    poses.push_back(pose);
  }
  return poses;
}

void write_poses(const std::filesystem::path& path, std::span<const Pose> poses) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  double row[12];
  for (const auto& pose : poses) {
    pose.to_row_major(row);
    for (int i = 0; i < 12; ++i) out << (i ? " " : "") << row[i];
    out << '\n';
  }
}

const Projection& Calibration::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) throw FormatError("calibration: missing entry " + name);
  return it->second;
}

Calibration read_calibration(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Calibration calib;
  std::string line;
  std::vector<double> values;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) continue;
    const std::string where = path.string() + " line " + std::to_string(line_no);
    const auto colon = line.find(':');
    if (colon == std::string::npos) throw FormatError(where + ": expected \"NAME: values\"");
    std::string name = line.substr(0, colon);
    name.erase(std::remove_if(name.begin(), name.end(), [](unsigned char c) { return std::isspace(c); }), name.end());
    if (!parse_numbers(line.substr(colon + 1), values) || values.size() != 12)
      throw FormatError(where + ": expected 12 numbers after " + name);
    Projection p;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) p(r, c) = values[static_cast<std::size_t>(r * 4 + c)];
    calib.entries[name] = p;
  }
  return calib;
}

CameraIntrinsics intrinsics_from_projection(const Projection& p) {
  CameraIntrinsics intr{p(0, 0), p(1, 1), p(0, 2), p(1, 2)};
  intr.validate();
  return intr;
}

StereoRig stereo_rig_from_projections(const Projection& left, const Projection& right) {
  StereoRig rig;
  rig.intrinsics = intrinsics_from_projection(right);
  rig.baseline = (left(0, 3) - right(0, 3)) / right(0, 0);
  rig.validate();
  return rig;
}

Gray16 read_png16(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) throw IoError("cannot open " + path.string());
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw FormatError(path.string() + ": not a PNG file");

  PngReadGuard g;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw IoError("libpng: cannot allocate read struct");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw IoError("libpng: cannot allocate info struct");

  Gray16 image;
  std::vector<png_bytep> rows;
  std::vector<png_byte> buffer;
  bool bad_layout = false;
  if (setjmp(png_jmpbuf(g.png))) throw FormatError(path.string() + ": corrupt PNG");

  png_init_io(g.png, file.get());
  png_set_sig_bytes(g.png, 8);
  png_read_info(g.png, g.info);
  const int bit_depth = png_get_bit_depth(g.png, g.info);
  const int color_type = png_get_color_type(g.png, g.info);
  if (bit_depth != 16 || color_type != PNG_COLOR_TYPE_GRAY) {
    bad_layout = true;
  } else {
    image.height = png_get_image_height(g.png, g.info);
    image.width = png_get_image_width(g.png, g.info);
    buffer.resize(image.height * image.width * 2);
    rows.resize(image.height);
    for (std::size_t r = 0; r < image.height; ++r) rows[r] = buffer.data() + r * image.width * 2;
    png_read_image(g.png, rows.data());
    png_read_end(g.png, nullptr);
  }
  if (bad_layout)
    throw FormatError(path.string() + ": expected 16-bit single-channel PNG, got bit depth " +
                      std::to_string(bit_depth) + " color type " + std::to_string(color_type));

  image.pixels.resize(image.height * image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i)  // PNG samples are big-endian
    image.pixels[i] = static_cast<std::uint16_t>((buffer[2 * i] << 8) | buffer[2 * i + 1]);
  return image;
}

void write_png16(const std::filesystem::path& path, const Gray16& image) {
  if (image.pixels.size() != image.height * image.width) throw InputError("write_png16: pixel count mismatch");
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");

  PngWriteGuard g;
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw IoError("libpng: cannot allocate write struct");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw IoError("libpng: cannot allocate info struct");

  std::vector<png_byte> buffer(image.pixels.size() * 2);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    buffer[2 * i] = static_cast<png_byte>(image.pixels[i] >> 8);
    buffer[2 * i + 1] = static_cast<png_byte>(image.pixels[i] & 0xFF);
  }
  std::vector<png_bytep> rows(image.height);
  for (std::size_t r = 0; r < image.height; ++r) rows[r] = buffer.data() + r * image.width * 2;

  if (setjmp(png_jmpbuf(g.png))) throw IoError("libpng: failed writing " + path.string());
  png_init_io(g.png, file.get());
  png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);
  png_write_image(g.png, rows.data());
  png_write_end(g.png, nullptr);
}

DepthMap read_depth_png(const std::filesystem::path& path, double scale) {
  return map_from_png<DepthMap>(path, scale, "depth");
}

DisparityMap read_disparity(const std::filesystem::path& path, double scale) {
  return map_from_png<DisparityMap>(path, scale, "disparity");
}

std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir, const std::string& ext) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

}  // namespace bevrec::ingest
