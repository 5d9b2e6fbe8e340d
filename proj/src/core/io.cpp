#include "icogs/io.hpp"

#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <json.hpp>

namespace icogs {

namespace {

using nlohmann::json;

constexpr char kCheckpointMagic[8] = {'I', 'C', 'O', 'G', 'S', '0', '1', '\0'};
constexpr char kDepthMagic[8] = {'I', 'C', 'O', 'D', 'P', 'T', 'H', '\0'};
constexpr char kFeatureMagic[8] = {'I', 'C', 'O', 'F', 'E', 'A', 'T', '\0'};
constexpr int kRecordFloats = 23;

class Writer {
public:
  void magic(const char (&m)[8]) { bytes_.insert(bytes_.end(), m, m + 8); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(double v) { u32(std::bit_cast<uint32_t>(static_cast<float>(v))); }

  void save(const fs::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
    if (!out) throw IoError("failed writing '" + path.string() + "'");
  }

private:
  std::vector<char> bytes_;
};

class Reader {
public:
  explicit Reader(const fs::path& path) : path_(path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "'");
    bytes_.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }

  void expect_magic(const char (&m)[8]) {
    need(8);
    if (std::memcmp(bytes_.data() + pos_, m, 8) != 0) fail("bad magic");
    pos_ += 8;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f32() { return std::bit_cast<float>(u32()); }
  size_t remaining() const { return bytes_.size() - pos_; }
  void need(size_t n) const {
    if (remaining() < n) fail("truncated file");
  }
  [[noreturn]] void fail(const std::string& what) const { throw IoError(path_.string() + ": " + what); }

private:
  fs::path path_;
  std::vector<char> bytes_;
  size_t pos_ = 0;
};

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("missing file '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse '" + path.string() + "': " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
}

json camera_json(const View& v) {
  json R = json::array(), t = json::array();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) R.push_back(v.pose.rotation(r, c));
  for (int r = 0; r < 3; ++r) t.push_back(v.pose.translation[r]);
  return {{"id", v.id}, {"fx", v.K.fx}, {"fy", v.K.fy}, {"cx", v.K.cx}, {"cy", v.K.cy},
          {"width", v.K.width}, {"height", v.K.height}, {"R", R}, {"t", t}};
}

std::string view_stem(int id) { return "view_" + std::to_string(id); }

uint8_t to_byte(double v) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return 255;
  return static_cast<uint8_t>(std::lround(v * 255.0));
}

void write_png_bytes(const fs::path& path, int w, int h, int channels, const std::vector<uint8_t>& px) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, px.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
}

} // namespace

void write_checkpoint(const fs::path& path, const GaussianCloud& cloud) {
  cloud.validate();
  Writer w;
  w.magic(kCheckpointMagic);
  w.u32(static_cast<uint32_t>(cloud.size()));
  w.u32(kShCoeffs);
  for (size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < 3; ++k) w.f32(cloud.positions[3 * i + k]);
    for (int k = 0; k < 4; ++k) w.f32(cloud.rotations[4 * i + k]);
    for (int k = 0; k < 3; ++k) w.f32(cloud.log_scales[3 * i + k]);
    w.f32(cloud.opacity_logits[i]);
    for (int k = 0; k < kShPerGaussian; ++k) w.f32(cloud.sh[kShPerGaussian * i + k]);
  }
  w.save(path);
}

GaussianCloud read_checkpoint(const fs::path& path) {
  Reader r(path);
  r.expect_magic(kCheckpointMagic);
  const uint32_t n = r.u32();
  const uint32_t coeffs = r.u32();
  if (coeffs != kShCoeffs) r.fail("unsupported SH coefficient count " + std::to_string(coeffs));
  if (r.remaining() != static_cast<size_t>(n) * kRecordFloats * 4) r.fail("size does not match Gaussian count");
  GaussianCloud c;
  c.resize(n);
  for (size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) c.positions[3 * i + k] = r.f32();
    for (int k = 0; k < 4; ++k) c.rotations[4 * i + k] = r.f32();
    for (int k = 0; k < 3; ++k) c.log_scales[3 * i + k] = r.f32();
    c.opacity_logits[i] = r.f32();
    for (int k = 0; k < kShPerGaussian; ++k) c.sh[kShPerGaussian * i + k] = r.f32();
  }
  return c;
}

void write_depth(const fs::path& path, const Image& depth) {
  if (depth.channels != 1) throw ContractError("write_depth: expected a one-channel image");
  Writer w;
  w.magic(kDepthMagic);
  w.u32(static_cast<uint32_t>(depth.width));
  w.u32(static_cast<uint32_t>(depth.height));
  for (double v : depth.data) w.f32(v);
  w.save(path);
}

Image read_depth(const fs::path& path) {
  Reader r(path);
  r.expect_magic(kDepthMagic);
  const uint32_t w = r.u32(), h = r.u32();
  if (r.remaining() != static_cast<size_t>(w) * h * 4) r.fail("size does not match header");
  Image d(static_cast<int>(w), static_cast<int>(h), 1);
  for (auto& v : d.data) v = r.f32();
  return d;
}

void write_features(const fs::path& path, const Image& f) {
  Writer w;
  w.magic(kFeatureMagic);
  w.u32(static_cast<uint32_t>(f.width));
  w.u32(static_cast<uint32_t>(f.height));
  w.u32(static_cast<uint32_t>(f.channels));
  for (double v : f.data) w.f32(v);
  w.save(path);
}

Image read_features(const fs::path& path) {
  Reader r(path);
  r.expect_magic(kFeatureMagic);
  const uint32_t w = r.u32(), h = r.u32(), c = r.u32();
  if (c == 0) r.fail("zero channels");
  if (r.remaining() != static_cast<size_t>(w) * h * c * 4) r.fail("size does not match header");
  Image f(static_cast<int>(w), static_cast<int>(h), static_cast<int>(c));
  for (auto& v : f.data) v = r.f32();
  return f;
}

void write_png(const fs::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ContractError("write_png: expected 1 or 3 channels");
  std::vector<uint8_t> px(img.data.size());
  for (size_t i = 0; i < px.size(); ++i) px[i] = to_byte(img.data[i]);
  write_png_bytes(path, img.width, img.height, img.channels, px);
}

void write_png(const fs::path& path, const Mask& mask) {
  std::vector<uint8_t> px(mask.data.size());
  for (size_t i = 0; i < px.size(); ++i) px[i] = mask.data[i] ? 255 : 0;
  write_png_bytes(path, mask.width, mask.height, 1, px);
}

Image read_png_rgb(const fs::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<uint8_t> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr))
    throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
  Image img(static_cast<int>(image.width), static_cast<int>(image.height), 3);
  for (size_t i = 0; i < px.size(); ++i) img.data[i] = px[i] / 255.0;
  return img;
}

void save_dataset(const fs::path& dir, const Dataset& ds, const std::string& preset) {
  std::error_code ec;
  fs::create_directories(dir / "images", ec);
  fs::create_directories(dir / "depth", ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  json cams = json::array(), train = json::array(), test = json::array();
  auto emit = [&](const View& v, json& split) {
    cams.push_back(camera_json(v));
    split.push_back(v.id);
    write_png(dir / "images" / (view_stem(v.id) + ".png"), v.rgb);
    if (!v.depth.empty()) write_depth(dir / "depth" / (view_stem(v.id) + ".icod"), v.depth);
  };
  for (const auto& v : ds.train) emit(v, train);
  for (const auto& v : ds.test) emit(v, test);
  write_text(dir / "cameras.json", cams.dump(2) + "\n");
  write_text(dir / "split.json", json{{"train", train}, {"test", test}}.dump(2) + "\n");
  json scene = {{"preset", preset}};
  if (ds.scene) {
    const auto& b = ds.scene->bounds;
    scene["seed"] = ds.scene->seed;
    scene["lighting"] = ds.scene->lighting.enabled;
    scene["bounds"] = {{"center", {b.center.x(), b.center.y(), b.center.z()}}, {"radius", b.radius}};
  }
  write_text(dir / "scene.json", scene.dump(2) + "\n");
}

DatasetOnDisk load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("dataset directory '" + dir.string() + "' does not exist");
  const json cams = read_json(dir / "cameras.json");
  const json split = read_json(dir / "split.json");
  std::map<int, View> views;
  try {
    for (const auto& c : cams) {
      View v;
      v.id = c.at("id").get<int>();
      v.K.fx = c.at("fx").get<double>();
      v.K.fy = c.at("fy").get<double>();
      v.K.cx = c.at("cx").get<double>();
      v.K.cy = c.at("cy").get<double>();
      v.K.width = c.at("width").get<int>();
      v.K.height = c.at("height").get<int>();
      const auto R = c.at("R").get<std::vector<double>>();
      const auto t = c.at("t").get<std::vector<double>>();
      if (R.size() != 9 || t.size() != 3) throw ConfigError("camera " + std::to_string(v.id) + ": R needs 9 and t 3 values");
      for (int r = 0; r < 3; ++r)
        for (int k = 0; k < 3; ++k) v.pose.rotation(r, k) = R[3 * r + k];
      v.pose.translation = Vec3(t[0], t[1], t[2]);
      v.K.validate();
      views[v.id] = std::move(v);
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed '" + (dir / "cameras.json").string() + "': " + e.what());
  }
  DatasetOnDisk out;
  auto take = [&](const char* key, std::vector<View>& dst) {
    if (!split.contains(key)) throw ConfigError("split.json lacks '" + std::string(key) + "'");
    for (const auto& idj : split.at(key)) {
      const int id = idj.get<int>();
      auto it = views.find(id);
      if (it == views.end()) throw ConfigError("split.json names unknown view " + std::to_string(id));
      View v = it->second;
      v.rgb = read_png_rgb(dir / "images" / (view_stem(id) + ".png"));
      if (!v.rgb.same_size(v.K.width, v.K.height))
        throw ConfigError("image of view " + std::to_string(id) + " does not match its camera size");
      const fs::path dp = dir / "depth" / (view_stem(id) + ".icod");
      if (fs::exists(dp)) {
        v.depth = read_depth(dp);
        if (!v.depth.same_size(v.K.width, v.K.height))
          throw ConfigError("depth of view " + std::to_string(id) + " does not match its camera size");
      }
      dst.push_back(std::move(v));
    }
  };
  take("train", out.dataset.train);
  take("test", out.dataset.test);
  const fs::path sp = dir / "scene.json";
  if (fs::exists(sp)) {
    const json s = read_json(sp);
    if (s.contains("bounds")) {
      const auto c = s["bounds"].at("center").get<std::vector<double>>();
      if (c.size() != 3) throw ConfigError("scene.json: bounds.center needs 3 values");
      out.bounds = BoundingSphere{Vec3(c[0], c[1], c[2]), s["bounds"].at("radius").get<double>()};
    }
  }
  return out;
}

BoundingSphere dataset_bounds(const DatasetOnDisk& d) {
  if (d.bounds) return *d.bounds;
  std::vector<Vec3> pts;
  for (const auto& v : d.dataset.train) {
    if (v.depth.empty()) continue;
    const CameraPose inv = v.pose.inverse();
    for (int y = 0; y < v.K.height; ++y)
      for (int x = 0; x < v.K.width; ++x)
        if (v.depth.at(x, y) > 0.0) pts.push_back(inv.apply(backproject(v.K, {double(x), double(y)}, v.depth.at(x, y))));
  }
  if (pts.empty()) throw ConfigError("dataset has neither scene.json bounds nor depth maps to infer them");
  Vec3 c = Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  double r = 0.0;
  for (const auto& p : pts) r = std::max(r, (p - c).norm());
  return {c, std::max(r, 1e-3)};
}

} // namespace icogs
