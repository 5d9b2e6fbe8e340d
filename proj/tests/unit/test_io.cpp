#include <doctest.h>

#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <random>

#include "icogs/config.hpp"
#include "icogs/io.hpp"
#include "icogs/pipeline.hpp"

using namespace icogs;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("icogs_test_" + name + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

uint32_t u32_at(const std::string& s, size_t off) {
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(s[off + i]);
  return v;
}

float f32_at(const std::string& s, size_t off) {
  const uint32_t bits = u32_at(s, off);
  float f;
  std::memcpy(&f, &bits, sizeof f);
  return f;
}

} // namespace

TEST_CASE("checkpoint byte layout and round trip") {
  TempDir dir("ckpt");
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  GaussianCloud c;
  for (int i = 0; i < 7; ++i)
    c.push_back(Vec3(u(rng), u(rng), 3 + u(rng)), Vec4(1, u(rng), u(rng), u(rng)).normalized(),
                Vec3(u(rng) - 3, u(rng) - 3, u(rng) - 3), u(rng), Vec3(0.5 + 0.3 * u(rng), 0.4, 0.6));
  for (auto& v : c.sh) v += 0.1 * u(rng);
  const fs::path p = dir.path / "m.icogs";
  write_checkpoint(p, c);
  const std::string bytes = slurp(p);
  REQUIRE(bytes.size() == 16 + 7 * 23 * 4);
  CHECK(bytes.compare(0, 8, std::string("ICOGS01\0", 8)) == 0);
  CHECK(u32_at(bytes, 8) == 7);
  CHECK(u32_at(bytes, 12) == 4);
  // Record 2: mu(3) q(4) log_scale(3) opacity(1) sh(12).
  const size_t rec = 16 + 2 * 23 * 4;
  CHECK(f32_at(bytes, rec) == static_cast<float>(c.positions[6]));
  CHECK(f32_at(bytes, rec + 3 * 4) == static_cast<float>(c.rotations[8]));
  CHECK(f32_at(bytes, rec + 7 * 4) == static_cast<float>(c.log_scales[6]));
  CHECK(f32_at(bytes, rec + 10 * 4) == static_cast<float>(c.opacity_logits[2]));
  CHECK(f32_at(bytes, rec + 11 * 4 + 5 * 4) == static_cast<float>(c.sh[24 + 5]));

  const GaussianCloud back = read_checkpoint(p);
  REQUIRE(back.size() == 7);
  for (size_t i = 0; i < c.positions.size(); ++i) CHECK(back.positions[i] == static_cast<float>(c.positions[i]));
  for (size_t i = 0; i < c.sh.size(); ++i) CHECK(back.sh[i] == static_cast<float>(c.sh[i]));
  write_checkpoint(dir.path / "again.icogs", back);
  CHECK(slurp(dir.path / "again.icogs") == bytes);

  write_checkpoint(dir.path / "empty.icogs", GaussianCloud{});
  CHECK(read_checkpoint(dir.path / "empty.icogs").size() == 0);

  std::ofstream(dir.path / "bad.icogs", std::ios::binary) << "NOTACKPT";
  CHECK_THROWS(read_checkpoint(dir.path / "bad.icogs"));
  std::string truncated = bytes.substr(0, bytes.size() - 5);
  std::ofstream(dir.path / "short.icogs", std::ios::binary) << truncated;
  CHECK_THROWS(read_checkpoint(dir.path / "short.icogs"));
  CHECK_THROWS(read_checkpoint(dir.path / "missing.icogs"));
}

TEST_CASE("depth and feature maps round trip") {
  TempDir dir("maps");
  Image d(5, 3, 1);
  for (size_t i = 0; i < d.data.size(); ++i) d.data[i] = 0.25 * i;
  write_depth(dir.path / "d.icod", d);
  const std::string bytes = slurp(dir.path / "d.icod");
  CHECK(bytes.size() == 16 + 15 * 4);
  CHECK(bytes.compare(0, 8, std::string("ICODPTH\0", 8)) == 0);
  CHECK(u32_at(bytes, 8) == 5);
  CHECK(u32_at(bytes, 12) == 3);
  CHECK(f32_at(bytes, 16 + 7 * 4) == 1.75f);
  CHECK(read_depth(dir.path / "d.icod").data == d.data);

  Image f(4, 2, 8);
  for (size_t i = 0; i < f.data.size(); ++i) f.data[i] = 0.125 * static_cast<double>(i % 9) - 0.5;
  write_features(dir.path / "f.icof", f);
  const std::string fb = slurp(dir.path / "f.icof");
  CHECK(fb.compare(0, 8, std::string("ICOFEAT\0", 8)) == 0);
  CHECK(u32_at(fb, 16) == 8);
  CHECK(fb.size() == 20 + 64 * 4);
  const Image fr = read_features(dir.path / "f.icof");
  CHECK(fr.channels == 8);
  CHECK(fr.data == f.data);
  CHECK_THROWS(read_features(dir.path / "d.icod"));
}

TEST_CASE("png round trip quantizes to 8 bits") {
  TempDir dir("png");
  Image img(6, 4, 3);
  for (size_t i = 0; i < img.data.size(); ++i) img.data[i] = (i % 256) / 255.0;
  img.data[0] = 1.7; // clamped
  write_png(dir.path / "a.png", img);
  const Image back = read_png_rgb(dir.path / "a.png");
  CHECK(back.data[0] == 1.0);
  for (size_t i = 1; i < img.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));
  Mask m(3, 2);
  m.set(1, 1, true);
  write_png(dir.path / "m.png", m);
  const Image mb = read_png_rgb(dir.path / "m.png");
  CHECK(mb.at(1, 1, 0) == 1.0);
  CHECK(mb.at(0, 0, 0) == 0.0);
}

TEST_CASE("generated datasets are byte-identical and round trip") {
  TempDir a("gen_a"), b("gen_b");
  GenOptions o;
  o.preset = "plane3";
  o.views = 3;
  o.seed = 7;
  o.image_size = 24;
  o.out_dir = a.path.string();
  cmd_gen(o);
  o.out_dir = b.path.string();
  cmd_gen(o);
  size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), a.path);
    CHECK(slurp(e.path()) == slurp(b.path / rel));
  }
  CHECK(files >= 3 + 12);
  CHECK(fs::exists(a.path / "cameras.json"));

  const nlohmann::json cams = nlohmann::json::parse(slurp(a.path / "cameras.json"));
  REQUIRE(cams.size() == 6);
  for (const char* k : {"id", "fx", "fy", "cx", "cy", "width", "height", "R", "t"}) CHECK(cams[0].contains(k));
  CHECK(cams[0]["R"].size() == 9);
  const nlohmann::json split = nlohmann::json::parse(slurp(a.path / "split.json"));
  CHECK(split["train"].size() == 3);
  CHECK(split["test"].size() == 3);

  const DatasetOnDisk d = load_dataset(a.path);
  REQUIRE(d.dataset.train.size() == 3);
  REQUIRE(d.bounds.has_value());
  const Dataset ref = generate_dataset("plane3", 3, 7, {24, false});
  for (size_t i = 0; i < 3; ++i) {
    CHECK(d.dataset.train[i].pose.rotation == ref.train[i].pose.rotation);
    CHECK((d.dataset.train[i].pose.translation - ref.train[i].pose.translation).norm() <= 1e-6);
    for (size_t p = 0; p < ref.train[i].depth.data.size(); ++p)
      CHECK(d.dataset.train[i].depth.data[p] == static_cast<float>(ref.train[i].depth.data[p]));
    for (size_t p = 0; p < ref.train[i].rgb.data.size(); ++p)
      CHECK(std::abs(d.dataset.train[i].rgb.data[p] - ref.train[i].rgb.data[p]) <= 0.5 / 255 + 1e-12);
  }

  o.views = 1;
  CHECK_THROWS_AS(cmd_gen(o), ConfigError);
  o.views = 3;
  o.preset = "nope";
  CHECK_THROWS_AS(cmd_gen(o), ConfigError);
}

TEST_CASE("missing dataset errors name the path") {
  try {
    load_dataset("/nonexistent/icogs/data");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/icogs/data") != std::string::npos);
  }
  TempDir dir("partial");
  std::ofstream(dir.path / "cameras.json") << "[]";
  CHECK_THROWS_AS(load_dataset(dir.path), ConfigError);
}

TEST_CASE("empty config is valid and carries every default") {
  const RunConfig c = parse_run_config("");
  const RunConfig d = parse_run_config("{}");
  CHECK(dump_run_config(c) == dump_run_config(d));
  CHECK(c.train.lambda_mpc == 0.1);
  CHECK(c.train.lambda_smooth == 0.01);
  CHECK(c.train.lambda_app == 1.0);
  CHECK(c.train.total_iters == 2000);
  CHECK(c.output == "run");
  const nlohmann::json j = nlohmann::json::parse(dump_run_config(c));
  for (const char* k : {"dataset", "output", "image_size", "init", "lambda_mpc", "lambda_smooth", "lambda_app",
                        "total_iters", "stage2_start", "stage3_start", "k", "m", "tau_factor", "alpha_edge",
                        "virtual_radius", "n_virtual", "seed", "deterministic", "threads", "log_every", "densify", "lr"})
    CHECK(j.contains(k));
  // The dump parses back to the same config.
  CHECK(dump_run_config(parse_run_config(dump_run_config(c))) == dump_run_config(c));
}

TEST_CASE("unknown config keys are listed") {
  try {
    parse_run_config(R"({"lambda_mpc": 0.2, "bogus": 1, "lr": {"nope": 2}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("bogus") != std::string::npos);
    CHECK(msg.find("lr.nope") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config("{}", {"lambda_nope=1"}), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json"), ConfigError);
}

TEST_CASE("overrides and type errors") {
  const RunConfig c = parse_run_config(R"({"lambda_app": 0.5, "lr": {"opacity": 0.1}})",
                                       {"lambda_app=0", "lr.opacity=0.2", "dataset=data/x", "init.mode=\"random_depth\"",
                                        "total_iters=50", "stage2_start=10", "stage3_start=20", "cycle_filter=false"});
  CHECK(c.train.lambda_app == 0.0);
  CHECK(c.train.lr.opacity == 0.2);
  CHECK(c.dataset == "data/x");
  CHECK(c.init.mode == InitMode::kRandomDepth);
  CHECK(c.train.total_iters == 50);
  CHECK_FALSE(c.train.cycle_filter);
  try {
    parse_run_config(R"({"total_iters": "many"})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("total_iters") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_run_config("{}", {"no_equals_sign"}), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"stage2_start": 900, "stage3_start": 100})"), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"init": {"mode": "psychic"}})"), ConfigError);
  CHECK_THROWS_AS(load_run_config("/nonexistent/cfg.json"), ConfigError);
}
