#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "ltdl/io.hpp"
#include "ltdl/lowrank.hpp"
#include "ltdl/synth.hpp"
#include "support.hpp"

using namespace ltdl;
namespace fs = std::filesystem;
using testing_support::random_tensor;

namespace {

fs::path scratch_dir(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("ltdl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path &p, const std::vector<std::uint8_t> &b) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char *>(b.data()), std::streamsize(b.size()));
}

std::string format_error_of(const std::vector<std::uint8_t> &bytes) {
  try {
    decode_tensor(bytes);
  } catch (const FormatError &e) {
    return e.what();
  }
  return {};
}

} // namespace

TEST_CASE("container roundtrip is bit exact") {
  const fs::path dir = scratch_dir("roundtrip");
  Tensor3 t = random_tensor({3, 5, 4}, 1);
  t(0, 0, 0) = -0.0;
  t(1, 0, 0) = 1e-310; // subnormal
  t(2, 0, 0) = std::numeric_limits<double>::max();
  save_tensor(t, dir / "t.ltdl");
  const Tensor3 back = load_tensor(dir / "t.ltdl");
  REQUIRE(back.dims() == t.dims());
  CHECK(std::memcmp(back.data().data(), t.data().data(), t.size() * sizeof(double)) == 0);
  CHECK(std::signbit(back(0, 0, 0)));
  CHECK(fs::exists(dir / "t.ltdl"));
  CHECK_FALSE(fs::exists(dir / "t.ltdl.tmp"));
}

TEST_CASE("container layout") {
  const Tensor3 t({2, 2, 2}, 1.5);
  const auto bytes = encode_tensor(t);
  CHECK(bytes.size() == 84);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "LTDL");
  CHECK(bytes[4] == 1);
  CHECK(bytes[5] == 0);
  CHECK(bytes[6] == 3);
  CHECK(bytes[8] == 2);
  // 1.5 = 0x3FF8000000000000, little endian
  CHECK(bytes[20] == 0x00);
  CHECK(bytes[26] == 0xF8);
  CHECK(bytes[27] == 0x3F);
}

TEST_CASE("malformed containers report byte offsets") {
  auto bytes = encode_tensor(random_tensor({2, 3, 2}, 2));
  SUBCASE("truncated payload names expected and actual lengths") {
    bytes.resize(bytes.size() - 8);
    const std::string msg = format_error_of(bytes);
    CHECK(msg.find("expected 96") != std::string::npos);
    CHECK(msg.find("88") != std::string::npos);
    CHECK(msg.find("at byte") != std::string::npos);
  }
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK(format_error_of(bytes).find("magic") != std::string::npos);
  }
  SUBCASE("bad version") {
    bytes[4] = 9;
    CHECK(format_error_of(bytes).find("at byte 4") != std::string::npos);
  }
  SUBCASE("short header") {
    bytes.resize(5);
    CHECK_FALSE(format_error_of(bytes).empty());
  }
  SUBCASE("truncated dims") {
    bytes.resize(14);
    CHECK_FALSE(format_error_of(bytes).empty());
  }
  CHECK_THROWS(load_tensor("/nonexistent/file.ltdl"));
}

TEST_CASE("flat cube import") {
  const fs::path dir = scratch_dir("flat");
  const Tensor3 t = random_tensor({4, 3, 2}, 3);
  {
    std::ofstream out(dir / "cube.raw", std::ios::binary);
    const auto enc = encode_tensor(t);
    out.write(reinterpret_cast<const char *>(enc.data() + 20), std::streamsize(enc.size() - 20));
    std::ofstream hdr(dir / "cube.raw.hdr");
    hdr << "4 3 2\n";
  }
  CHECK(load_flat(dir / "cube.raw") == t);
  CHECK(load_cube(dir / "cube.raw") == t);
  save_tensor(t, dir / "c.ltdl");
  CHECK(load_cube(dir / "c.ltdl") == t);
  {
    std::ofstream hdr(dir / "cube.raw.hdr");
    hdr << "4 3 3\n";
  }
  CHECK_THROWS_AS(load_flat(dir / "cube.raw"), FormatError);
}

TEST_CASE("band export to PGM") {
  const fs::path dir = scratch_dir("pgm");
  Msi m{Tensor3({5, 4, 3})};
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c) {
      m.cube(r, c, 1) = 1.0;
      m.cube(r, c, 2) = double(r * 4 + c) / 19.0;
    }
  export_band_pgm(m, 0, dir / "zero.pgm");
  export_band_pgm(m, 1, dir / "one.pgm");
  export_band_pgm(m, 2, dir / "ramp.pgm");
  CHECK(read_pgm16(dir / "zero.pgm").cwiseAbs().maxCoeff() == 0.0);
  CHECK(read_pgm16(dir / "one.pgm").minCoeff() == 1.0);
  const std::string raw = slurp(dir / "one.pgm");
  CHECK(raw.rfind("P5", 0) == 0);
  CHECK(static_cast<unsigned char>(raw[raw.size() - 1]) == 0xFF);
  const Matrix ramp = read_pgm16(dir / "ramp.pgm");
  REQUIRE(ramp.rows() == 5);
  REQUIRE(ramp.cols() == 4);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      CHECK(std::abs(ramp(Eigen::Index(r), Eigen::Index(c)) - m.cube(r, c, 2)) <= 0.5 / 65535.0 + 1e-15);

  Msi out_of_range{Tensor3({2, 2, 1}, 1.7)};
  out_of_range.cube(0, 0, 0) = -0.3;
  export_band_pgm(out_of_range, 0, dir / "clamp.pgm");
  const Matrix clamped = read_pgm16(dir / "clamp.pgm");
  CHECK(clamped(0, 0) == 0.0);
  CHECK(clamped(1, 1) == 1.0);
  CHECK_THROWS_AS(export_band_pgm(m, 3, dir / "x.pgm"), std::invalid_argument);
}

TEST_CASE("dictionary export") {
  const fs::path dir = scratch_dir("dict");
  DictionaryPair d;
  d.spatial = testing_support::random_matrix(6, 9, 1).colwise().normalized();
  d.spectral = testing_support::random_matrix(4, 6, 2).colwise().normalized();
  export_dictionaries(d, 3, 2, dir);
  const Tensor3 sp = load_tensor(dir / "spatial.ltdl");
  CHECK(sp.dims() == Dims3{6, 9, 1});
  CHECK(Matrix(sp.slice(0)) == d.spatial);
  CHECK(load_tensor(dir / "spectral.ltdl").dims() == Dims3{4, 6, 1});
  CHECK(fs::exists(dir / "spatial_atom_008.pgm"));
  CHECK(read_pgm16(dir / "spatial_atom_000.pgm").rows() == 3);
  CHECK_THROWS_AS(export_dictionaries(d, 4, 2, dir), std::invalid_argument);
}

TEST_CASE("gaussian noise") {
  const Msi zero{Tensor3({64, 64, 64})};
  CHECK(add_gaussian_noise(zero, 0.0, 1).cube == zero.cube);
  const Msi a = add_gaussian_noise(zero, 0.1, 7), b = add_gaussian_noise(zero, 0.1, 7);
  CHECK(a.cube == b.cube);
  CHECK(add_gaussian_noise(zero, 0.1, 8).cube != a.cube);
  const double mean = a.cube.flat().mean();
  const double sd = std::sqrt((a.cube.flat().array() - mean).square().mean());
  CHECK(sd == doctest::Approx(0.1).epsilon(0.01));
  // not clamped
  CHECK(a.cube.flat().minCoeff() < 0.0);
  CHECK_THROWS_AS(add_gaussian_noise(zero, -0.1, 1), std::invalid_argument);
}

TEST_CASE("gaussian noise over 512^3 draws") {
  const Msi zero{Tensor3({512, 512, 512})};
  const Msi n = add_gaussian_noise(zero, 0.05, 3);
  const double mean = n.cube.flat().mean();
  const double sd = std::sqrt((n.cube.flat().array() - mean).square().mean());
  CHECK(sd == doctest::Approx(0.05).epsilon(0.01));
}

TEST_CASE("config parsing") {
  const auto kv = parse_config_text("# comment\n mu = 1.4 \n\nseed=12 # trailing\n");
  CHECK(kv.size() == 2);
  CHECK(kv.at("mu") == "1.4");
  CHECK(kv.at("seed") == "12");
  CHECK_THROWS_AS(parse_config_text("bogus=1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_config_text("mu\n"), std::invalid_argument);
  LtdlConfig cfg;
  CHECK_THROWS_AS(apply_config_value(cfg, "mu", "fast"), std::invalid_argument);
  CHECK_THROWS_AS(apply_config_value(cfg, "win_rows", "7.5"), std::invalid_argument);
  CHECK_THROWS_AS(apply_config_value(cfg, "update_dictionaries", "maybe"), std::invalid_argument);
  apply_config_value(cfg, "update_dictionaries", "false");
  CHECK_FALSE(cfg.update_dictionaries);
}

TEST_CASE("every config field is settable and formatted back") {
  LtdlConfig cfg;
  cfg.lambda_s = 0.25;
  cfg.win_rows = 5;
  cfg.seed = 99;
  cfg.update_dictionaries = false;
  LtdlConfig back;
  for (const auto &[k, v] : parse_config_text(format_config(cfg)))
    apply_config_value(back, k, v);
  CHECK(format_config(back) == format_config(cfg));
  CHECK(parse_config_text(format_config(cfg)).size() == config_keys().size());
}

TEST_CASE("config precedence is flag over file over default") {
  // Two non-default values per key: one for the file and one for the flag.
  const std::map<std::string, std::pair<std::string, std::string>> values = {
      {"lambda_s", {"0.2", "0.3"}},      {"lambda_r", {"20", "30"}},
      {"rho0", {"0.02", "0.03"}},        {"mu", {"1.2", "1.4"}},
      {"rho_max", {"1000", "2000"}},     {"max_outer_iters", {"11", "12"}},
      {"tol_residual", {"0.001", "0.002"}}, {"win_rows", {"5", "6"}},
      {"win_cols", {"5", "6"}},          {"step_rows", {"2", "4"}},
      {"step_cols", {"2", "4"}},         {"tau_a", {"1.2", "2"}},
      {"tau_e", {"1.2", "2"}},           {"k_clusters", {"3", "4"}},
      {"kmeans_iters", {"5", "6"}},      {"noise_sigma", {"0.05", "0.07"}},
      {"energy_frac", {"0.9", "0.95"}},  {"hooi_iters", {"5", "6"}},
      {"hooi_tol", {"0.001", "0.002"}},  {"newton_iters", {"10", "20"}},
      {"seed", {"5", "6"}},              {"update_dictionaries", {"false", "true"}}};
  REQUIRE(values.size() == config_keys().size());
  const fs::path dir = scratch_dir("precedence");
  const auto defaults = parse_config_text(format_config(LtdlConfig{}));
  for (const auto &key : config_keys()) {
    CAPTURE(key);
    REQUIRE(values.count(key) == 1);
    const auto &[file_v, flag_v] = values.at(key);
    const fs::path file = dir / (key + ".cfg");
    write_file_atomic(file, key + "=" + file_v + "\n");
    auto get = [&](const LtdlConfig &c) { return parse_config_text(format_config(c)).at(key); };

    const LtdlConfig none = resolve_config(nullptr, {});
    const LtdlConfig from_file = resolve_config(&file, {});
    const LtdlConfig from_flag = resolve_config(&file, {{key, flag_v}});
    const LtdlConfig flag_only = resolve_config(nullptr, {{key, flag_v}});
    CHECK(get(none) == defaults.at(key));
    CHECK(get(from_file) != defaults.at(key));
    CHECK(get(from_file) == get(resolve_config(nullptr, {{key, file_v}})));
    CHECK(get(from_flag) == get(flag_only));
    CHECK(get(from_flag) != get(from_file));
    // other keys untouched
    for (const auto &other : config_keys())
      if (other != key)
        CHECK(parse_config_text(format_config(from_flag)).at(other) == defaults.at(other));
  }
}

TEST_CASE("synthetic data generation") {
  SynthSpec spec;
  spec.groups = 20;
  spec.seed = 4;
  const SynthData d = generate_synthetic(spec);
  CHECK(d.truth.spatial.rows() == 10);
  CHECK(d.truth.spatial.cols() == 12);
  CHECK(d.truth.spectral.cols() == 12);
  CHECK((d.truth.spatial.colwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
  REQUIRE(d.observed.size() == 20);
  for (std::size_t g = 0; g < 20; ++g) {
    CHECK(d.codes[g].dims() == Dims3{12, 12, 12});
    CHECK(d.observed[g].dims() == Dims3{10, 10, 12});
    const Tensor3 rec = mode_product(mode_product(d.codes[g], d.truth.spatial, 1), d.truth.spectral, 2);
    CHECK((rec.flat() - d.observed[g].flat()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(singular_values(unfold(d.clean[g], 3))(2) < 1e-10);
    std::size_t active = 0;
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t j = 0; j < 12; ++j) {
        double e = 0.0;
        for (std::size_t k = 0; k < 12; ++k)
          e += std::abs(d.codes[g](i, j, k));
        active += e > 0.0;
      }
    CHECK(active <= 6);
    CHECK(d.support[g].size() == spec.inner_width);
    const RankTriple r = estimate_ranks(d.clean[g], 0.0, 1.0);
    CHECK(r[0] <= 6);
    CHECK(r[1] <= 6);
    CHECK(r[2] <= 2);
  }
  const SynthData again = generate_synthetic(spec);
  CHECK(again.observed[3] == d.observed[3]);

  spec.noise = 0.1;
  const SynthData noisy = generate_synthetic(spec);
  CHECK((noisy.observed[0].flat() - noisy.clean[0].flat()).norm() > 0.0);
  spec.inner_width = 7;
  CHECK_THROWS_AS(generate_synthetic(spec), std::invalid_argument);
}

TEST_CASE("synthetic scene") {
  const Msi a = synthetic_cube(24, 20, 6, 1);
  CHECK(a.cube.dims() == Dims3{24, 20, 6});
  CHECK(a.cube.flat().minCoeff() >= 0.0);
  CHECK(a.cube.flat().maxCoeff() <= 1.0);
  CHECK(synthetic_cube(24, 20, 6, 1).cube == a.cube);
  CHECK(synthetic_cube(24, 20, 6, 2).cube != a.cube);
  CHECK_THROWS_AS(synthetic_cube(0, 2, 2, 1), std::invalid_argument);
}
