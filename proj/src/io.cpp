#include "ltdl/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>

namespace ltdl {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T> void put_le(std::vector<std::uint8_t> &out, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  U u;
  std::memcpy(&u, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(std::uint8_t((u >> (8 * i)) & 0xFF));
}

template <typename T> T get_le(const std::vector<std::uint8_t> &in, std::size_t at) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                               std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    u |= U(in[at + i]) << (8 * i);
  T v;
  std::memcpy(&v, &u, sizeof(T));
  return v;
}

std::string read_all(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

} // namespace

std::vector<std::uint8_t> encode_tensor(const Tensor3 &t) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + 12 + 8 * t.size());
  for (char c : std::string("LTDL"))
    out.push_back(std::uint8_t(c));
  put_le<std::uint16_t>(out, kContainerVersion);
  put_le<std::uint16_t>(out, 3);
  for (auto d : t.dims())
    put_le<std::uint32_t>(out, std::uint32_t(d));
  for (double v : t.data())
    put_le<double>(out, v);
  return out;
}

Tensor3 decode_tensor(const std::vector<std::uint8_t> &bytes) {
  if (bytes.size() < 8)
    throw FormatError("truncated header: expected at least 8 bytes, got " +
                          std::to_string(bytes.size()),
                      bytes.size());
  if (std::memcmp(bytes.data(), "LTDL", 4) != 0)
    throw FormatError("bad magic, expected \"LTDL\"", 0);
  const auto version = get_le<std::uint16_t>(bytes, 4);
  if (version != kContainerVersion)
    throw FormatError("unsupported container version " + std::to_string(version), 4);
  const auto order = get_le<std::uint16_t>(bytes, 6);
  if (order < 1 || order > 3)
    throw FormatError("unsupported tensor order " + std::to_string(order), 6);
  const std::size_t header = 8 + 4 * std::size_t(order);
  if (bytes.size() < header)
    throw FormatError("truncated dimension list: expected " + std::to_string(header) +
                          " header bytes, got " + std::to_string(bytes.size()),
                      bytes.size());
  Dims3 dims{1, 1, 1};
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < order; ++i) {
    dims[i] = get_le<std::uint32_t>(bytes, 8 + 4 * i);
    if (dims[i] == 0)
      throw FormatError("zero dimension in mode " + std::to_string(i + 1), 8 + 4 * i);
    count *= dims[i];
  }
  const std::uint64_t expected = header + 8 * count;
  if (bytes.size() != expected)
    throw FormatError("payload length mismatch: expected " + std::to_string(8 * count) +
                          " bytes, got " + std::to_string(bytes.size() - header),
                      std::min<std::uint64_t>(bytes.size(), expected));
  std::vector<double> data(count);
  for (std::size_t i = 0; i < count; ++i)
    data[i] = get_le<double>(bytes, header + 8 * i);
  return Tensor3(dims, std::move(data));
}

void write_file_atomic(const fs::path &path, const std::string &bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), std::streamsize(bytes.size()));
    if (!out)
      throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

void save_tensor(const Tensor3 &t, const fs::path &path) {
  const auto bytes = encode_tensor(t);
  write_file_atomic(path, std::string(bytes.begin(), bytes.end()));
}

Tensor3 load_tensor(const fs::path &path) {
  const std::string raw = read_all(path);
  return decode_tensor(std::vector<std::uint8_t>(raw.begin(), raw.end()));
}

Tensor3 load_flat(const fs::path &path) {
  fs::path hdr = path;
  hdr += ".hdr";
  std::istringstream hs(read_all(hdr));
  std::size_t l = 0, w = 0, h = 0;
  if (!(hs >> l >> w >> h) || l == 0 || w == 0 || h == 0)
    throw FormatError("sidecar " + hdr.string() + " must contain three positive integers L W H",
                      0);
  const std::string raw = read_all(path);
  const std::size_t expected = 8 * l * w * h;
  if (raw.size() != expected)
    throw FormatError("flat cube length mismatch: expected " + std::to_string(expected) +
                          " bytes, got " + std::to_string(raw.size()),
                      std::min(raw.size(), expected));
  const std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
  std::vector<double> data(l * w * h);
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = get_le<double>(bytes, 8 * i);
  return Tensor3({l, w, h}, std::move(data));
}

Tensor3 load_cube(const fs::path &path) {
  fs::path hdr = path;
  hdr += ".hdr";
  return fs::exists(hdr) ? load_flat(path) : load_tensor(path);
}

void write_pgm16(const Matrix &img, const fs::path &path) {
  std::ostringstream os;
  os << "P5\n" << img.cols() << ' ' << img.rows() << "\n65535\n";
  std::string bytes = os.str();
  for (Eigen::Index r = 0; r < img.rows(); ++r)
    for (Eigen::Index c = 0; c < img.cols(); ++c) {
      const double v = std::clamp(img(r, c), 0.0, 1.0);
      const auto q = std::uint16_t(std::lround(v * 65535.0));
      bytes.push_back(char(q >> 8));
      bytes.push_back(char(q & 0xFF));
    }
  write_file_atomic(path, bytes);
}

Matrix read_pgm16(const fs::path &path) {
  const std::string raw = read_all(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < raw.size()) {
      if (raw[pos] == '#') {
        while (pos < raw.size() && raw[pos] != '\n')
          ++pos;
      } else if (std::isspace(static_cast<unsigned char>(raw[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < raw.size() && !std::isspace(static_cast<unsigned char>(raw[pos])))
      ++pos;
    return raw.substr(start, pos - start);
  };
  if (token() != "P5")
    throw FormatError("not a binary PGM", 0);
  const long cols = std::stol(token()), rows = std::stol(token()), maxv = std::stol(token());
  ++pos;
  if (maxv != 65535)
    throw FormatError("expected 16-bit PGM with maxval 65535", pos);
  if (raw.size() - pos != std::size_t(rows * cols * 2))
    throw FormatError("PGM payload length mismatch", pos);
  Matrix img(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) {
      const auto hi = std::uint8_t(raw[pos++]);
      const auto lo = std::uint8_t(raw[pos++]);
      img(r, c) = double((hi << 8) | lo) / 65535.0;
    }
  return img;
}

void export_band_pgm(const Msi &msi, std::size_t band, const fs::path &path) {
  if (band >= msi.bands())
    throw std::invalid_argument("band " + std::to_string(band) + " out of range");
  write_pgm16(msi.cube.slice(band), path);
}

void export_dictionaries(const DictionaryPair &dict, std::size_t win_rows, std::size_t win_cols,
                         const fs::path &dir) {
  fs::create_directories(dir);
  auto as_tensor = [](const Matrix &m) {
    return Tensor3({std::size_t(m.rows()), std::size_t(m.cols()), 1},
                   std::vector<double>(m.data(), m.data() + m.size()));
  };
  save_tensor(as_tensor(dict.spatial), dir / "spatial.ltdl");
  save_tensor(as_tensor(dict.spectral), dir / "spectral.ltdl");
  if (std::size_t(dict.spatial.rows()) != win_rows * win_cols)
    throw std::invalid_argument("export_dictionaries: window does not match atom length");
  for (Eigen::Index j = 0; j < dict.spatial.cols(); ++j) {
    const Vector atom = dict.spatial.col(j);
    const double lo = atom.minCoeff(), hi = atom.maxCoeff();
    Matrix tile{Eigen::Index(win_rows), Eigen::Index(win_cols)};
    for (std::size_t c = 0; c < win_cols; ++c)
      for (std::size_t r = 0; r < win_rows; ++r)
        tile(Eigen::Index(r), Eigen::Index(c)) =
            hi > lo ? (atom(Eigen::Index(r + win_rows * c)) - lo) / (hi - lo) : 0.5;
    std::ostringstream name;
    name << "spatial_atom_" << std::setw(3) << std::setfill('0') << j << ".pgm";
    write_pgm16(tile, dir / name.str());
  }
}

Msi add_gaussian_noise(const Msi &msi, double nu, std::uint64_t seed) {
  if (!(nu >= 0.0))
    throw std::invalid_argument("noise level must be non-negative");
  Msi out = msi;
  if (nu == 0.0)
    return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, nu);
  for (double &v : out.cube.data())
    v += noise(rng);
  return out;
}

namespace {

template <typename T> T parse_number(const std::string &key, const std::string &value) {
  T out{};
  const char *first = value.data();
  const char *last = value.data() + value.size();
  if constexpr (std::is_floating_point_v<T>) {
    char *end = nullptr;
    out = std::strtod(first, &end);
    if (end != last || value.empty())
      throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "'");
  } else {
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last)
      throw std::invalid_argument("config key '" + key + "': cannot parse '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string &key, const std::string &v) {
  if (v == "1" || v == "true" || v == "yes")
    return true;
  if (v == "0" || v == "false" || v == "no")
    return false;
  throw std::invalid_argument("config key '" + key + "': expected a boolean, got '" + v + "'");
}

struct Field {
  std::function<void(LtdlConfig &, const std::string &)> set;
  std::function<std::string(const LtdlConfig &)> get;
};

// Shortest text that parses back to the same value.
template <typename T> std::string show(T v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

#define LTDL_FIELD(name, type)                                                                     \
  {                                                                                                \
    #name, Field {                                                                                 \
      [](LtdlConfig &c, const std::string &v) { c.name = parse_number<type>(#name, v); },          \
          [](const LtdlConfig &c) { return show(c.name); }                                         \
    }                                                                                              \
  }

const std::map<std::string, Field> &fields() {
  static const std::map<std::string, Field> table = {
      LTDL_FIELD(lambda_s, double),
      LTDL_FIELD(lambda_r, double),
      LTDL_FIELD(rho0, double),
      LTDL_FIELD(mu, double),
      LTDL_FIELD(rho_max, double),
      LTDL_FIELD(max_outer_iters, int),
      LTDL_FIELD(tol_residual, double),
      LTDL_FIELD(win_rows, std::size_t),
      LTDL_FIELD(win_cols, std::size_t),
      LTDL_FIELD(step_rows, std::size_t),
      LTDL_FIELD(step_cols, std::size_t),
      LTDL_FIELD(tau_a, double),
      LTDL_FIELD(tau_e, double),
      LTDL_FIELD(k_clusters, std::size_t),
      LTDL_FIELD(kmeans_iters, int),
      LTDL_FIELD(noise_sigma, double),
      LTDL_FIELD(energy_frac, double),
      LTDL_FIELD(hooi_iters, int),
      LTDL_FIELD(hooi_tol, double),
      LTDL_FIELD(newton_iters, int),
      LTDL_FIELD(seed, std::uint64_t),
      {"update_dictionaries",
       Field{[](LtdlConfig &c, const std::string &v) {
               c.update_dictionaries = parse_bool("update_dictionaries", v);
             },
             [](const LtdlConfig &c) { return std::string(c.update_dictionaries ? "true" : "false"); }}},
  };
  return table;
}

#undef LTDL_FIELD

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

} // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto &[k, _] : fields())
    keys.push_back(k);
  return keys;
}

void apply_config_value(LtdlConfig &cfg, const std::string &key, const std::string &value) {
  const auto it = fields().find(key);
  if (it == fields().end())
    throw std::invalid_argument("unknown config key '" + key + "'");
  it->second.set(cfg, trim(value));
}

std::map<std::string, std::string> parse_config_text(const std::string &text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (fields().find(key) == fields().end())
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": unknown key '" +
                                  key + "'");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

LtdlConfig load_config(const fs::path &path, LtdlConfig base) {
  for (const auto &[k, v] : parse_config_text(read_all(path)))
    apply_config_value(base, k, v);
  return base;
}

std::string format_config(const LtdlConfig &cfg) {
  std::ostringstream os;
  for (const auto &[k, f] : fields())
    os << k << '=' << f.get(cfg) << '\n';
  return os.str();
}

LtdlConfig resolve_config(const fs::path *file,
                          const std::map<std::string, std::string> &overrides) {
  LtdlConfig cfg;
  if (file)
    cfg = load_config(*file, cfg);
  for (const auto &[k, v] : overrides)
    apply_config_value(cfg, k, v);
  return cfg;
}

} // namespace ltdl
