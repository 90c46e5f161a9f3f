#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ltdl/grouping.hpp"
#include "ltdl/solver.hpp"
#include "ltdl/tensor.hpp"

namespace ltdl {

class FormatError : public std::runtime_error {
public:
  FormatError(const std::string &msg, std::uint64_t offset)
      : std::runtime_error(msg + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::uint64_t offset() const { return offset_; }

private:
  std::uint64_t offset_;
};

inline constexpr std::uint16_t kContainerVersion = 1;

// Container layout, little endian:
//   "LTDL" | u16 version | u16 order | u32 dims[order] | f64 payload
std::vector<std::uint8_t> encode_tensor(const Tensor3 &t);
Tensor3 decode_tensor(const std::vector<std::uint8_t> &bytes);

void save_tensor(const Tensor3 &t, const std::filesystem::path &path);
Tensor3 load_tensor(const std::filesystem::path &path);

/// Raw little-endian float64 cube in tensor layout, with a text sidecar
/// `<path>.hdr` holding "L W H".
Tensor3 load_flat(const std::filesystem::path &path);

/// Loads a container file, or a flat cube when `<path>.hdr` exists.
Tensor3 load_cube(const std::filesystem::path &path);

/// Writes through a temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path &path, const std::string &bytes);

/// 16-bit binary PGM of one band, values clamped to [0,1] and scaled to 65535.
void export_band_pgm(const Msi &msi, std::size_t band, const std::filesystem::path &path);
/// Reads a 16-bit PGM back as values in [0,1] (rows x cols).
Matrix read_pgm16(const std::filesystem::path &path);
void write_pgm16(const Matrix &img, const std::filesystem::path &path);

/// Spatial atoms as win_rows x win_cols PGM tiles, spectral atoms as a
/// container file, both dictionaries as container files.
void export_dictionaries(const DictionaryPair &dict, std::size_t win_rows, std::size_t win_cols,
                         const std::filesystem::path &dir);

/// i.i.d. N(0, nu^2) noise on every entry; no clamping.
Msi add_gaussian_noise(const Msi &msi, double nu, std::uint64_t seed);

// key=value configuration for LtdlConfig.
std::vector<std::string> config_keys();
void apply_config_value(LtdlConfig &cfg, const std::string &key, const std::string &value);
std::map<std::string, std::string> parse_config_text(const std::string &text);
LtdlConfig load_config(const std::filesystem::path &path, LtdlConfig base = {});
std::string format_config(const LtdlConfig &cfg);
/// Defaults, then the file (if any), then flag overrides.
LtdlConfig resolve_config(const std::filesystem::path *file,
                          const std::map<std::string, std::string> &overrides);

} // namespace ltdl
