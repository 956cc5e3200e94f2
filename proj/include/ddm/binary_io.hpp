#pragma once

// Container shared by dataset caches, checkpoints and sample files:
//
//   <MAGIC>\n
//   version=1\n
//   key=value\n ...
//   values=<N>\n
//   \n
//   <N little-endian IEEE-754 float64 values>
//   <8-byte little-endian FNV-1a 64 checksum of the value blob>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ddm {

inline constexpr int kFormatVersion = 1;

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;
/// Hash of the little-endian byte image of a value sequence.
std::uint64_t fnv1a64(std::span<const double> values) noexcept;

std::string hex64(std::uint64_t v);

/// Shortest text that parses back to the identical double.
std::string format_double(double v);
double parse_double(std::string_view text, std::string_view what);
long long parse_int(std::string_view text, std::string_view what);
std::vector<long long> parse_int_list(std::string_view text, std::string_view what);
std::string join_ints(std::span<const long long> values);

struct BlobFile {
  std::string magic;
  int version = kFormatVersion;
  std::vector<std::pair<std::string, std::string>> fields;
  std::vector<double> values;

  void set(std::string key, std::string value);
  bool has(std::string_view key) const;
  const std::string& get(std::string_view key) const;
};

void write_blob_file(const std::filesystem::path& path, const BlobFile& file);

/// Throws Error{Format} on a wrong magic, Error{Version} on version != 1,
/// Error{Checksum} on truncation or blob corruption.
BlobFile read_blob_file(const std::filesystem::path& path, std::string_view expected_magic);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace ddm
