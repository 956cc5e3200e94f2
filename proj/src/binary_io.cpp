#include "ddm/binary_io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ddm/error.hpp"

namespace ddm {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid_argument";
    case ErrorCode::Shape: return "shape";
    case ErrorCode::Io: return "io";
    case ErrorCode::Format: return "format";
    case ErrorCode::Version: return "version";
    case ErrorCode::Checksum: return "checksum";
    case ErrorCode::Config: return "config";
    case ErrorCode::Diverged: return "diverged";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::Internal: return "internal";
  }
  return "unknown";
}

namespace {

constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

void append_u64(std::string& out, std::uint64_t v) {
  v = to_le(v);
  char buf[8];
  std::memcpy(buf, &v, 8);
  out.append(buf, 8);
}

std::uint64_t load_u64(const char* p) {
  std::uint64_t v;
  std::memcpy(&v, p, 8);
  return to_le(v);
}

}  // namespace

std::uint64_t fnv1a64(std::span<const std::byte> bytes, std::uint64_t basis) noexcept {
  std::uint64_t h = basis;
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= kFnvPrime;
  }
  return h;
}

std::uint64_t fnv1a64(std::string_view text) noexcept {
  return fnv1a64(std::as_bytes(std::span(text.data(), text.size())));
}

std::uint64_t fnv1a64(std::span<const double> values) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : values) {
    const std::uint64_t bits = to_le(std::bit_cast<std::uint64_t>(v));
    std::byte b[8];
    std::memcpy(b, &bits, 8);
    h = fnv1a64(std::span<const std::byte>(b, 8), h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    fail(ErrorCode::Format, std::string(what) + ": expected a real number, got '" + std::string(text) + "'");
  return v;
}

long long parse_int(std::string_view text, std::string_view what) {
  long long v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    fail(ErrorCode::Format, std::string(what) + ": expected an integer, got '" + std::string(text) + "'");
  return v;
}

std::vector<long long> parse_int_list(std::string_view text, std::string_view what) {
  std::vector<long long> out;
  if (text.empty()) return out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = text.find(',', pos);
    out.push_back(parse_int(text.substr(pos, comma - pos), what));
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

std::string join_ints(std::span<const long long> values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(values[i]);
  }
  return out;
}

void BlobFile::set(std::string key, std::string value) {
  for (auto& [k, v] : fields) {
    if (k == key) {
      v = std::move(value);
      return;
    }
  }
  fields.emplace_back(std::move(key), std::move(value));
}

bool BlobFile::has(std::string_view key) const {
  for (const auto& [k, v] : fields)
    if (k == key) return true;
  return false;
}

const std::string& BlobFile::get(std::string_view key) const {
  for (const auto& [k, v] : fields)
    if (k == key) return v;
  fail(ErrorCode::Format, "missing header field '" + std::string(key) + "'");
}

void write_blob_file(const std::filesystem::path& path, const BlobFile& file) {
  std::string out;
  out.reserve(256 + 8 * file.values.size());
  out += file.magic;
  out += '\n';
  out += "version=" + std::to_string(file.version) + '\n';
  for (const auto& [k, v] : file.fields) {
    require(k.find_first_of("=\n") == std::string::npos && v.find('\n') == std::string::npos,
            ErrorCode::InvalidArgument, "header field '" + k + "' is not a single key=value line");
    out += k + '=' + v + '\n';
  }
  out += "values=" + std::to_string(file.values.size()) + "\n\n";
  const std::size_t blob_start = out.size();
  for (double v : file.values) append_u64(out, std::bit_cast<std::uint64_t>(v));
  const auto blob = std::as_bytes(std::span(out.data() + blob_start, out.size() - blob_start));
  append_u64(out, fnv1a64(blob));

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

BlobFile read_blob_file(const std::filesystem::path& path, std::string_view expected_magic) {
  const std::string raw = read_text_file(path);
  const std::string where = "'" + path.string() + "'";

  std::size_t pos = 0;
  auto next_line = [&](std::string& line) {
    const auto nl = raw.find('\n', pos);
    if (nl == std::string::npos) fail(ErrorCode::Checksum, where + ": truncated header");
    line = raw.substr(pos, nl - pos);
    pos = nl + 1;
  };

  BlobFile file;
  std::string line;
  next_line(line);
  if (line != expected_magic)
    fail(ErrorCode::Format, where + ": bad magic '" + line + "', expected '" + std::string(expected_magic) + "'");
  file.magic = line;

  next_line(line);
  if (line.rfind("version=", 0) != 0) fail(ErrorCode::Format, where + ": missing version line");
  file.version = static_cast<int>(parse_int(std::string_view(line).substr(8), "version"));
  if (file.version != kFormatVersion)
    fail(ErrorCode::Version, where + ": unsupported format version " + std::to_string(file.version) +
                                 " (this build reads version " + std::to_string(kFormatVersion) + ")");

  long long count = -1;
  while (true) {
    next_line(line);
    if (line.empty()) break;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::Format, where + ": malformed header line '" + line + "'");
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (key == "values") {
      count = parse_int(value, "values");
    } else {
      file.fields.emplace_back(std::move(key), std::move(value));
    }
  }
  if (count < 0) fail(ErrorCode::Format, where + ": missing values count");

  const std::size_t blob_bytes = static_cast<std::size_t>(count) * 8;
  if (raw.size() < pos + blob_bytes + 8) fail(ErrorCode::Checksum, where + ": truncated blob");
  if (raw.size() > pos + blob_bytes + 8) fail(ErrorCode::Format, where + ": trailing bytes after checksum");

  const auto blob = std::as_bytes(std::span(raw.data() + pos, blob_bytes));
  const std::uint64_t stored = load_u64(raw.data() + pos + blob_bytes);
  if (fnv1a64(blob) != stored) fail(ErrorCode::Checksum, where + ": checksum mismatch");

  file.values.resize(static_cast<std::size_t>(count));
  for (std::size_t i = 0; i < file.values.size(); ++i)
    file.values[i] = std::bit_cast<double>(load_u64(raw.data() + pos + 8 * i));
  return file;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(ErrorCode::Io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(ErrorCode::Io, "cannot open '" + path.string() + "' for writing");
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!os) fail(ErrorCode::Io, "write failed for '" + path.string() + "'");
}

}  // namespace ddm
