#include "kgan/io.hpp"

#include <array>
#include <bit>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "kgan/error.hpp"

namespace kgan::io {

static_assert(std::endian::native == std::endian::little,
              "binary tensor files assume a little-endian host");

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  std::array<char, 17> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + 16, value, 16);
  std::string s(buf.data(), end);
  return std::string(16 - s.size(), '0') + s;
}

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw FormatError("truncated binary file");
  return v;
}

void write_matrix(std::ostream& out, const Matrix& m) {
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  std::vector<double> buf(static_cast<std::size_t>(m.size()));
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      buf.data(), m.rows(), m.cols()) = m;
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
}

Matrix read_matrix(std::istream& in) {
  const auto rows = read_u64(in);
  const auto cols = read_u64(in);
  if (rows > (1ull << 32) || cols > (1ull << 32)) throw FormatError("implausible matrix shape");
  std::vector<double> buf(rows * cols);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(double)));
  if (!in) throw FormatError("truncated matrix data");
  return Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      buf.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

}  // namespace kgan::io
