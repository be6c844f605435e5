#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "kgan/tensor.hpp"

namespace kgan::io {

std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never see a
/// half-written file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// 64-bit FNV-1a. Stable across platforms; used for cache manifests and
/// experiment cell identities.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// Raw little-endian matrix blob: rows (u64), cols (u64), row-major doubles.
void write_matrix(std::ostream& out, const Matrix& m);
Matrix read_matrix(std::istream& in);

void write_u64(std::ostream& out, std::uint64_t v);
std::uint64_t read_u64(std::istream& in);

/// Shortest decimal text that round-trips a double exactly.
std::string format_double(double v);

}  // namespace kgan::io
