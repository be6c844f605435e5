#pragma once

#include <array>
#include <span>
#include <string>

namespace kgan::evaluation {

inline constexpr int kClasses = 3;

struct MetricReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::array<double, kClasses> precision{};
  std::array<double, kClasses> recall{};
  std::array<double, kClasses> f1{};
  /// confusion[gold][pred]
  std::array<std::array<long, kClasses>, kClasses> confusion{};

  long total() const;
  std::string to_json() const;
  static MetricReport from_json(const std::string& text);
  bool operator==(const MetricReport&) const = default;
};

/// Standard accuracy and unweighted macro-F1. A class with no gold and no
/// predicted instances, or with zero precision and recall, contributes F1 0.
/// Throws DataError on empty or mismatched inputs and labels outside 0..2.
MetricReport compute_metrics(std::span<const int> gold, std::span<const int> pred);

}  // namespace kgan::evaluation
