#pragma once

// Five-point central differences against the tape's analytic gradients, one
// relative error per parameter tensor.

#include <algorithm>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "kgan/training.hpp"

namespace kgan::testing {

struct TensorCheck {
  double relative_error = 0.0;  ///< |analytic - numeric| / max(|analytic|, |numeric|, floor)
  double analytic_norm = 0.0;
};

/// Moves every parameter to a random unit-scale point (PAD row kept at zero)
/// so that attentions are far from uniform and gradients are well above the
/// finite-difference noise floor.
inline void randomize_parameters(network::KganModel& model, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& p : model.parameters()) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = n(rng);
    for (auto r : p.frozen_rows) p.value.row(r).setZero();
  }
}

inline std::map<std::string, TensorCheck> gradient_check(network::KganModel& model,
                                                         const std::vector<network::ModelInput>& batch,
                                                         double step = 1e-4, double floor = 1e-8) {
  training::batch_loss(model, batch, true);
  std::map<std::string, TensorCheck> out;
  for (auto& p : model.parameters()) {
    const Matrix analytic = p.grad;
    Matrix numeric = Matrix::Zero(p.value.rows(), p.value.cols());
    for (Eigen::Index i = 0; i < p.value.rows(); ++i) {
      if (std::find(p.frozen_rows.begin(), p.frozen_rows.end(), i) != p.frozen_rows.end()) continue;
      for (Eigen::Index j = 0; j < p.value.cols(); ++j) {
        const double keep = p.value(i, j);
        auto at = [&](double offset) {
          p.value(i, j) = keep + offset;
          return training::batch_loss(model, batch, false);
        };
        const double d = -at(2 * step) + 8 * at(step) - 8 * at(-step) + at(-2 * step);
        p.value(i, j) = keep;
        numeric(i, j) = d / (12 * step);
      }
    }
    Matrix a = analytic;
    for (auto r : p.frozen_rows) a.row(r).setZero();
    // Both sides below the floor means an (almost) unused tensor; compare it
    // on the absolute scale instead.
    const double denom = std::max({a.norm(), numeric.norm(), floor});
    out[p.name] = TensorCheck{(a - numeric).norm() / denom, a.norm()};
  }
  return out;
}

}  // namespace kgan::testing
