#pragma once

#include <Eigen/Dense>

namespace kgan {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace kgan
