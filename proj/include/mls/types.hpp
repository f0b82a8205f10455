#pragma once

#include <Eigen/Dense>

namespace mls {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace mls
