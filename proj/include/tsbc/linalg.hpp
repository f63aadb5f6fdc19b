#pragma once

#include <Eigen/Dense>

namespace tsbc {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace tsbc
