#pragma once

#include <Eigen/Core>

namespace cdfkan {

// Row-major so that one row is one example and rows map onto contiguous spans.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

} // namespace cdfkan
