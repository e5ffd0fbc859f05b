#pragma once

#include <Eigen/Core>

namespace ntkflow {

// Row-major throughout: neuron weights w_r and inputs x_i are matrix rows and
// the hot kernels walk them contiguously.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using IMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

}  // namespace ntkflow
