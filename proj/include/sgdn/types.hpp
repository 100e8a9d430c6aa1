#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace sgdn {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Network computations run in double so that finite-difference checks are
// meaningful; the geometric helpers stay generic over the scalar type.
using Real = double;
using Matrix = MatrixX<Real>;
using RowVector = RowVectorX<Real>;
using Vector = VectorX<Real>;

using Index = Eigen::Index;

using Rng = std::mt19937_64;

}  // namespace sgdn
