#pragma once

#include <Eigen/Dense>

namespace sgn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace sgn
