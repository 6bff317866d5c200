#pragma once

#include <Eigen/Dense>

namespace modsiren {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Mat<double>;
using VectorXd = Vec<double>;

/// Arithmetic precision for the hot training and fitting kernels. Parameters
/// are always stored in 64-bit; Single casts them for the duration of a call.
enum class Precision { Double, Single };

}  // namespace modsiren

#include <cstring>

namespace modsiren {

/// Same shape and identical bytes. Distinguishes -0.0 from 0.0 and compares
/// NaN payloads, which operator== on Eigen types does not.
template <typename A, typename B>
bool bitwise_equal(const Eigen::DenseBase<A>& a, const Eigen::DenseBase<B>& b) {
  using Scalar = typename A::Scalar;
  static_assert(std::is_same_v<Scalar, typename B::Scalar>);
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  const Mat<Scalar> ea = a.derived();
  const Mat<Scalar> eb = b.derived();
  return std::memcmp(ea.data(), eb.data(), sizeof(Scalar) * static_cast<std::size_t>(ea.size())) == 0;
}

}  // namespace modsiren
