#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <type_traits>

#include <Eigen/Dense>

namespace fulc {

using Index = Eigen::Index;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using CVec = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;
// Row t holds frame t.
template <typename Scalar>
using CMat = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Read-only views for function parameters; wrapped so they never take part in deduction.
template <typename Scalar>
using VecIn = std::type_identity_t<Eigen::Ref<const Vec<Scalar>>>;
template <typename Scalar>
using MatIn = std::type_identity_t<Eigen::Ref<const Mat<Scalar>>>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct NumericError : Error {
  using Error::Error;
};

template <typename Scalar>
  requires std::is_floating_point_v<Scalar>
inline Scalar logistic(Scalar x) {
  return Scalar(1) / (Scalar(1) + std::exp(-x));
}

template <typename Derived>
inline auto logistic(const Eigen::MatrixBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return logistic(v); });
}

inline void require_dim(Index got, Index want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected dimension " + std::to_string(want) + ", got " +
                     std::to_string(got));
  }
}

}  // namespace fulc
