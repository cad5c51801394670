#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mmt {

// Dense storage is row-major throughout; vectors are 1xN rows unless noted.
template <typename Scalar>
using MatT = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

#ifdef MMT_FLOAT32
using Real = float;
#else
using Real = double;
#endif

using Mat = MatT<Real>;
using MatI = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Operand dimensions do not fit the operation.
struct ShapeError : Error {
  using Error::Error;
};

/// A value left the finite domain (NaN or Inf).
struct NumericError : Error {
  using Error::Error;
};

/// Malformed or misaligned input data.
struct DataError : Error {
  using Error::Error;
};

/// Bad command-line or config usage.
struct UsageError : Error {
  using Error::Error;
};

template <typename Scalar>
inline std::string shape_str(const MatT<Scalar>& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

template <typename Scalar>
inline void check_finite(const MatT<Scalar>& m, const char* where) {
  if (!m.allFinite()) {
    throw NumericError(std::string(where) + ": non-finite value in " +
                       shape_str(m) + " result");
  }
}

}  // namespace mmt
