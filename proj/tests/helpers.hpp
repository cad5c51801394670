#pragma once

#include <cstdint>
#include <vector>

#include "mmt/rng.hpp"
#include "mmt/types.hpp"

namespace mmt::test {

template <typename Scalar = double>
MatT<Scalar> rand_mat(Rng& rng, Eigen::Index r, Eigen::Index c,
                      double lo = -1.0, double hi = 1.0) {
  MatT<Scalar> m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m(i) = static_cast<Scalar>(rng.uniform(lo, hi));
  }
  return m;
}

template <typename Scalar>
double max_abs_diff(const MatT<Scalar>& a, const MatT<Scalar>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return 1e30;
  if (a.size() == 0) return 0.0;
  return static_cast<double>((a - b).cwiseAbs().maxCoeff());
}

}  // namespace mmt::test
