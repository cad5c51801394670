#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mmt/tape.hpp"
#include "mmt/types.hpp"

namespace mmt::ad {

/// Builder for a scalar loss over a fixed set of leaf parameters. Called
/// with a fresh tape and one Var per parameter matrix, in order.
template <typename Scalar>
using LossFn = std::function<Var<Scalar>(Tape<Scalar>&,
                                         const std::vector<Var<Scalar>>&)>;

/// Compare taped gradients of f against central finite differences
/// (f(x+eps) - f(x-eps)) / 2eps, coordinate by coordinate.
///
/// Returns the max over all coordinates of
///   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <typename Scalar>
Scalar grad_check(const LossFn<Scalar>& f, std::vector<MatT<Scalar>> params,
                  Scalar eps) {
  if (!(eps > Scalar(0))) throw Error("grad_check: eps must be positive");

  auto eval = [&](const std::vector<MatT<Scalar>>& p) -> Scalar {
    Tape<Scalar> t;
    std::vector<Var<Scalar>> vs;
    vs.reserve(p.size());
    for (const auto& m : p) vs.push_back(t.param(m));
    Var<Scalar> loss = f(t, vs);
    const auto& lv = t.val(loss);
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ShapeError("grad_check: f must return a scalar, got " +
                       shape_str(lv));
    }
    Scalar y = lv(0, 0);
    if (!std::isfinite(y)) throw NumericError("grad_check: non-finite f");
    return y;
  };

  // Analytic gradients at the base point.
  std::vector<MatT<Scalar>> analytic;
  {
    Tape<Scalar> t;
    std::vector<Var<Scalar>> vs;
    vs.reserve(params.size());
    for (const auto& m : params) vs.push_back(t.param(m));
    Var<Scalar> loss = f(t, vs);
    const auto& lv = t.val(loss);
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ShapeError("grad_check: f must return a scalar, got " +
                       shape_str(lv));
    }
    if (!std::isfinite(lv(0, 0))) {
      throw NumericError("grad_check: non-finite f");
    }
    t.backward(loss);
    for (const auto& v : vs) analytic.push_back(t.grad(v));
  }

  Scalar worst = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    MatT<Scalar>& m = params[k];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      Scalar saved = m(i);
      m(i) = saved + eps;
      Scalar up = eval(params);
      m(i) = saved - eps;
      Scalar down = eval(params);
      m(i) = saved;
      Scalar numeric = (up - down) / (Scalar(2) * eps);
      Scalar a = analytic[k](i);
      Scalar denom = std::max({std::abs(a), std::abs(numeric), Scalar(1e-8)});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace mmt::ad
