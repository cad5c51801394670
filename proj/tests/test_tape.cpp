#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <thread>
#include <vector>

#include "helpers.hpp"
#include "mmt/grad_check.hpp"
#include "mmt/rng.hpp"
#include "mmt/tape.hpp"

using namespace mmt;
using namespace mmt::ad;
using mmt::test::rand_mat;

using Tp = Tape<double>;
using Vr = Var<double>;
using Md = MatT<double>;

namespace {

// Independent oracle: naive triple loop, no Eigen arithmetic.
Md matmul_oracle(const Md& a, const Md& b) {
  Md out = Md::Zero(a.rows(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (Eigen::Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  }
  return out;
}

// Random-weighted sum of all entries, so every coordinate of `out` carries
// a distinct cotangent in gradient checks.
Vr weighted_sum(Vr out, std::uint64_t seed) {
  Rng rng(seed);
  Md w = rand_mat(rng, out.rows(), out.cols(), 0.3, 1.3);
  return sum(cmul(out, out.tape->value(w)));
}

}  // namespace

TEST_CASE("matmul identity and projector") {
  Tp t;
  Md I2 = Md::Identity(2, 2);
  Md m(2, 2);
  m << 1, 2, 3, 4;
  auto r = matmul(t.value(I2), t.value(m));
  CHECK(test::max_abs_diff(t.val(r), m) == 0.0);

  Md proj(2, 2);
  proj << 1, 0, 0, 0;
  Md x(2, 2);
  x << 5, 6, 7, 8;
  Md want(2, 2);
  want << 5, 6, 0, 0;
  auto p = matmul(t.value(proj), t.value(x));
  CHECK(test::max_abs_diff(t.val(p), want) == 0.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
  Rng rng(7);
  Md a = rand_mat(rng, 3, 4);
  Md b = rand_mat(rng, 4, 2);
  Tp t;
  auto r = matmul(t.value(a), t.value(b));
  Md want = matmul_oracle(a, b);
  for (Eigen::Index i = 0; i < want.size(); ++i) {
    CHECK(std::abs(t.val(r)(i) - want(i)) <=
          1e-12 * std::max(1.0, std::abs(want(i))));
  }
}

TEST_CASE("matmul shape error names both shapes") {
  Tp t;
  auto a = t.value(Md::Zero(3, 4));
  auto b = t.value(Md::Zero(5, 2));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("3x4") != std::string::npos);
    CHECK(msg.find("5x2") != std::string::npos);
  }
}

TEST_CASE("elementwise basics") {
  Tp t;
  Md z = Md::Zero(1, 3);
  CHECK(t.val(tanh(t.value(z)))(0, 0) == 0.0);
  CHECK(t.val(sigmoid(t.value(z)))(0, 0) == doctest::Approx(0.5));

  Md a(1, 3), zero(1, 3);
  a << 1, 2, 3;
  zero.setZero();
  auto prod = cmul(t.value(a), t.value(zero));
  CHECK(t.val(prod).cwiseAbs().maxCoeff() == 0.0);

  auto x = t.value(Md::Zero(2, 2));
  auto y = t.value(Md::Zero(2, 3));
  CHECK_THROWS_AS(add(x, y), ShapeError);
  CHECK_THROWS_AS(cmul(x, y), ShapeError);
}

TEST_CASE("sigmoid symmetry identity") {
  Rng rng(11);
  Md x = rand_mat(rng, 4, 4, -8.0, 8.0);
  Tp t;
  auto s1 = sigmoid(t.value(x));
  auto s2 = sigmoid(t.value(Md(-x)));
  Md sumv = t.val(s1) + t.val(s2);
  CHECK((sumv.array() - 1.0).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("sigmoid stays finite at extreme inputs") {
  Tp t;
  Md x(1, 2);
  x << -1000.0, 1000.0;
  auto s = sigmoid(t.value(x));
  CHECK(t.val(s)(0, 0) == 0.0);
  CHECK(t.val(s)(0, 1) == 1.0);
}

TEST_CASE("softmax exact cases") {
  Tp t;
  Md z = Md::Zero(1, 3);
  auto u = softmax(t.value(z));
  for (int i = 0; i < 3; ++i) {
    CHECK(t.val(u)(0, i) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }

  Md v(1, 2);
  v << 0.0, std::log(3.0);
  auto s = softmax(t.value(v));
  CHECK(t.val(s)(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(t.val(s)(0, 1) == doctest::Approx(0.75).epsilon(1e-14));

  Md big(1, 2), small(1, 2);
  big << 1000.0, 1001.0;
  small << 0.0, 1.0;
  auto sb = softmax(t.value(big));
  auto ss = softmax(t.value(small));
  CHECK(test::max_abs_diff(t.val(sb), t.val(ss)) <= 1e-15);

  CHECK_THROWS_AS(softmax(t.value(Md(0, 0))), ShapeError);
}

TEST_CASE("softmax simplex and shift invariance on random vectors") {
  Rng rng(13);
  for (int rep = 0; rep < 50; ++rep) {
    int n = 1 + static_cast<int>(rng.below(9));
    Md v = rand_mat(rng, 1, n, -5.0, 5.0);
    double c = rng.uniform(-100.0, 100.0);
    Tp t;
    auto s = softmax(t.value(v));
    const Md& sv = t.val(s);
    CHECK(std::abs(sv.sum() - 1.0) <= 1e-12);
    CHECK(sv.minCoeff() > 0.0);
    auto s2 = softmax(t.value(Md(v.array() + c)));
    CHECK(test::max_abs_diff(sv, t.val(s2)) <= 1e-12);
  }
}

TEST_CASE("masked softmax zeroes dropped positions") {
  Rng rng(17);
  Md v = rand_mat(rng, 6, 1, -3.0, 3.0);
  std::vector<std::uint8_t> keep = {1, 0, 1, 1, 0, 1};
  Tp t;
  auto a = masked_softmax(t.value(v), keep);
  const Md& av = t.val(a);
  CHECK(av(1) == 0.0);
  CHECK(av(4) == 0.0);
  CHECK(std::abs(av.sum() - 1.0) <= 1e-12);
  CHECK_THROWS_AS(masked_softmax(t.value(v), {0, 0, 0, 0, 0, 0}), ShapeError);
}

TEST_CASE("log_softmax normalizes") {
  Rng rng(19);
  Md v = rand_mat(rng, 1, 9, -4.0, 4.0);
  Tp t;
  auto l = log_softmax(t.value(v));
  double lse = std::log(t.val(l).array().exp().sum());
  CHECK(std::abs(lse) <= 1e-9);
  CHECK(t.val(l).maxCoeff() <= 0.0);
}

TEST_CASE("backward on sums") {
  Rng rng(23);
  Md x = rand_mat(rng, 3, 4);
  Tp t;
  auto vx = t.param(x);
  auto loss = sum(vx);
  t.backward(loss);
  CHECK(test::max_abs_diff(t.grad(vx), Md(Md::Ones(3, 4))) == 0.0);

  Tp t2;
  Md z = Md::Zero(2, 5);
  auto vz = t2.param(z);
  auto loss2 = sum(tanh(vz));
  t2.backward(loss2);
  CHECK(test::max_abs_diff(t2.grad(vz), Md(Md::Ones(2, 5))) == 0.0);
}

TEST_CASE("gradient of unused tensor is exactly zero") {
  Tp t;
  Md a = Md::Ones(2, 2), b = Md::Ones(3, 3);
  auto va = t.param(a);
  auto vb = t.param(b);
  t.backward(sum(va));
  CHECK(t.grad(vb).cwiseAbs().maxCoeff() == 0.0);
  CHECK(t.grad(vb).rows() == 3);
}

TEST_CASE("shared leaf accumulates gradient") {
  Tp t;
  Md x = Md::Ones(1, 4);
  auto vx = t.param(x);
  t.backward(sum(add(vx, vx)));
  CHECK(test::max_abs_diff(t.grad(vx), Md(2.0 * Md::Ones(1, 4))) == 0.0);
}

TEST_CASE("backward rejects non-scalar loss and foreign vars") {
  Tp t;
  auto v = t.value(Md::Ones(2, 2));
  CHECK_THROWS_AS(t.backward(v), ShapeError);
  Tp other;
  auto w = other.value(Md::Ones(2, 2));
  CHECK_THROWS_AS(add(v, w), Error);
}

TEST_CASE("non-finite op result raises") {
  Tp t;
  Md big(1, 1);
  big << 1e308;
  auto v = t.value(big);
  CHECK_THROWS_AS(cmul(v, v), NumericError);
}

TEST_CASE("taped gradients match finite differences for every op") {
  const double kTol = 1e-6;
  const double kEps = 1e-5;
  Rng rng(31);

  struct Scenario {
    const char* name;
    std::vector<Md> params;
    LossFn<double> f;
  };
  std::vector<Scenario> cases;

  cases.push_back({"matmul",
                   {rand_mat(rng, 3, 4), rand_mat(rng, 4, 2)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(matmul(v[0], v[1]), 101);
                   }});
  cases.push_back({"add",
                   {rand_mat(rng, 3, 4), rand_mat(rng, 3, 4)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(add(v[0], v[1]), 102);
                   }});
  cases.push_back({"add_rowvec",
                   {rand_mat(rng, 3, 4), rand_mat(rng, 1, 4)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(add(v[0], v[1]), 103);
                   }});
  cases.push_back({"sub",
                   {rand_mat(rng, 2, 3), rand_mat(rng, 2, 3)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(sub(v[0], v[1]), 104);
                   }});
  cases.push_back({"cmul",
                   {rand_mat(rng, 3, 3), rand_mat(rng, 3, 3)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(cmul(v[0], v[1]), 105);
                   }});
  cases.push_back({"scale",
                   {rand_mat(rng, 2, 2)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(scale(v[0], 1.7), 106);
                   }});
  cases.push_back({"one_minus",
                   {rand_mat(rng, 2, 3)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(one_minus(v[0]), 107);
                   }});
  cases.push_back({"tanh",
                   {rand_mat(rng, 3, 3)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(tanh(v[0]), 108);
                   }});
  cases.push_back({"sigmoid",
                   {rand_mat(rng, 3, 3)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(sigmoid(v[0]), 109);
                   }});
  cases.push_back({"softmax",
                   {rand_mat(rng, 1, 5)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(softmax(v[0]), 110);
                   }});
  cases.push_back({"softmax_col",
                   {rand_mat(rng, 5, 1)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(softmax(v[0]), 111);
                   }});
  cases.push_back({"masked_softmax",
                   {rand_mat(rng, 6, 1)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(
                         masked_softmax(v[0], {1, 0, 1, 1, 0, 1}), 112);
                   }});
  cases.push_back({"log_softmax",
                   {rand_mat(rng, 1, 7)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(log_softmax(v[0]), 113);
                   }});
  cases.push_back({"transpose",
                   {rand_mat(rng, 3, 4)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(transpose(v[0]), 114);
                   }});
  cases.push_back({"row",
                   {rand_mat(rng, 4, 3)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(add(row(v[0], 2), row(v[0], 2)), 115);
                   }});
  cases.push_back({"rows_with_repeat",
                   {rand_mat(rng, 5, 3)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(rows(v[0], {1, 3, 1}), 116);
                   }});
  cases.push_back({"pick",
                   {rand_mat(rng, 1, 6)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return pick(log_softmax(v[0]), 4);
                   }});
  cases.push_back({"sum",
                   {rand_mat(rng, 3, 3)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return sum(cmul(v[0], v[0]));
                   }});
  cases.push_back({"mean_rows",
                   {rand_mat(rng, 4, 5)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(mean_rows(v[0]), 117);
                   }});
  cases.push_back({"stack_rows",
                   {rand_mat(rng, 1, 4), rand_mat(rng, 1, 4),
                    rand_mat(rng, 1, 4)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(
                         stack_rows<double>({v[0], v[1], v[2]}), 118);
                   }});
  cases.push_back({"concat_cols",
                   {rand_mat(rng, 2, 3), rand_mat(rng, 2, 2)},
                   [](Tp& t, const std::vector<Vr>& v) {
                     return weighted_sum(concat_cols(v[0], v[1]), 119);
                   }});
  // Composite graph shaped like one decoder step at tiny width.
  cases.push_back(
      {"composite_step",
       {rand_mat(rng, 3, 4), rand_mat(rng, 4, 4), rand_mat(rng, 4, 4),
        rand_mat(rng, 1, 4), rand_mat(rng, 3, 1), rand_mat(rng, 4, 5)},
       [](Tp& t, const std::vector<Vr>& v) {
         auto x = row(v[0], 1);
         auto r = sigmoid(add(matmul(x, v[1]), v[3]));
         auto h = tanh(add(cmul(r, matmul(x, v[2])), v[3]));
         auto e = softmax(v[4]);
         auto mix = matmul(transpose(e), v[0]);
         auto o = log_softmax(matmul(add(h, mix), v[5]));
         return pick(o, 2);
       }});

  for (auto& c : cases) {
    CAPTURE(c.name);
    double err = grad_check<double>(c.f, c.params, kEps);
    CHECK(err <= kTol);
  }
}

TEST_CASE("grad_check on closed-form quadratic") {
  Rng rng(37);
  Md a = rand_mat(rng, 4, 4);
  Md sym = 0.5 * (a + a.transpose());
  Md x = rand_mat(rng, 4, 1);

  LossFn<double> f = [&sym](Tp& t, const std::vector<Vr>& v) {
    auto av = t.value(sym);
    return matmul(matmul(transpose(v[0]), av), v[0]);
  };
  CHECK(grad_check<double>(f, {x}, 1e-5) <= 1e-9);

  // The taped gradient itself equals the closed form 2Ax.
  Tp t;
  auto vx = t.param(x);
  auto loss = matmul(matmul(transpose(vx), t.value(sym)), vx);
  t.backward(loss);
  Md closed = 2.0 * (sym * x);
  CHECK(test::max_abs_diff(t.grad(vx), closed) <= 1e-12);
}

TEST_CASE("grad_check on constant is zero") {
  LossFn<double> f = [](Tp& t, const std::vector<Vr>&) {
    return t.value(Md::Constant(1, 1, 3.25));
  };
  CHECK(grad_check<double>(f, {Md::Ones(2, 2)}, 1e-5) == 0.0);
}

TEST_CASE("grad_check detects an injected wrong gradient rule") {
  // tanh forward with a deliberately wrong backward (cos instead of
  // 1 - tanh^2).
  LossFn<double> f = [](Tp& t, const std::vector<Vr>& v) {
    int ix = v[0].id;
    auto bad = t.node(
        t.val(v[0]).array().tanh().matrix(), {ix},
        [ix](Tp& tp, int self) {
          tp.grad_ref(ix).array() +=
              tp.grad_of(self).array() * tp.val_of(ix).array().cos();
        },
        "bad_tanh");
    return sum(bad);
  };
  Rng rng(41);
  Md x = rand_mat(rng, 2, 3, 0.5, 1.5);
  CHECK(grad_check<double>(f, {x}, 1e-5) > 1e-2);
}

TEST_CASE("grad_check rejects bad eps and non-finite f") {
  LossFn<double> f = [](Tp& t, const std::vector<Vr>& v) { return sum(v[0]); };
  CHECK_THROWS_AS(grad_check<double>(f, {Md::Ones(1, 1)}, 0.0), Error);
}

TEST_CASE("float32 instantiation works") {
  Tape<float> t;
  MatT<float> m(2, 2);
  m << 1, 2, 3, 4;
  auto v = t.param(m);
  auto loss = sum(cmul(v, v));
  t.backward(loss);
  CHECK(t.grad(v)(0, 0) == doctest::Approx(2.0f));
}

TEST_CASE("independent tapes run on separate threads") {
  auto work = [](std::uint64_t seed, double* out) {
    Rng rng(seed);
    Md x = rand_mat(rng, 8, 8);
    Tp t;
    auto v = t.param(x);
    auto loss = sum(cmul(tanh(v), tanh(v)));
    t.backward(loss);
    *out = t.grad(v).sum();
  };
  double r1 = 0, r2 = 0, r1b = 0;
  std::thread a(work, 5, &r1), b(work, 9, &r2);
  a.join();
  b.join();
  work(5, &r1b);
  CHECK(r1 == r1b);
}
