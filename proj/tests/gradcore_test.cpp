#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "sifm/adam.hpp"
#include "sifm/fdcheck.hpp"
#include "sifm/ops.hpp"
#include "sifm/rng.hpp"
#include "sifm/tensor.hpp"

using namespace sifm;

namespace {

template <typename S>
Tensor<S> from(Shape shape, std::vector<double> vals) {
  std::vector<S> v(vals.begin(), vals.end());
  return Tensor<S>(std::move(shape), std::move(v));
}

// Pull the scalar type out of a span<Tensor<S>> inside generic builders.
template <typename Leaves>
struct scalar_of {
  using type = typename std::remove_cvref_t<decltype(std::declval<Leaves>()[0])>::value_type;
};

}  // namespace

TEST_CASE("tensor basics") {
  Tensor<float> t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rank() == 2);
  CHECK(t.extent(1) == 3);
  for (float v : t.values()) CHECK(v == 0.0f);

  CHECK_THROWS_AS(Tensor<float>({2, 3}, std::vector<float>(5)), DimensionError);
  CHECK_THROWS_AS(Tensor<float>({0, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor<float>({2, -1}), DimensionError);
  CHECK_THROWS_AS(from<float>({2, 2}, {1, 2, 3, 4}).item(), DimensionError);
  CHECK(Tensor<float>::scalar(3.5f).item() == 3.5f);

  Tensor<float> a({2}, {1.0f, 2.0f});
  Tensor<float> b = a;  // shared storage
  b.values_mut()[0] = 9.0f;
  CHECK(a.values()[0] == 9.0f);
  CHECK(a.data_id() == b.data_id());
}

TEST_CASE("matmul anchors") {
  auto eye = from<double>({2, 2}, {1, 0, 0, 1});
  auto m = from<double>({2, 2}, {3, 4, 5, 6});
  auto r = matmul(eye, m);
  for (int i = 0; i < 4; ++i) CHECK(r.values()[i] == m.values()[i]);

  auto a = from<double>({1, 2}, {1, 2});
  auto b = from<double>({2, 1}, {3, 4});
  CHECK(matmul(a, b).item() == 11.0);

  CHECK_THROWS_WITH_AS(matmul(from<double>({2, 3}, {1, 2, 3, 4, 5, 6}), m),
                       doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("matmul gradient of sum equals ones times b transposed") {
  Rng rng(11);
  std::vector<double> av(20), bv(15);
  for (auto& v : av) v = rng.normal();
  for (auto& v : bv) v = rng.normal();
  auto a = from<double>({4, 5}, av).set_requires_grad();
  auto b = from<double>({5, 3}, bv);

  Tape<double> tape;
  auto loss = sum_all(matmul(a, b));
  backward(loss);

  // d sum(A·B) / dA = ones(4,3) · Bᵀ, i.e. each row is the row-sums of B.
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 5; ++j) {
      double want = bv[3 * j] + bv[3 * j + 1] + bv[3 * j + 2];
      CHECK(a.grad()[5 * i + j] == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("matmul finite differences including batched") {
  Rng rng(12);
  // The third leaf weights the output so gradients are non-uniform.
  auto rep = fd_check(
      "matmul weighted", {{4, 5}, {5, 3}, {4, 3}},
      [](auto leaves) { return sum_all(mul(matmul(leaves[0], leaves[1]), leaves[2])); }, rng);
  INFO(fd_report_line(rep));
  CHECK(rep.pass);

  rep = fd_check(
      "matmul batched", {{2, 3, 2, 4}, {2, 3, 4, 2}, {2, 3, 2, 2}},
      [](auto leaves) { return sum_all(mul(matmul(leaves[0], leaves[1]), leaves[2])); }, rng);
  INFO(fd_report_line(rep));
  CHECK(rep.pass);

  CHECK_THROWS_AS(matmul(Tensor<double>({2, 3, 4}), Tensor<double>({3, 3, 4})), DimensionError);
}

TEST_CASE("layer_norm anchors") {
  auto x = from<double>({1, 3}, {1, 1, 1});
  auto g = from<double>({3}, {1, 1, 1});
  auto b = from<double>({3}, {0, 0, 0});
  auto y = layer_norm(x, g, b);
  for (double v : y.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-9));

  auto x2 = from<double>({1, 2}, {1, 3});
  auto g2 = from<double>({2}, {1, 1});
  auto b2 = from<double>({2}, {0, 0});
  auto y2 = layer_norm(x2, g2, b2, 0.0);
  CHECK(y2.values()[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(y2.values()[1] == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(layer_norm(x, from<double>({2}, {1, 1}), b), DimensionError);
}

TEST_CASE("layer_norm finite differences") {
  Rng rng(13);
  auto rep = fd_check(
      "layer_norm", {{8, 16}, {16}, {16}},
      [](auto leaves) {
        return mean_all(gelu(layer_norm(leaves[0], leaves[1], leaves[2], 1e-5)));
      },
      rng);
  INFO(fd_report_line(rep));
  CHECK(rep.pass);
}

TEST_CASE("softmax anchors") {
  auto u = softmax(from<double>({3}, {0, 0, 0}));
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  auto w = softmax(from<double>({3}, {std::log(1.0), std::log(2.0), std::log(3.0)}));
  CHECK(w.values()[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(w.values()[1] == doctest::Approx(2.0 / 6).epsilon(1e-12));
  CHECK(w.values()[2] == doctest::Approx(3.0 / 6).epsilon(1e-12));

  // Sentinel-masked entries give exactly zero probability; rest renormalize.
  auto m = softmax(from<double>({4}, {1.0, kMaskOff, 2.0, kMaskOff}));
  CHECK(m.values()[1] == 0.0);
  CHECK(m.values()[3] == 0.0);
  CHECK(m.values()[0] + m.values()[2] == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(softmax(from<double>({2}, {kMaskOff, kMaskOff})), DomainError);
}

TEST_CASE("softmax rows sum to one under masks, gradient passes fd") {
  Rng rng(14);
  std::vector<double> maskv(3 * 4 * 5, 0.0);
  for (std::size_t i = 0; i < maskv.size(); i += 3) maskv[i] = kMaskOff;  // every third masked

  auto rep = fd_check(
      "softmax masked", {{3, 4, 5}, {3, 4, 5}},
      [&](auto leaves) {
        using S = typename scalar_of<decltype(leaves)>::type;
        std::vector<S> mv(maskv.begin(), maskv.end());
        Tensor<S> mask({3, 4, 5}, std::move(mv));
        return sum_all(mul(softmax(add(leaves[0], mask)), leaves[1]));
      },
      rng);
  INFO(fd_report_line(rep));
  CHECK(rep.pass);

  std::vector<double> xv(3 * 4 * 5);
  for (auto& v : xv) v = rng.normal() * 3.0;
  for (std::size_t i = 0; i < xv.size(); i += 4) xv[i] = kMaskOff;
  auto p = softmax(from<double>({3, 4, 5}, xv));
  for (int r = 0; r < 12; ++r) {
    double s = 0;
    for (int j = 0; j < 5; ++j) s += p.values()[r * 5 + j];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("gelu anchors and gradient") {
  CHECK(gelu(Tensor<double>::scalar(0.0)).item() == 0.0);
  // gelu(1) = 0.5·(1+erf(1/√2)) ≈ 0.841344746...
  CHECK(gelu(Tensor<double>::scalar(1.0)).item() ==
        doctest::Approx(0.8413447460685429).epsilon(1e-12));

  Rng rng(15);
  auto rep = fd_check(
      "gelu", {{3, 4, 5}, {3, 4, 5}},
      [](auto leaves) { return sum_all(mul(gelu(leaves[0]), leaves[1])); }, rng);
  INFO(fd_report_line(rep));
  CHECK(rep.pass);
}

TEST_CASE("elementwise broadcast forward and gradient") {
  auto a = from<double>({2, 3}, {1, 2, 3, 4, 5, 6});
  auto b = from<double>({3}, {10, 20, 30});
  auto s = add(a, b);
  CHECK(s.values()[0] == 11);
  CHECK(s.values()[5] == 36);
  auto d = sub(a, b);
  CHECK(d.values()[3] == -6);
  auto p = mul(a, b);
  CHECK(p.values()[4] == 100);

  CHECK_THROWS_AS(add(a, from<double>({2}, {1, 2})), DimensionError);

  Rng rng(16);
  for (const char* name : {"add", "sub", "mul"}) {
    auto build = [name](auto leaves) {
      using S = typename scalar_of<decltype(leaves)>::type;
      Tensor<S> r;
      if (name[0] == 'a') r = add(leaves[0], leaves[1]);
      if (name[0] == 's') r = sub(leaves[0], leaves[1]);
      if (name[0] == 'm') r = mul(leaves[0], leaves[1]);
      return sum_all(mul(r, leaves[2]));
    };
    auto rep = fd_check(std::string(name) + " bcast [5]", {{3, 4, 5}, {5}, {3, 4, 5}}, build, rng);
    INFO(fd_report_line(rep));
    CHECK(rep.pass);
    rep = fd_check(std::string(name) + " bcast [4,1]", {{3, 4, 5}, {4, 1}, {3, 4, 5}}, build, rng);
    INFO(fd_report_line(rep));
    CHECK(rep.pass);
    rep = fd_check(std::string(name) + " same shape", {{3, 4, 5}, {3, 4, 5}, {3, 4, 5}}, build,
                   rng);
    INFO(fd_report_line(rep));
    CHECK(rep.pass);
  }

  auto rep = fd_check(
      "scale", {{3, 4, 5}, {3, 4, 5}},
      [](auto leaves) {
        using S = typename scalar_of<decltype(leaves)>::type;
        return sum_all(mul(scale(leaves[0], S(0.37)), leaves[1]));
      },
      rng);
  CHECK(rep.pass);
}

TEST_CASE("concat and slice are mutual inverses") {
  auto a = from<double>({2, 2}, {1, 2, 3, 4});
  auto b = from<double>({2, 3}, {5, 6, 7, 8, 9, 10});
  auto c = concat<double>({a, b}, 1);
  CHECK(c.shape() == Shape{2, 5});
  std::vector<double> want = {1, 2, 5, 6, 7, 3, 4, 8, 9, 10};
  for (int i = 0; i < 10; ++i) CHECK(c.values()[i] == want[i]);

  auto back_a = slice(c, 1, 0, 2);
  auto back_b = slice(c, 1, 2, 3);
  for (int i = 0; i < 4; ++i) CHECK(back_a.values()[i] == a.values()[i]);
  for (int i = 0; i < 6; ++i) CHECK(back_b.values()[i] == b.values()[i]);

  CHECK_THROWS_AS(slice(c, 1, 4, 3), RangeError);
  CHECK_THROWS_AS(slice(c, 3, 0, 1), RangeError);
  CHECK_THROWS_AS(concat<double>({a, from<double>({3, 2}, {1, 2, 3, 4, 5, 6})}, 1),
                  DimensionError);

  Rng rng(17);
  auto rep = fd_check(
      "concat+slice", {{3, 4, 5}, {3, 2, 5}, {3, 6, 5}},
      [](auto leaves) {
        auto c2 = concat({leaves[0], leaves[1]}, 1);
        return sum_all(mul(c2, leaves[2]));
      },
      rng);
  INFO(fd_report_line(rep));
  CHECK(rep.pass);

  rep = fd_check(
      "slice mid", {{3, 4, 5}, {3, 2, 5}},
      [](auto leaves) { return sum_all(mul(slice(leaves[0], 1, 1, 2), leaves[1])); }, rng);
  INFO(fd_report_line(rep));
  CHECK(rep.pass);
}

TEST_CASE("reshape and transpose round trips are bitwise identity") {
  Rng rng(18);
  std::vector<double> xv(60);
  for (auto& v : xv) v = rng.normal();
  auto x = from<double>({3, 4, 5}, xv);

  auto r = reshape(reshape(x, {12, 5}), {3, 4, 5});
  for (int i = 0; i < 60; ++i) CHECK(r.values()[i] == xv[i]);

  auto t = transpose(transpose(x, {2, 0, 1}), {1, 2, 0});
  for (int i = 0; i < 60; ++i) CHECK(t.values()[i] == xv[i]);

  auto tt = transpose(x, {1, 0, 2});
  CHECK(tt.shape() == Shape{4, 3, 5});
  CHECK(tt.values()[0 * 15 + 0 * 5 + 2] == xv[0 * 20 + 0 * 5 + 2]);
  CHECK(tt.values()[2 * 15 + 1 * 5 + 3] == xv[1 * 20 + 2 * 5 + 3]);

  CHECK_THROWS_AS(reshape(x, {7, 8}), DimensionError);
  CHECK_THROWS_AS(transpose(x, {0, 1}), DimensionError);
  CHECK_THROWS_AS(transpose(x, {0, 1, 1}), RangeError);

  auto rep = fd_check(
      "reshape", {{3, 4, 5}, {12, 5}},
      [](auto leaves) { return sum_all(mul(reshape(leaves[0], {12, 5}), leaves[1])); }, rng);
  CHECK(rep.pass);
  rep = fd_check(
      "transpose", {{3, 4, 5}, {5, 3, 4}},
      [](auto leaves) { return sum_all(mul(transpose(leaves[0], {2, 0, 1}), leaves[1])); }, rng);
  CHECK(rep.pass);
}

TEST_CASE("mean_axis and reductions") {
  auto x = from<double>({2, 3}, {1, 2, 3, 4, 5, 6});
  auto m1 = mean_axis(x, 1);
  CHECK(m1.shape() == Shape{2});
  CHECK(m1.values()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(m1.values()[1] == doctest::Approx(5.0).epsilon(1e-12));
  auto m0 = mean_axis(x, 0);
  CHECK(m0.shape() == Shape{3});
  CHECK(m0.values()[2] == doctest::Approx(4.5).epsilon(1e-12));

  Rng rng(19);
  for (int axis : {0, 1, 2}) {
    Shape out;
    Shape in{3, 4, 5};
    for (int i = 0; i < 3; ++i)
      if (i != axis) out.push_back(in[static_cast<std::size_t>(i)]);
    auto rep = fd_check(
        "mean_axis " + std::to_string(axis), {in, out},
        [axis](auto leaves) { return sum_all(mul(mean_axis(leaves[0], axis), leaves[1])); }, rng);
    INFO(fd_report_line(rep));
    CHECK(rep.pass);
  }
}

TEST_CASE("backward populates leaf gradients") {
  auto x = from<double>({2, 3}, {1, -2, 3, -4, 5, -6}).set_requires_grad();
  {
    Tape<double> tape;
    backward(sum_all(x));
  }
  for (double g : x.grad()) CHECK(g == 1.0);

  x.zero_grad();
  {
    Tape<double> tape;
    backward(sum_all(mul(x, x)));
  }
  for (int i = 0; i < 6; ++i) CHECK(x.grad()[i] == doctest::Approx(2 * x.values()[i]).epsilon(1e-12));
}

TEST_CASE("backward accumulation is linear over losses") {
  Rng rng(20);
  std::vector<double> xv(12);
  for (auto& v : xv) v = rng.normal();

  auto x1 = from<double>({3, 4}, xv).set_requires_grad();
  {
    Tape<double> tape;
    auto l = add(sum_all(mul(x1, x1)), mean_all(gelu(x1)));
    backward(l);
  }

  auto x2 = from<double>({3, 4}, xv).set_requires_grad();
  {
    Tape<double> tape;
    backward(sum_all(mul(x2, x2)));
  }
  {
    Tape<double> tape;
    backward(mean_all(gelu(x2)));
  }

  for (int i = 0; i < 12; ++i) {
    CHECK(x1.grad()[i] == doctest::Approx(x2.grad()[i]).epsilon(1e-12));
  }
}

TEST_CASE("tape contracts") {
  auto x = from<double>({2}, {1, 2}).set_requires_grad();
  Tape<double> tape;
  auto y = sum_all(x);
  CHECK_THROWS_AS(tape.backward(mul(x, x)), DimensionError);  // non-scalar loss
  tape.backward(y);
  CHECK(tape.consumed());
  CHECK_THROWS_AS(tape.backward(y), ContractError);

  // A loss not produced on the live tape is rejected.
  Tape<double> t2;
  CHECK_THROWS_AS(t2.backward(y), ContractError);
}

TEST_CASE("gather_rows forward and gradient with repeats") {
  auto table = from<double>({3, 2}, {1, 2, 3, 4, 5, 6});
  std::vector<std::int64_t> rows = {2, 0, 2};
  auto g = gather_rows(table, rows);
  CHECK(g.shape() == Shape{3, 2});
  CHECK(g.values()[0] == 5);
  CHECK(g.values()[2] == 1);
  CHECK(g.values()[4] == 5);
  CHECK_THROWS_AS(gather_rows(table, std::vector<std::int64_t>{3}), RangeError);

  Rng rng(21);
  auto rep = fd_check(
      "gather_rows", {{4, 3}, {5, 3}},
      [&](auto leaves) {
        std::vector<std::int64_t> rr = {1, 3, 1, 0, 3};
        return sum_all(mul(gather_rows(leaves[0], rr), leaves[1]));
      },
      rng);
  INFO(fd_report_line(rep));
  CHECK(rep.pass);
}

TEST_CASE("mse anchor and gradient") {
  auto p = from<double>({2, 2}, {1, 2, 3, 4});
  auto t = from<double>({2, 2}, {0, 2, 3, 0});
  CHECK(mse(p, t).item() == doctest::Approx((1.0 + 16.0) / 4.0).epsilon(1e-12));
  CHECK_THROWS_AS(mse(p, from<double>({4}, {0, 2, 3, 0})), DimensionError);

  Rng rng(22);
  auto rep = fd_check(
      "mse", {{3, 4}, {3, 4}},
      [](auto leaves) { return mse(leaves[0], leaves[1]); }, rng);
  CHECK(rep.pass);
}

TEST_CASE("adam zero gradient leaves parameters unchanged") {
  std::vector<Tensor<float>> params;
  params.push_back(from<float>({3}, {1, 2, 3}));
  params[0].set_requires_grad();
  params[0].zero_grad();
  AdamState<float> st;
  adam_step(std::span<Tensor<float>>(params), st);
  CHECK(st.step_count == 1);
  CHECK(params[0].values()[0] == 1.0f);
  CHECK(params[0].values()[2] == 3.0f);
}

TEST_CASE("adam first step hand value") {
  std::vector<Tensor<double>> params;
  params.push_back(Tensor<double>::scalar(0.0));
  params[0].set_requires_grad();
  params[0].grad_mut()[0] = 1.0;
  AdamState<double> st;
  st.lr = 0.1;
  adam_step(std::span<Tensor<double>>(params), st);
  // m̂ = 1, v̂ = 1 → Δ = lr/(1+eps) ≈ 0.1
  CHECK(params[0].values()[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(std::abs(params[0].values()[0] + 0.0999999990) < 1e-9);
  // Gradient is consumed (zeroed) by the step.
  CHECK(params[0].grad()[0] == 0.0);
}

TEST_CASE("adam keeps identical parameters identical") {
  std::vector<Tensor<double>> params;
  params.push_back(from<double>({2}, {0.5, 0.5}));
  params.push_back(from<double>({2}, {0.5, 0.5}));
  for (auto& p : params) p.set_requires_grad();
  AdamState<double> st;
  Rng rng(23);
  for (int step = 0; step < 7; ++step) {
    const double g0 = rng.normal(), g1 = rng.normal();
    for (auto& p : params) {
      auto g = p.grad_mut();
      g[0] += g0;
      g[1] += g1;
    }
    adam_step(std::span<Tensor<double>>(params), st);
    CHECK(params[0].values()[0] == params[1].values()[0]);
    CHECK(params[0].values()[1] == params[1].values()[1]);
  }
  CHECK(st.step_count == 7);
}

TEST_CASE("adam refuses missing gradient") {
  std::vector<Tensor<double>> params;
  params.push_back(Tensor<double>::scalar(1.0));
  AdamState<double> st;
  CHECK_THROWS_AS(adam_step(std::span<Tensor<double>>(params), st), ContractError);
}

TEST_CASE("rng determinism and sub-stream derivation") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng::derive(42, "init") != Rng::derive(42, "data"));
  CHECK(Rng::derive(42, "init") == Rng::derive(42, "init"));
  CHECK(Rng::derive(42, "init") != Rng::derive(43, "init"));

  Rng c(7);
  for (int i = 0; i < 1000; ++i) {
    double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(std::abs(c.truncated_normal(0.02)) <= 0.04);
  }
}
