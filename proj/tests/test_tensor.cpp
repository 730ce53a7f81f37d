#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>

#include "oracles.hpp"
#include "tamperloc/grad_check.hpp"
#include "tamperloc/ops.hpp"
#include "tamperloc/parallel.hpp"

using namespace tamperloc;

namespace {

ConvParams make_params(Tensor w, Tensor b, Index stride, Index pad, Index groups) {
  ConvParams p;
  p.weight = std::move(w);
  p.bias = std::move(b);
  p.stride = stride;
  p.padding = pad;
  p.groups = groups;
  return p;
}

Tensor zero_bias(Index oc) { return Tensor::zeros({1, oc, 1, 1}); }

void check_equal(const Tensor& a, const Tensor& b, Scalar tol) {
  REQUIRE(a.shape() == b.shape());
  CHECK((a.data() - b.data()).abs().maxCoeff() <= tol);
}

}  // namespace

TEST_CASE("conv2d: 2x2 ones kernel over 3x3 ones") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 2, 2}, 1.0);
  Tensor y = conv2d(x, make_params(w, zero_bias(1), 1, 0, 1));
  REQUIRE(y.shape() == Shape4{1, 1, 2, 2});
  for (Index i = 0; i < 4; ++i) CHECK(y.data()[i] == 4.0);
}

TEST_CASE("conv2d: 1x1 identity kernel") {
  RngStream rng(11);
  Tensor x = oracle::rand_tensor({2, 1, 4, 5}, rng);
  Tensor w = Tensor::full({1, 1, 1, 1}, 1.0);
  Tensor y = conv2d(x, make_params(w, zero_bias(1), 1, 0, 1));
  check_equal(y, x, 0.0);
}

TEST_CASE("conv2d matches the naive loop oracle") {
  RngStream rng(21);
  struct Case {
    Shape4 xs, ws;
    Index stride, pad, groups;
  };
  const Case cases[] = {
      {{1, 2, 5, 5}, {3, 2, 3, 3}, 1, 0, 1},
      {{2, 3, 6, 7}, {4, 3, 3, 3}, 1, 1, 1},
      {{1, 3, 8, 8}, {6, 3, 4, 4}, 4, 0, 1},
      {{2, 4, 6, 6}, {4, 1, 7, 7}, 1, 3, 4},   // depthwise layout
      {{1, 4, 5, 5}, {6, 2, 2, 2}, 2, 1, 2},   // grouped, stride 2
      {{2, 3, 4, 4}, {5, 3, 1, 1}, 1, 0, 1},   // pointwise fast path
  };
  for (const Case& c : cases) {
    Tensor x = oracle::rand_tensor(c.xs, rng);
    Tensor w = oracle::rand_tensor(c.ws, rng);
    Tensor b = oracle::rand_tensor({1, c.ws.n, 1, 1}, rng);
    Tensor y = conv2d(x, make_params(w, b, c.stride, c.pad, c.groups));
    Tensor ref = oracle::naive_conv2d(x, w, b.data(), c.stride, c.pad, c.groups);
    check_equal(y, ref, 1e-12);
  }
}

TEST_CASE("conv2d is linear in its input") {
  RngStream rng(31);
  Tensor x1 = oracle::rand_tensor({1, 2, 5, 5}, rng);
  Tensor x2 = oracle::rand_tensor({1, 2, 5, 5}, rng);
  Tensor w = oracle::rand_tensor({3, 2, 3, 3}, rng);
  const Scalar a = 1.7, b = -0.6;
  ArrayX mix = a * x1.data() + b * x2.data();
  Tensor xm = Tensor::from_data({1, 2, 5, 5}, std::move(mix));
  auto run = [&](const Tensor& t) {
    return conv2d(t, make_params(w, zero_bias(3), 1, 1, 1));
  };
  ArrayX lhs = run(xm).data();
  ArrayX rhs = a * run(x1).data() + b * run(x2).data();
  CHECK((lhs - rhs).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("conv2d gradient check (linear op, tight tolerance)") {
  RngStream rng(41);
  Tensor x = oracle::rand_tensor({1, 2, 5, 5}, rng);
  Tensor w = oracle::rand_tensor({3, 2, 3, 3}, rng);
  Tensor b = oracle::rand_tensor({1, 3, 1, 1}, rng);
  auto fn = [](const std::vector<Tensor>& in) {
    return conv2d(in[0], make_params(in[1], in[2], 1, 0, 1));
  };
  GradCheckReport rep = grad_check("conv2d", fn, {x, w, b}, 1e-3, 1e-8);
  CHECK(rep.ok);
  CHECK(rep.max_rel_err <= 1e-8);
}

TEST_CASE("conv2d grad check with stride, padding and groups") {
  RngStream rng(43);
  Tensor x = oracle::rand_tensor({2, 4, 6, 6}, rng);
  Tensor w = oracle::rand_tensor({6, 2, 3, 3}, rng);
  Tensor b = oracle::rand_tensor({1, 6, 1, 1}, rng);
  auto fn = [](const std::vector<Tensor>& in) {
    return conv2d(in[0], make_params(in[1], in[2], 2, 1, 2));
  };
  CHECK(grad_check("conv2d_spg", fn, {x, w, b}, 1e-3, 1e-8).ok);
}

TEST_CASE("conv2d dimension errors name the offending axis") {
  Tensor x = Tensor::zeros({1, 3, 4, 4});
  Tensor w = Tensor::zeros({2, 4, 3, 3});
  CHECK_THROWS_AS(conv2d(x, make_params(w, zero_bias(2), 1, 0, 1)), DimensionError);
  Tensor w2 = Tensor::zeros({2, 3, 6, 3});
  CHECK_THROWS_WITH_AS(conv2d(x, make_params(w2, zero_bias(2), 1, 0, 1)),
                       doctest::Contains("axis H"), DimensionError);
}

TEST_CASE("depthwise_conv2d: 7x7 ones on a constant field") {
  const Scalar v = 0.37;
  Tensor x = Tensor::full({1, 2, 9, 9}, v);
  Tensor w = Tensor::full({2, 1, 7, 7}, 1.0);
  Tensor y = depthwise_conv2d(x, make_params(w, zero_bias(2), 1, 3, 2));
  REQUIRE(y.shape() == x.shape());
  // interior = positions where the 7x7 window fits entirely
  for (Index c = 0; c < 2; ++c)
    for (Index i = 3; i < 6; ++i)
      for (Index j = 3; j < 6; ++j)
        CHECK(y.at(0, c, i, j) == doctest::Approx(49 * v).epsilon(1e-12));
}

TEST_CASE("depthwise_conv2d equals dense conv with block-diagonal kernel") {
  RngStream rng(53);
  Tensor x = oracle::rand_tensor({1, 2, 4, 4}, rng);
  Tensor w = oracle::rand_tensor({2, 1, 3, 3}, rng);
  Tensor b = oracle::rand_tensor({1, 2, 1, 1}, rng);
  Tensor y = depthwise_conv2d(x, make_params(w, b, 1, 1, 2));

  ArrayX dense = ArrayX::Zero(2 * 2 * 3 * 3);
  for (Index c = 0; c < 2; ++c)
    for (Index k = 0; k < 9; ++k) dense[(c * 2 + c) * 9 + k] = w.data()[c * 9 + k];
  Tensor wd = Tensor::from_data({2, 2, 3, 3}, std::move(dense));
  Tensor ref = oracle::naive_conv2d(x, wd, b.data(), 1, 1, 1);
  check_equal(y, ref, 1e-12);
}

TEST_CASE("depthwise_conv2d rejects group mismatch") {
  Tensor x = Tensor::zeros({1, 4, 4, 4});
  Tensor w = Tensor::zeros({4, 2, 3, 3});
  CHECK_THROWS_AS(depthwise_conv2d(x, make_params(w, zero_bias(4), 1, 1, 2)),
                  ConfigError);
}

TEST_CASE("layer_norm: constant over channels maps to zero") {
  Tensor x = Tensor::full({2, 3, 2, 2}, 5.5);
  Tensor g = Tensor::full({1, 3, 1, 1}, 1.0);
  Tensor b = Tensor::zeros({1, 3, 1, 1});
  Tensor y = layer_norm(x, g, b, 1e-6);
  CHECK(y.data().abs().maxCoeff() <= 1e-12);
}

TEST_CASE("layer_norm: gamma=0 pins output to beta") {
  RngStream rng(61);
  Tensor x = oracle::rand_tensor({1, 4, 3, 3}, rng);
  Tensor g = Tensor::zeros({1, 4, 1, 1});
  Tensor b = Tensor::full({1, 4, 1, 1}, -2.25);
  Tensor y = layer_norm(x, g, b, 1e-6);
  CHECK((y.data() + 2.25).abs().maxCoeff() == 0);
}

TEST_CASE("layer_norm gradient check") {
  RngStream rng(63);
  Tensor x = oracle::rand_tensor({2, 3, 2, 2}, rng);
  Tensor g = oracle::rand_tensor({1, 3, 1, 1}, rng, 0.5, 1.5);
  Tensor b = oracle::rand_tensor({1, 3, 1, 1}, rng);
  auto fn = [](const std::vector<Tensor>& in) {
    return layer_norm(in[0], in[1], in[2], 1e-6);
  };
  GradCheckReport rep = grad_check("layer_norm", fn, {x, g, b}, 1e-4, 1e-4);
  CHECK(rep.ok);
}

TEST_CASE("gelu values") {
  Tensor x = Tensor::from_data({1, 1, 1, 3}, [] {
    ArrayX d(3);
    d << 0.0, 3.0, 1.0;
    return d;
  }());
  Tensor y = gelu(x);
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == doctest::Approx(2.99595).epsilon(1e-5));
  // x * Phi(x) at 1: Phi(1) = 0.5 (1 + erf(1/sqrt 2))
  const Scalar phi1 = 0.5 * (1 + std::erf(1.0 / std::sqrt(2.0)));
  CHECK(y.data()[2] == doctest::Approx(phi1).epsilon(1e-14));
}

TEST_CASE("gelu gradient check") {
  RngStream rng(71);
  Tensor x = oracle::rand_tensor({1, 2, 3, 3}, rng, -2.5, 2.5);
  auto fn = [](const std::vector<Tensor>& in) { return gelu(in[0]); };
  CHECK(grad_check("gelu", fn, {x}, 1e-3, 1e-4).ok);
}

TEST_CASE("bilinear_resize: identity and constants") {
  RngStream rng(81);
  Tensor x = oracle::rand_tensor({1, 2, 5, 7}, rng);
  check_equal(bilinear_resize(x, 5, 7), x, 0.0);

  Tensor c = Tensor::full({1, 1, 3, 3}, 0.125);
  Tensor y = bilinear_resize(c, 8, 2);
  CHECK((y.data() - 0.125).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("bilinear_resize: 2x2 to 4x4 against the sampling formula") {
  ArrayX d(4);
  d << 0, 1, 2, 3;
  Tensor x = Tensor::from_data({1, 1, 2, 2}, std::move(d));
  Tensor y = bilinear_resize(x, 4, 4);
  Tensor ref = oracle::naive_bilinear(x, 4, 4);
  check_equal(y, ref, 1e-15);
  // spot values evaluated by hand from s = (d + 0.5)/2 - 0.5
  CHECK(y.at(0, 0, 0, 0) == 0.0);
  CHECK(y.at(0, 0, 1, 1) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(y.at(0, 0, 2, 2) == doctest::Approx(2.25).epsilon(1e-15));
  CHECK(y.at(0, 0, 3, 3) == 3.0);
}

TEST_CASE("bilinear_resize matches oracle on random sizes") {
  RngStream rng(83);
  const Index sizes[][4] = {{3, 3, 7, 5}, {6, 6, 4, 9}, {5, 4, 10, 10}, {2, 7, 3, 2}};
  for (auto& s : sizes) {
    Tensor x = oracle::rand_tensor({1, 2, s[0], s[1]}, rng);
    check_equal(bilinear_resize(x, s[2], s[3]), oracle::naive_bilinear(x, s[2], s[3]),
                1e-13);
  }
}

TEST_CASE("bilinear_resize gradient check") {
  RngStream rng(85);
  Tensor x = oracle::rand_tensor({1, 2, 3, 4}, rng);
  auto up = [](const std::vector<Tensor>& in) { return bilinear_resize(in[0], 6, 8); };
  auto down = [](const std::vector<Tensor>& in) { return bilinear_resize(in[0], 2, 2); };
  CHECK(grad_check("bilinear_up", up, {x}, 1e-3, 1e-8).ok);
  CHECK(grad_check("bilinear_down", down, {x}, 1e-3, 1e-8).ok);
}

TEST_CASE("adaptive_avg_pool: identity, global mean, quadrants") {
  RngStream rng(91);
  Tensor x = oracle::rand_tensor({1, 2, 3, 3}, rng);
  check_equal(adaptive_avg_pool(x, 3), x, 0.0);

  Tensor g = adaptive_avg_pool(x, 1);
  for (Index c = 0; c < 2; ++c)
    CHECK(g.at(0, c, 0, 0) ==
          doctest::Approx(x.data().segment(c * 9, 9).mean()).epsilon(1e-15));

  ArrayX ramp(16);
  for (Index i = 0; i < 16; ++i) ramp[i] = static_cast<Scalar>(i);
  Tensor r = Tensor::from_data({1, 1, 4, 4}, std::move(ramp));
  Tensor q = adaptive_avg_pool(r, 2);
  CHECK(q.at(0, 0, 0, 0) == 2.5);
  CHECK(q.at(0, 0, 0, 1) == 4.5);
  CHECK(q.at(0, 0, 1, 0) == 10.5);
  CHECK(q.at(0, 0, 1, 1) == 12.5);
}

TEST_CASE("adaptive_avg_pool matches oracle on uneven splits") {
  RngStream rng(93);
  Tensor x = oracle::rand_tensor({2, 3, 5, 7}, rng);
  for (Index bins : {1, 2, 3, 5}) {
    check_equal(adaptive_avg_pool(x, bins), oracle::naive_adaptive_pool(x, bins), 1e-13);
  }
  CHECK_THROWS_AS(adaptive_avg_pool(x, 6), ConfigError);
}

TEST_CASE("adaptive_avg_pool gradient check") {
  RngStream rng(95);
  Tensor x = oracle::rand_tensor({1, 2, 5, 5}, rng);
  auto fn = [](const std::vector<Tensor>& in) { return adaptive_avg_pool(in[0], 2); };
  CHECK(grad_check("adaptive_avg_pool", fn, {x}, 1e-3, 1e-8).ok);
}

TEST_CASE("softmax_channels: symmetry, saturation, normalization") {
  Tensor eq = Tensor::full({1, 4, 2, 2}, 3.25);
  Tensor y = softmax_channels(eq);
  CHECK((y.data() - 0.25).abs().maxCoeff() <= 1e-15);

  ArrayX d(2);
  d << 0.0, 20.0;
  Tensor z = softmax_channels(Tensor::from_data({1, 2, 1, 1}, std::move(d)));
  CHECK(z.at(0, 1, 0, 0) >= 1 - 1e-8);

  RngStream rng(101);
  Tensor x = oracle::rand_tensor({2, 3, 4, 4}, rng, -5, 5);
  Tensor s = softmax_channels(x);
  for (Index n = 0; n < 2; ++n)
    for (Index pos = 0; pos < 16; ++pos) {
      Scalar sum = 0;
      for (Index c = 0; c < 3; ++c) sum += s.data()[(n * 3 + c) * 16 + pos];
      CHECK(std::abs(sum - 1) <= 1e-12);
    }
  CHECK_THROWS_AS(softmax_channels(Tensor::zeros({1, 1, 2, 2})), DimensionError);
}

TEST_CASE("softmax_channels gradient check") {
  RngStream rng(103);
  Tensor x = oracle::rand_tensor({1, 3, 2, 2}, rng, -2, 2);
  auto fn = [](const std::vector<Tensor>& in) { return softmax_channels(in[0]); };
  CHECK(grad_check("softmax_channels", fn, {x}, 1e-3, 1e-4).ok);
  // sum of softmax outputs is constant, so also probe a weighted reduction
  auto weighted = [](const std::vector<Tensor>& in) {
    return channel_scale(softmax_channels(in[0]), Tensor::from_data({1, 3, 1, 1}, [] {
                           ArrayX v(3);
                           v << 0.3, -1.2, 2.0;
                           return v;
                         }()));
  };
  CHECK(grad_check("softmax_weighted", weighted, {x}, 1e-3, 1e-4).ok);
}

TEST_CASE("add, channel_scale, concat_channels round trip with grads") {
  RngStream rng(111);
  Tensor a = oracle::rand_tensor({1, 2, 3, 3}, rng);
  Tensor b = oracle::rand_tensor({1, 2, 3, 3}, rng);
  check_equal(add(a, b), Tensor::from_data({1, 2, 3, 3}, ArrayX(a.data() + b.data())),
              0.0);
  CHECK_THROWS_AS(add(a, oracle::rand_tensor({1, 2, 3, 4}, rng)), DimensionError);

  auto fadd = [](const std::vector<Tensor>& in) { return add(in[0], in[1]); };
  CHECK(grad_check("add", fadd, {a, b}, 1e-3, 1e-8).ok);

  Tensor s = oracle::rand_tensor({1, 2, 1, 1}, rng);
  auto fscale = [](const std::vector<Tensor>& in) {
    return channel_scale(in[0], in[1]);
  };
  CHECK(grad_check("channel_scale", fscale, {a, s}, 1e-3, 1e-8).ok);

  Tensor c = oracle::rand_tensor({1, 3, 3, 3}, rng);
  Tensor cc = concat_channels({a, c});
  REQUIRE(cc.shape() == Shape4{1, 5, 3, 3});
  CHECK(cc.at(0, 0, 1, 1) == a.at(0, 0, 1, 1));
  CHECK(cc.at(0, 2, 2, 0) == c.at(0, 0, 2, 0));
  auto fcat = [](const std::vector<Tensor>& in) {
    return concat_channels({in[0], in[1]});
  };
  CHECK(grad_check("concat_channels", fcat, {a, c}, 1e-3, 1e-8).ok);
}

TEST_CASE("grad_check rejects a corrupted backward pass") {
  RngStream rng(121);
  Tensor x = oracle::rand_tensor({1, 1, 2, 2}, rng);
  auto bad = [](const std::vector<Tensor>& in) {
    const Tensor& t = in[0];
    ArrayX out = t.data() * 2.0;
    return Tensor::make(t.shape(), std::move(out), {t}, [](const Tensor& o) {
      o.parent(0).accumulate_grad(ArrayX(o.grad() * 2.0 * 1.01));
    });
  };
  GradCheckReport rep = grad_check("corrupted", bad, {x}, 1e-3, 1e-4);
  CHECK(!rep.ok);
  CHECK(rep.max_rel_err > 1e-3);
}

TEST_CASE("grad_check validates its step size") {
  Tensor x = Tensor::full({1, 1, 1, 1}, 0.5);
  auto fn = [](const std::vector<Tensor>& in) { return gelu(in[0]); };
  CHECK_THROWS_AS(grad_check("h", fn, {x}, 1e-6, 1e-4), ConfigError);
  CHECK_THROWS_AS(grad_check("h", fn, {x}, 0.1, 1e-4), ConfigError);
}

TEST_CASE("ops are bit-identical across worker counts") {
  RngStream rng(131);
  Tensor x = oracle::rand_tensor({3, 4, 12, 12}, rng);
  Tensor w = oracle::rand_tensor({8, 4, 3, 3}, rng);
  Tensor b = oracle::rand_tensor({1, 8, 1, 1}, rng);

  auto run = [&](int workers) {
    set_max_workers(workers);
    Tensor xi = Tensor::from_data(x.shape(), ArrayX(x.data()));
    xi.set_requires_grad(true);
    Tensor wi = Tensor::from_data(w.shape(), ArrayX(w.data()));
    wi.set_requires_grad(true);
    Tensor bi = Tensor::from_data(b.shape(), ArrayX(b.data()));
    bi.set_requires_grad(true);
    Tensor y = conv2d(xi, make_params(wi, bi, 1, 1, 1));
    Tensor z = bilinear_resize(gelu(y), 7, 7);
    z.backward();
    struct Out {
      ArrayX y, dx, dw, db;
    };
    return Out{z.data(), xi.grad(), wi.grad(), bi.grad()};
  };

  auto r1 = run(1);
  auto r4 = run(4);
  set_max_workers(4);
  CHECK(std::memcmp(r1.y.data(), r4.y.data(), sizeof(Scalar) * r1.y.size()) == 0);
  CHECK(std::memcmp(r1.dx.data(), r4.dx.data(), sizeof(Scalar) * r1.dx.size()) == 0);
  CHECK(std::memcmp(r1.dw.data(), r4.dw.data(), sizeof(Scalar) * r1.dw.size()) == 0);
  CHECK(std::memcmp(r1.db.data(), r4.db.data(), sizeof(Scalar) * r1.db.size()) == 0);
}

TEST_CASE("tensor shape validation") {
  CHECK_THROWS_AS(Tensor::zeros({0, 1, 1, 1}), DimensionError);
  CHECK_THROWS_AS(Tensor::from_data({1, 1, 2, 2}, ArrayX::Zero(3)), DimensionError);
}

TEST_CASE("backward accumulates over a shared subexpression") {
  // y = x + x: dy/dx = 2
  Tensor x = Tensor::full({1, 1, 1, 2}, 3.0);
  x.set_requires_grad(true);
  Tensor y = add(x, x);
  y.backward();
  REQUIRE(x.has_grad());
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 2.0);
}
