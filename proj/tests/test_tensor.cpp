#include "doctest.h"

#include "agan/gradcheck.hpp"
#include "agan/ops.hpp"

#include <cmath>
#include <cstring>

using namespace agan;

namespace {

// Direct nested-loop convolution, independent of the patch-matrix path.
Tensor<double> direct_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                           const Conv2dOptions& o) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const Index ho = (h + o.pad_top + o.pad_bottom - kh) / o.stride + 1;
  const Index wo = (wd + o.pad_left + o.pad_right - kw) / o.stride + 1;
  auto at = [&](Index ni, Index ci, Index y, Index xx) -> double {
    if (o.mode == PadMode::reflect) {
      y = y < 0 ? -y : (y >= h ? 2 * h - 2 - y : y);
      xx = xx < 0 ? -xx : (xx >= wd ? 2 * wd - 2 - xx : xx);
    } else if (y < 0 || y >= h || xx < 0 || xx >= wd) {
      return 0.0;
    }
    return x[((ni * c + ci) * h + y) * wd + xx];
  };
  Buffer<double> out(n * co * ho * wo);
  for (Index ni = 0; ni < n; ++ni)
    for (Index oc = 0; oc < co; ++oc)
      for (Index oy = 0; oy < ho; ++oy)
        for (Index ox = 0; ox < wo; ++ox) {
          double acc = b.defined() ? b[oc] : 0.0;
          for (Index ci = 0; ci < c; ++ci)
            for (Index i = 0; i < kh; ++i)
              for (Index j = 0; j < kw; ++j)
                acc += w[((oc * c + ci) * kh + i) * kw + j] *
                       at(ni, ci, oy * o.stride - o.pad_top + i, ox * o.stride - o.pad_left + j);
          out[((ni * co + oc) * ho + oy) * wo + ox] = acc;
        }
  return Tensor<double>::from_buffer({n, co, ho, wo}, out);
}

}  // namespace

TEST_CASE("elementwise forward values") {
  CHECK(sigmoid(Tensor<double>::scalar(0.0)).item() == doctest::Approx(0.5));
  auto r = relu(Tensor<double>::from_values({3}, {-1.0, 0.0, 2.0}));
  CHECK(r[0] == 0.0);
  CHECK(r[1] == 0.0);
  CHECK(r[2] == 2.0);
  auto l = leaky_relu(Tensor<float>::from_values({2}, {-1.0f, 3.0f}));
  CHECK(l[0] == doctest::Approx(-0.2f));
  CHECK(l[1] == 3.0f);
}

TEST_CASE("conv2d of ones has center value 9") {
  auto x = Tensor<double>::ones({1, 1, 3, 3});
  auto k = Tensor<double>::ones({1, 1, 3, 3});
  auto y = conv2d(x, k, Tensor<double>{}, Conv2dOptions::padded(1, PadMode::zero));
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  CHECK(y[4] == 9.0);
  CHECK(y[0] == 4.0);
  auto oracle = direct_conv(x, k, Tensor<double>{}, Conv2dOptions::padded(1, PadMode::zero));
  CHECK((y.data() - oracle.data()).abs().maxCoeff() == 0.0);
}

TEST_CASE("conv2d matches direct convolution for every padding mode") {
  Prng prng(3);
  auto x = random_tensor({2, 3, 7, 6}, prng);
  auto w = random_tensor({4, 3, 3, 3}, prng);
  auto b = random_tensor({4}, prng);
  for (const auto& opt : {Conv2dOptions::padded(1, PadMode::reflect), Conv2dOptions::padded(3, PadMode::reflect, 1),
                          Conv2dOptions::padded(1, PadMode::zero, 2), Conv2dOptions{1, 1, 1, 2, 2, PadMode::zero},
                          Conv2dOptions::padded(1, PadMode::reflect, 2)}) {
    if (opt.pad_top >= 6) continue;
    auto y = conv2d(x, w, b, opt);
    auto ref = direct_conv(x, w, b, opt);
    REQUIRE(y.shape() == ref.shape());
    CHECK((y.data() - ref.data()).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("conv2d accepts a single {C,H,W} sample") {
  Prng prng(5);
  auto x = random_tensor({3, 8, 8}, prng);
  auto w = random_tensor({2, 3, 4, 4}, prng);
  auto y = conv2d(x, w, Tensor<double>{}, Conv2dOptions::padded(1, PadMode::zero, 2));
  CHECK(y.shape() == Shape{2, 4, 4});
}

TEST_CASE("shape errors name the op and both shapes") {
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({3, 2});
  try {
    add(a, b);
    FAIL("expected rejection");
  } catch (const TensorError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d(Tensor<double>::zeros({1, 2, 5, 5}), Tensor<double>::zeros({1, 3, 3, 3}), Tensor<double>{},
                         Conv2dOptions{}),
                  TensorError);
  CHECK_THROWS_AS(slice(Tensor<double>::zeros({2, 3}), 1, 2, 5), TensorError);
  CHECK_THROWS_AS(Tensor<double>::from_values({2}, {1.0}), TensorError);
}

TEST_CASE("non-finite operands are rejected") {
  auto x = Tensor<double>::from_values({2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(tanh(x), TensorError);
  CHECK_THROWS_AS(add(x, x), TensorError);
}

TEST_CASE("backward basics") {
  SUBCASE("mean spreads the gradient evenly") {
    auto x = Tensor<double>::from_values({4}, {1, 2, 3, 4});
    x.set_requires_grad(true);
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    tape.backward(mean(x));
    for (Index i = 0; i < 4; ++i) CHECK(x.grad()[i] == 0.25);
  }
  SUBCASE("sigmoid slope at zero") {
    auto x = Tensor<double>::scalar(0.0);
    x.set_requires_grad(true);
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    tape.backward(sigmoid(x));
    CHECK(x.grad()[0] == doctest::Approx(0.25));
  }
  SUBCASE("non-scalar loss is rejected") {
    auto x = Tensor<double>::ones({3});
    x.set_requires_grad(true);
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    CHECK_THROWS_AS(tape.backward(square(x)), TensorError);
  }
  SUBCASE("leaves off the path receive zero") {
    auto x = Tensor<double>::ones({3});
    auto unused = Tensor<double>::ones({3});
    x.set_requires_grad(true);
    unused.set_requires_grad(true);
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    auto side = square(unused);
    tape.backward(sum(x));
    REQUIRE(unused.has_grad());
    CHECK(unused.grad().abs().maxCoeff() == 0.0);
  }
  SUBCASE("backward twice doubles leaf gradients") {
    Prng prng(9);
    auto x = random_tensor({2, 3}, prng);
    x.set_requires_grad(true);
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    auto loss = sum(square(tanh(x)));
    tape.backward(loss);
    const Buffer<double> once = x.grad();
    tape.backward(loss);
    CHECK((x.grad() - 2.0 * once).abs().maxCoeff() < 1e-15);
  }
  SUBCASE("no tape, no recording") {
    auto x = Tensor<double>::ones({2});
    x.set_requires_grad(true);
    auto y = tanh(x);
    CHECK(y.is_leaf());
    CHECK_FALSE(y.requires_grad());
  }
}

TEST_CASE("sum(square(conv2d)) gradient matches central differences") {
  Prng prng(21);
  std::vector<Tensor<double>> inputs{random_tensor({1, 2, 5, 5}, prng), random_tensor({3, 2, 3, 3}, prng)};
  LossFn loss = [](const std::vector<Tensor<double>>& in) {
    return sum(square(conv2d(in[0], in[1], Tensor<double>{}, Conv2dOptions::padded(1, PadMode::zero))));
  };
  CHECK(max_relative_error(loss, inputs, 1e-5) <= 1e-4);
}

TEST_CASE("gradcheck passes for every catalog op") {
  for (OpKind kind : kAllOps) {
    const auto report = gradcheck(kind, 10, 1e-5, 1e-4, 42);
    INFO(report.name << " max relative error " << report.max_relative_error);
    CHECK(report.passed);
  }
}

TEST_CASE("instance_norm normalizes every plane") {
  Prng prng(31);
  auto x = random_tensor({2, 3, 8, 8}, prng, -2.0, 5.0);
  auto y = instance_norm(x, Tensor<double>{}, Tensor<double>{});
  for (Index pl = 0; pl < 6; ++pl) {
    const auto seg = y.data().segment(pl * 64, 64);
    const double mu = seg.mean();
    CHECK(std::abs(mu) <= 1e-5);
    CHECK(std::abs((seg - mu).square().mean() - 1.0) <= 1e-4);
  }
}

TEST_CASE("forward is pure") {
  Prng prng(33);
  auto x = random_tensor({3, 6, 6}, prng);
  auto w = random_tensor({2, 3, 3, 3}, prng);
  auto run = [&] {
    return tanh(instance_norm(conv2d(x, w, Tensor<double>{}, Conv2dOptions::padded(1, PadMode::reflect)),
                              Tensor<double>{}, Tensor<double>{}));
  };
  auto a = run();
  auto b = run();
  CHECK(std::memcmp(a.data().data(), b.data().data(), sizeof(double) * a.numel()) == 0);
}

TEST_CASE("concat and slice are inverse along an axis") {
  Prng prng(35);
  auto a = random_tensor({2, 3, 4}, prng);
  auto b = random_tensor({2, 2, 4}, prng);
  auto c = concat({a, b}, 1);
  CHECK(c.shape() == Shape{2, 5, 4});
  CHECK((slice(c, 1, 0, 3).data() - a.data()).abs().maxCoeff() == 0.0);
  CHECK((slice(c, 1, 3, 5).data() - b.data()).abs().maxCoeff() == 0.0);
}

TEST_CASE("prng streams are reproducible and restorable") {
  Prng a(123), b(123);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  const auto state = a.save();
  const double u = a.uniform();
  Prng c(0);
  c.restore(state);
  CHECK(c.uniform() == u);
  for (int i = 0; i < 1000; ++i) {
    const double v = a.uniform();
    CHECK((v >= 0.0 && v < 1.0));
    CHECK(a.uniform_int(7) < 7);
  }
}
