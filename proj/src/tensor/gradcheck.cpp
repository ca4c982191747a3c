#include "agan/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace agan {

Tensor<double> random_tensor(const Shape& shape, Prng& prng, double lo, double hi, bool avoid_zero) {
  Buffer<double> data(shape_numel(shape));
  for (Index i = 0; i < data.size(); ++i) {
    double v;
    do {
      v = prng.uniform(lo, hi);
    } while (avoid_zero && std::abs(v) <= kKinkExclusion);
    data[i] = v;
  }
  return Tensor<double>::from_buffer(shape, std::move(data));
}

double max_relative_error(const LossFn& loss, const std::vector<Tensor<double>>& inputs, double epsilon) {
  for (const auto& t : inputs) {
    Tensor<double> leaf = t;
    leaf.set_requires_grad(true);
    leaf.clear_grad();
  }
  {
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    tape.backward(loss(inputs));
  }
  double worst = 0.0;
  for (const auto& t : inputs) {
    const Buffer<double> analytic = t.has_grad() ? t.grad() : Buffer<double>::Zero(t.numel());
    Buffer<double>& values = t.mutable_data();
    for (Index i = 0; i < t.numel(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double plus = loss(inputs).item();
      values[i] = saved - epsilon;
      const double minus = loss(inputs).item();
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

GradcheckResult run_gradcheck(const GradcheckCase& gc, int trials, double epsilon, double tolerance, Prng& prng) {
  GradcheckResult result{gc.name, trials, 0.0, true};
  for (int t = 0; t < trials; ++t) {
    const auto inputs = gc.make_inputs(prng);
    const double err = max_relative_error(gc.loss, inputs, epsilon);
    if (!std::isfinite(err)) result.max_relative_error = err;
    else result.max_relative_error = std::max(result.max_relative_error, err);
  }
  result.passed = std::isfinite(result.max_relative_error) && result.max_relative_error <= tolerance;
  return result;
}

namespace {

using Inputs = std::vector<Tensor<double>>;

// Projects an arbitrary-shaped output onto a scalar with fixed random weights so that every
// output element contributes a distinct gradient.
Tensor<double> project(const Tensor<double>& out, const Tensor<double>& weights) {
  return sum(mul(out, weights));
}

GradcheckCase elementwise_case(std::string name, bool avoid_zero,
                               std::function<Tensor<double>(const Tensor<double>&)> op) {
  const Shape shape{2, 3, 4};
  return GradcheckCase{
      std::move(name),
      [=](Prng& prng) { return Inputs{random_tensor(shape, prng, -2, 2, avoid_zero)}; },
      [=](const Inputs& in) {
        Prng weights_rng(7);
        return project(op(in[0]), random_tensor(shape, weights_rng));
      }};
}

GradcheckCase binary_case(std::string name, std::function<Tensor<double>(const Tensor<double>&, const Tensor<double>&)> op) {
  const Shape shape{2, 3, 4};
  return GradcheckCase{
      std::move(name),
      [=](Prng& prng) {
        // Every other trial exercises the scalar-broadcast rule.
        const bool broadcast = prng.bernoulli(0.5);
        return Inputs{random_tensor(shape, prng), random_tensor(broadcast ? Shape{1} : shape, prng)};
      },
      [=](const Inputs& in) {
        Prng weights_rng(11);
        return project(op(in[0], in[1]), random_tensor(shape, weights_rng));
      }};
}

}  // namespace

GradcheckCase op_gradcheck_case(OpKind kind) {
  const std::string name(op_name(kind));
  switch (kind) {
    case OpKind::add:
      return binary_case(name, [](const auto& a, const auto& b) { return add(a, b); });
    case OpKind::sub:
      return binary_case(name, [](const auto& a, const auto& b) { return sub(a, b); });
    case OpKind::mul:
      return binary_case(name, [](const auto& a, const auto& b) { return mul(a, b); });
    case OpKind::scale:
      return elementwise_case(name, false, [](const auto& x) { return scale(x, 1.7); });
    case OpKind::abs:
      return elementwise_case(name, true, [](const auto& x) { return abs(x); });
    case OpKind::square:
      return elementwise_case(name, false, [](const auto& x) { return square(x); });
    case OpKind::relu:
      return elementwise_case(name, true, [](const auto& x) { return relu(x); });
    case OpKind::leaky_relu:
      return elementwise_case(name, true, [](const auto& x) { return leaky_relu(x); });
    case OpKind::sigmoid:
      return elementwise_case(name, false, [](const auto& x) { return sigmoid(x); });
    case OpKind::tanh:
      return elementwise_case(name, false, [](const auto& x) { return tanh(x); });
    case OpKind::mean:
    case OpKind::sum: {
      const bool is_mean = kind == OpKind::mean;
      return GradcheckCase{
          name, [](Prng& prng) { return Inputs{random_tensor({3, 4}, prng)}; },
          [is_mean](const Inputs& in) {
            // Squared so the gradient depends on the forward value.
            return square(is_mean ? mean(in[0]) : sum(in[0]));
          }};
    }
    case OpKind::conv2d:
      return GradcheckCase{
          name,
          [](Prng& prng) {
            return Inputs{random_tensor({2, 3, 5, 5}, prng), random_tensor({4, 3, 3, 3}, prng, -0.5, 0.5),
                          random_tensor({4}, prng)};
          },
          [](const Inputs& in) {
            // Reflection padding at stride 1 and asymmetric zero padding at stride 2.
            const auto a = conv2d(in[0], in[1], in[2], Conv2dOptions::padded(1, PadMode::reflect));
            const auto b = conv2d(in[0], in[1], in[2], Conv2dOptions{2, 1, 0, 2, 1, PadMode::zero});
            return add(sum(square(a)), sum(square(b)));
          }};
    case OpKind::nearest_upsample:
      return GradcheckCase{name, [](Prng& prng) { return Inputs{random_tensor({2, 3, 3}, prng)}; },
                           [](const Inputs& in) {
                             Prng weights_rng(13);
                             return project(nearest_upsample(in[0]), random_tensor({2, 6, 6}, weights_rng));
                           }};
    case OpKind::instance_norm:
      return GradcheckCase{
          name,
          [](Prng& prng) {
            return Inputs{random_tensor({2, 3, 4, 4}, prng), random_tensor({3}, prng), random_tensor({3}, prng)};
          },
          [](const Inputs& in) {
            Prng weights_rng(17);
            return project(instance_norm(in[0], in[1], in[2]), random_tensor({2, 3, 4, 4}, weights_rng));
          }};
    case OpKind::concat:
      return GradcheckCase{
          name, [](Prng& prng) { return Inputs{random_tensor({2, 3, 4}, prng), random_tensor({2, 1, 4}, prng)}; },
          [](const Inputs& in) {
            Prng weights_rng(19);
            return project(concat({in[0], in[1]}, 1), random_tensor({2, 4, 4}, weights_rng));
          }};
    case OpKind::slice:
      return GradcheckCase{name, [](Prng& prng) { return Inputs{random_tensor({3, 5, 2}, prng)}; },
                           [](const Inputs& in) {
                             Prng weights_rng(23);
                             return project(slice(in[0], 1, 1, 4), random_tensor({3, 3, 2}, weights_rng));
                           }};
  }
  throw TensorError("gradcheck: unknown op");
}

GradcheckResult gradcheck(OpKind kind, int trials, double epsilon, double tolerance, std::uint64_t seed) {
  Prng prng(seed);
  return run_gradcheck(op_gradcheck_case(kind), trials, epsilon, tolerance, prng);
}

BackwardFault::BackwardFault(OpKind kind) {
  Tape<double>::corrupted_op() = std::string(op_name(kind));
  Tape<float>::corrupted_op() = std::string(op_name(kind));
}

BackwardFault::~BackwardFault() {
  Tape<double>::corrupted_op().clear();
  Tape<float>::corrupted_op().clear();
}

}  // namespace agan
