#pragma once

#include "agan/ops.hpp"
#include "agan/random.hpp"

#include <functional>
#include <string>
#include <vector>

namespace agan {

using LossFn = std::function<Tensor<double>(const std::vector<Tensor<double>>& inputs)>;

/// One differentiable scenario: a generator of fresh leaf inputs and a scalar loss over them.
struct GradcheckCase {
  std::string name;
  std::function<std::vector<Tensor<double>>(Prng&)> make_inputs;
  LossFn loss;
};

struct GradcheckResult {
  std::string name;
  int trials = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

inline constexpr double kGradcheckEpsilon = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;
/// Inputs of relu, leaky_relu and abs are redrawn until they are this far from the kink.
inline constexpr double kKinkExclusion = 1e-3;

/// Largest elementwise |analytic - numeric| / max(1, |analytic|, |numeric|) over every input
/// element, where numeric is the central difference (f(x+e) - f(x-e)) / 2e.
double max_relative_error(const LossFn& loss, const std::vector<Tensor<double>>& inputs, double epsilon);

GradcheckResult run_gradcheck(const GradcheckCase& gc, int trials, double epsilon, double tolerance, Prng& prng);

/// Case exercising one catalog op on random inputs in [-2, 2].
GradcheckCase op_gradcheck_case(OpKind kind);

GradcheckResult gradcheck(OpKind kind, int trials = 10, double epsilon = kGradcheckEpsilon,
                          double tolerance = kGradcheckTolerance, std::uint64_t seed = 1);

/// Random tensor with entries uniform in [lo, hi]; when `avoid_zero` is set, entries with
/// |v| <= kKinkExclusion are redrawn.
Tensor<double> random_tensor(const Shape& shape, Prng& prng, double lo = -2.0, double hi = 2.0,
                             bool avoid_zero = false);

/// Corrupts the backward rule of one op (see Tape::corrupted_op) for the object's lifetime.
class BackwardFault {
 public:
  explicit BackwardFault(OpKind kind);
  ~BackwardFault();
  BackwardFault(const BackwardFault&) = delete;
  BackwardFault& operator=(const BackwardFault&) = delete;
};

}  // namespace agan
