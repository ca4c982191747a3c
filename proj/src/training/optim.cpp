#include "agan/training.hpp"

#include <cmath>

namespace agan {

template <typename Scalar>
AdamState<Scalar> AdamState<Scalar>::for_params(const NetworkParams<Scalar>& params) {
  AdamState state;
  for (const auto& [name, t] : params.entries()) {
    state.m.push_back(Buffer<Scalar>::Zero(t.numel()));
    state.v.push_back(Buffer<Scalar>::Zero(t.numel()));
  }
  return state;
}

template <typename Scalar>
std::vector<std::string> adam_step(const NetworkParams<Scalar>& params, AdamState<Scalar>& state, double lr,
                                   const AdamOptions& options) {
  const auto& entries = params.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw TrainingError("adam_step: optimizer state has " + std::to_string(state.m.size()) +
                        " slots for " + std::to_string(entries.size()) + " parameters");
  }
  if (!(lr >= 0.0)) throw TrainingError("adam_step: learning rate must be non-negative");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const Scalar b1 = static_cast<Scalar>(options.beta1);
  const Scalar b2 = static_cast<Scalar>(options.beta2);
  const Scalar c1 = static_cast<Scalar>(1.0 - std::pow(options.beta1, t));
  const Scalar c2 = static_cast<Scalar>(1.0 - std::pow(options.beta2, t));
  const Scalar rate = static_cast<Scalar>(lr);
  const Scalar eps = static_cast<Scalar>(options.eps);

  std::vector<std::string> skipped;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& [name, p] = entries[i];
    Buffer<Scalar>& m = state.m[i];
    Buffer<Scalar>& v = state.v[i];
    if (m.size() != p.numel() || v.size() != p.numel()) {
      throw TrainingError("adam_step: moment size mismatch for " + name);
    }
    if (!p.has_grad()) {
      m *= b1;
      v *= b2;
    } else {
      const Buffer<Scalar>& g = p.grad();
      if (!g.allFinite()) {
        skipped.push_back(name);
        continue;
      }
      m = b1 * m + (Scalar(1) - b1) * g;
      v = b2 * v + (Scalar(1) - b2) * g.square();
    }
    p.mutable_data() -= rate * (m / c1) / ((v / c2).sqrt() + eps);
  }
  return skipped;
}

template struct AdamState<float>;
template struct AdamState<double>;
template std::vector<std::string> adam_step(const NetworkParams<float>&, AdamState<float>&, double, const AdamOptions&);
template std::vector<std::string> adam_step(const NetworkParams<double>&, AdamState<double>&, double,
                                            const AdamOptions&);

ReplayBuffer::ReplayBuffer(int capacity, std::uint64_t seed) : capacity_(capacity), prng_(seed) {
  if (capacity < 1) throw TrainingError("replay buffer capacity must be at least 1");
}

Tensor<float> ReplayBuffer::query(const Tensor<float>& fresh) {
  if (stored_.size() < static_cast<std::size_t>(capacity_)) return query(fresh, Branch::store, 0);
  if (prng_.bernoulli(0.5)) return query(fresh, Branch::fresh, 0);
  return query(fresh, Branch::swap, static_cast<std::size_t>(prng_.uniform_int(stored_.size())));
}

Tensor<float> ReplayBuffer::query(const Tensor<float>& fresh, Branch branch, std::size_t index) {
  const Tensor<float> image = fresh.detach();
  const bool full = stored_.size() >= static_cast<std::size_t>(capacity_);
  if (!full && branch != Branch::store) throw TrainingError("replay buffer: only the store branch applies before it is full");
  if (full && branch == Branch::store) throw TrainingError("replay buffer: cannot store into a full buffer");
  last_ = branch;
  switch (branch) {
    case Branch::store:
      stored_.push_back(image);
      return image;
    case Branch::fresh:
      return image;
    case Branch::swap: {
      if (index >= stored_.size()) throw TrainingError("replay buffer: swap index out of range");
      Tensor<float> evicted = stored_[index];
      stored_[index] = image;
      return evicted;
    }
  }
  return image;
}

void ReplayBuffer::restore(std::vector<Tensor<float>> stored, const std::string& prng_state) {
  if (stored.size() > static_cast<std::size_t>(capacity_)) throw TrainingError("replay buffer: restored pool exceeds capacity");
  stored_ = std::move(stored);
  prng_.restore(prng_state);
}

}  // namespace agan
