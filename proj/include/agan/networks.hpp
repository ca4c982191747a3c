#pragma once

#include "agan/ops.hpp"
#include "agan/random.hpp"

#include <optional>
#include <string>
#include <vector>

namespace agan {

enum class NetworkKind { attention, transform, discriminator };

std::string_view network_kind_name(NetworkKind kind);

/// Which layers a network has and how wide they are.
struct Architecture {
  NetworkKind kind = NetworkKind::transform;
  Index width_base = 16;
  Index in_channels = 3;
  Index image_size = 32;

  Index out_channels() const;
  friend bool operator==(const Architecture&, const Architecture&) = default;
};

/// Name and shape of one parameter tensor, in declaration order.
struct ParamSpec {
  std::string name;
  Shape shape;
  enum class Init { normal, zeros, ones } init;
};

/// Parameter layout implied by an architecture.
///
/// Generator trunk (attention and transform): 7x7 conv, 3x3 stride-2 conv, two residual
/// blocks at twice the base width, nearest x2 upsample + 3x3 conv, 7x7 output conv.
/// Discriminator: three 4x4 stride-2 convs (base width x1, x2, x4) and a 1-channel 4x4
/// stride-1 output conv.
std::vector<ParamSpec> describe(const Architecture& arch);

inline constexpr int kResidualBlocks = 2;
inline constexpr double kInitStddev = 0.02;

/// Ordered, uniquely named parameter tensors of one network.
template <typename Scalar>
class NetworkParams {
 public:
  NetworkParams() = default;
  explicit NetworkParams(Architecture arch) : arch_(arch) {}

  const Architecture& architecture() const { return arch_; }

  void add(std::string name, Tensor<Scalar> tensor);
  const Tensor<Scalar>& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  const std::vector<std::pair<std::string, Tensor<Scalar>>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  Index parameter_count() const;

  void set_requires_grad(bool flag) const;
  void zero_grad() const;
  /// Throws unless names and shapes match describe(architecture()) exactly.
  void validate() const;

 private:
  Architecture arch_;
  std::vector<std::pair<std::string, Tensor<Scalar>>> entries_;
};

/// Draws every weight from normal(0, 0.02); biases and norm shifts start at 0, norm scales at 1.
template <typename Scalar>
NetworkParams<Scalar> init_network(const Architecture& arch, Prng& prng);

template <typename Scalar>
struct ModelBundle {
  NetworkParams<Scalar> a_x, a_y, t_x, t_y, d_x, d_y;

  std::vector<NetworkParams<Scalar>*> generators() { return {&a_x, &a_y, &t_x, &t_y}; }
  std::vector<NetworkParams<Scalar>*> discriminators() { return {&d_x, &d_y}; }
  std::vector<std::pair<std::string, const NetworkParams<Scalar>*>> named() const {
    return {{"a_x", &a_x}, {"a_y", &a_y}, {"t_x", &t_x}, {"t_y", &t_y}, {"d_x", &d_x}, {"d_y", &d_y}};
  }
};

/// Rejects image_size not divisible by 4 and width_base < 8.
template <typename Scalar>
ModelBundle<Scalar> build_bundle(Index width_base, Index image_channels, Index image_size, Prng& prng);

/// Single-channel score map in [0, 1] with the input's spatial size.
template <typename Scalar>
Tensor<Scalar> attention_forward(const NetworkParams<Scalar>& params, const Tensor<Scalar>& x);

/// Restyled image in [-1, 1] with the input's shape.
template <typename Scalar>
Tensor<Scalar> transform_forward(const NetworkParams<Scalar>& params, const Tensor<Scalar>& x);

/// Unbounded patch score map, {1, H/8, W/8}.
template <typename Scalar>
Tensor<Scalar> discriminator_forward(const NetworkParams<Scalar>& params, const Tensor<Scalar>& x);

/// a*t + (1-a)*x with the single-channel map broadcast over the image channels.
template <typename Scalar>
Tensor<Scalar> compose(const Tensor<Scalar>& x, const Tensor<Scalar>& attention, const Tensor<Scalar>& transformed);

/// Test hook replacing the predicted attention map by a constant.
enum class ForcedAttention { none, zeros, ones };

template <typename Scalar>
struct Translation {
  Tensor<Scalar> output;
  Tensor<Scalar> attention;
  Tensor<Scalar> transformed;
};

/// X -> Y: A_X(x) * T_X(x) + (1 - A_X(x)) * x.
template <typename Scalar>
Translation<Scalar> map_g(const ModelBundle<Scalar>& bundle, const Tensor<Scalar>& x,
                          ForcedAttention forced = ForcedAttention::none);

/// Y -> X: A_Y(y) * T_Y(y) + (1 - A_Y(y)) * y.
template <typename Scalar>
Translation<Scalar> map_f(const ModelBundle<Scalar>& bundle, const Tensor<Scalar>& y,
                          ForcedAttention forced = ForcedAttention::none);

}  // namespace agan
