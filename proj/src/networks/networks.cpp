#include "agan/networks.hpp"

#include <unordered_set>

namespace agan {

std::string_view network_kind_name(NetworkKind kind) {
  switch (kind) {
    case NetworkKind::attention: return "attention";
    case NetworkKind::transform: return "transform";
    case NetworkKind::discriminator: return "discriminator";
  }
  return "unknown";
}

Index Architecture::out_channels() const {
  switch (kind) {
    case NetworkKind::attention: return 1;
    case NetworkKind::transform: return in_channels;
    case NetworkKind::discriminator: return 1;
  }
  return 0;
}

namespace {

void conv_spec(std::vector<ParamSpec>& out, const std::string& name, Index cin, Index cout, Index k) {
  out.push_back({name + ".weight", {cout, cin, k, k}, ParamSpec::Init::normal});
  out.push_back({name + ".bias", {cout}, ParamSpec::Init::zeros});
}

void norm_spec(std::vector<ParamSpec>& out, const std::string& name, Index channels) {
  out.push_back({name + ".gamma", {channels}, ParamSpec::Init::ones});
  out.push_back({name + ".beta", {channels}, ParamSpec::Init::zeros});
}

}  // namespace

std::vector<ParamSpec> describe(const Architecture& arch) {
  std::vector<ParamSpec> specs;
  const Index w = arch.width_base;
  if (arch.kind == NetworkKind::discriminator) {
    conv_spec(specs, "c1", arch.in_channels, w, 4);
    conv_spec(specs, "c2", w, 2 * w, 4);
    norm_spec(specs, "n2", 2 * w);
    conv_spec(specs, "c3", 2 * w, 4 * w, 4);
    norm_spec(specs, "n3", 4 * w);
    conv_spec(specs, "out", 4 * w, 1, 4);
    return specs;
  }
  conv_spec(specs, "in", arch.in_channels, w, 7);
  norm_spec(specs, "in_norm", w);
  conv_spec(specs, "down", w, 2 * w, 3);
  norm_spec(specs, "down_norm", 2 * w);
  for (int r = 0; r < kResidualBlocks; ++r) {
    const std::string p = "res" + std::to_string(r);
    conv_spec(specs, p + ".c1", 2 * w, 2 * w, 3);
    norm_spec(specs, p + ".n1", 2 * w);
    conv_spec(specs, p + ".c2", 2 * w, 2 * w, 3);
    norm_spec(specs, p + ".n2", 2 * w);
  }
  conv_spec(specs, "up", 2 * w, w, 3);
  norm_spec(specs, "up_norm", w);
  conv_spec(specs, "out", w, arch.out_channels(), 7);
  return specs;
}

template <typename Scalar>
void NetworkParams<Scalar>::add(std::string name, Tensor<Scalar> tensor) {
  if (contains(name)) throw TensorError("duplicate parameter name '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(tensor));
}

template <typename Scalar>
const Tensor<Scalar>& NetworkParams<Scalar>::get(std::string_view name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw TensorError("no parameter named '" + std::string(name) + "'");
}

template <typename Scalar>
bool NetworkParams<Scalar>::contains(std::string_view name) const {
  for (const auto& entry : entries_) {
    if (entry.first == name) return true;
  }
  return false;
}

template <typename Scalar>
Index NetworkParams<Scalar>::parameter_count() const {
  Index n = 0;
  for (const auto& entry : entries_) n += entry.second.numel();
  return n;
}

template <typename Scalar>
void NetworkParams<Scalar>::set_requires_grad(bool flag) const {
  for (const auto& entry : entries_) {
    Tensor<Scalar> t = entry.second;
    t.set_requires_grad(flag);
  }
}

template <typename Scalar>
void NetworkParams<Scalar>::zero_grad() const {
  for (const auto& entry : entries_) entry.second.clear_grad();
}

template <typename Scalar>
void NetworkParams<Scalar>::validate() const {
  const auto specs = describe(arch_);
  if (specs.size() != entries_.size()) {
    throw TensorError(std::string(network_kind_name(arch_.kind)) + " network expects " +
                      std::to_string(specs.size()) + " parameters, found " + std::to_string(entries_.size()));
  }
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (specs[i].name != entries_[i].first || specs[i].shape != entries_[i].second.shape()) {
      throw TensorError("parameter '" + entries_[i].first + "' " + shape_string(entries_[i].second.shape()) +
                        " does not match expected '" + specs[i].name + "' " + shape_string(specs[i].shape));
    }
  }
}

template <typename Scalar>
NetworkParams<Scalar> init_network(const Architecture& arch, Prng& prng) {
  NetworkParams<Scalar> params(arch);
  for (const auto& spec : describe(arch)) {
    Buffer<Scalar> data(shape_numel(spec.shape));
    switch (spec.init) {
      case ParamSpec::Init::normal:
        for (Index i = 0; i < data.size(); ++i) data[i] = static_cast<Scalar>(prng.normal(0.0, kInitStddev));
        break;
      case ParamSpec::Init::zeros: data.setZero(); break;
      case ParamSpec::Init::ones: data.setOnes(); break;
    }
    params.add(spec.name, Tensor<Scalar>::from_buffer(spec.shape, std::move(data)));
  }
  return params;
}

template <typename Scalar>
ModelBundle<Scalar> build_bundle(Index width_base, Index image_channels, Index image_size, Prng& prng) {
  if (image_size <= 0 || image_size % 4 != 0) {
    throw TensorError("build_bundle: image size " + std::to_string(image_size) + " must be a positive multiple of 4");
  }
  if (width_base < 8) throw TensorError("build_bundle: width_base must be at least 8");
  if (image_channels <= 0) throw TensorError("build_bundle: image_channels must be positive");
  const Architecture attention{NetworkKind::attention, width_base, image_channels, image_size};
  const Architecture transform{NetworkKind::transform, width_base, image_channels, image_size};
  const Architecture discriminator{NetworkKind::discriminator, width_base, image_channels, image_size};
  ModelBundle<Scalar> bundle;
  bundle.a_x = init_network<Scalar>(attention, prng);
  bundle.a_y = init_network<Scalar>(attention, prng);
  bundle.t_x = init_network<Scalar>(transform, prng);
  bundle.t_y = init_network<Scalar>(transform, prng);
  bundle.d_x = init_network<Scalar>(discriminator, prng);
  bundle.d_y = init_network<Scalar>(discriminator, prng);
  return bundle;
}

namespace {

template <typename Scalar>
void check_image(const char* op, const NetworkParams<Scalar>& params, const Tensor<Scalar>& x) {
  const Architecture& arch = params.architecture();
  if (x.rank() != 3 || x.dim(0) != arch.in_channels || x.dim(1) % 4 != 0 || x.dim(2) % 4 != 0 || x.dim(1) < 8 ||
      x.dim(2) < 8) {
    throw TensorError(std::string(op) + ": expected a {" + std::to_string(arch.in_channels) +
                      ",H,W} image with H and W multiples of 4 (>= 8), got " + shape_string(x.shape()));
  }
}

template <typename Scalar>
Tensor<Scalar> conv(const NetworkParams<Scalar>& p, const std::string& name, const Tensor<Scalar>& x,
                    const Conv2dOptions& opt) {
  return conv2d(x, p.get(name + ".weight"), p.get(name + ".bias"), opt);
}

template <typename Scalar>
Tensor<Scalar> norm(const NetworkParams<Scalar>& p, const std::string& name, const Tensor<Scalar>& x) {
  return instance_norm(x, p.get(name + ".gamma"), p.get(name + ".beta"));
}

// Shared body of the attention and transform networks, up to the output conv's pre-activation.
template <typename Scalar>
Tensor<Scalar> generator_trunk(const NetworkParams<Scalar>& p, const Tensor<Scalar>& x) {
  const auto reflect3 = Conv2dOptions::padded(3, PadMode::reflect);
  const auto reflect1 = Conv2dOptions::padded(1, PadMode::reflect);
  Tensor<Scalar> h = relu(norm(p, "in_norm", conv(p, "in", x, reflect3)));
  h = relu(norm(p, "down_norm", conv(p, "down", h, Conv2dOptions::padded(1, PadMode::reflect, 2))));
  for (int r = 0; r < kResidualBlocks; ++r) {
    const std::string b = "res" + std::to_string(r);
    Tensor<Scalar> branch = relu(norm(p, b + ".n1", conv(p, b + ".c1", h, reflect1)));
    branch = norm(p, b + ".n2", conv(p, b + ".c2", branch, reflect1));
    h = add(h, branch);
  }
  h = relu(norm(p, "up_norm", conv(p, "up", nearest_upsample(h), reflect1)));
  return conv(p, "out", h, reflect3);
}

}  // namespace

template <typename Scalar>
Tensor<Scalar> attention_forward(const NetworkParams<Scalar>& params, const Tensor<Scalar>& x) {
  if (params.architecture().kind != NetworkKind::attention) throw TensorError("attention_forward: wrong network kind");
  check_image("attention_forward", params, x);
  return sigmoid(generator_trunk(params, x));
}

template <typename Scalar>
Tensor<Scalar> transform_forward(const NetworkParams<Scalar>& params, const Tensor<Scalar>& x) {
  if (params.architecture().kind != NetworkKind::transform) throw TensorError("transform_forward: wrong network kind");
  check_image("transform_forward", params, x);
  return tanh(generator_trunk(params, x));
}

template <typename Scalar>
Tensor<Scalar> discriminator_forward(const NetworkParams<Scalar>& params, const Tensor<Scalar>& x) {
  if (params.architecture().kind != NetworkKind::discriminator) {
    throw TensorError("discriminator_forward: wrong network kind");
  }
  check_image("discriminator_forward", params, x);
  const auto down = Conv2dOptions::padded(1, PadMode::zero, 2);
  Tensor<Scalar> h = leaky_relu(conv(params, "c1", x, down));
  h = leaky_relu(norm(params, "n2", conv(params, "c2", h, down)));
  h = leaky_relu(norm(params, "n3", conv(params, "c3", h, down)));
  // One row/column more padding after than before keeps the spatial extent at stride 1.
  return conv(params, "out", h, Conv2dOptions{1, 1, 1, 2, 2, PadMode::zero});
}

template <typename Scalar>
Tensor<Scalar> compose(const Tensor<Scalar>& x, const Tensor<Scalar>& attention, const Tensor<Scalar>& transformed) {
  if (x.shape() != transformed.shape() || x.rank() != 3 || attention.rank() != 3 || attention.dim(0) != 1 ||
      attention.dim(1) != x.dim(1) || attention.dim(2) != x.dim(2)) {
    throw TensorError("compose: shapes " + shape_string(x.shape()) + ", " + shape_string(attention.shape()) + ", " +
                      shape_string(transformed.shape()) + " do not conform");
  }
  if ((attention.data() < Scalar(0)).any() || (attention.data() > Scalar(1)).any()) {
    throw TensorError("compose: attention values must lie in [0, 1]");
  }
  std::vector<Tensor<Scalar>> copies(static_cast<std::size_t>(x.dim(0)), attention);
  const Tensor<Scalar> a = x.dim(0) == 1 ? attention : concat(std::span<const Tensor<Scalar>>(copies), 0);
  const Tensor<Scalar> keep = sub(Tensor<Scalar>::scalar(Scalar(1)), a);
  return add(mul(a, transformed), mul(keep, x));
}

namespace {

template <typename Scalar>
Translation<Scalar> translate(const NetworkParams<Scalar>& attention_net, const NetworkParams<Scalar>& transform_net,
                              const Tensor<Scalar>& x, ForcedAttention forced) {
  Translation<Scalar> out;
  switch (forced) {
    case ForcedAttention::none: out.attention = attention_forward(attention_net, x); break;
    case ForcedAttention::zeros: out.attention = Tensor<Scalar>::zeros({1, x.dim(1), x.dim(2)}); break;
    case ForcedAttention::ones: out.attention = Tensor<Scalar>::ones({1, x.dim(1), x.dim(2)}); break;
  }
  out.transformed = transform_forward(transform_net, x);
  out.output = compose(x, out.attention, out.transformed);
  return out;
}

}  // namespace

template <typename Scalar>
Translation<Scalar> map_g(const ModelBundle<Scalar>& bundle, const Tensor<Scalar>& x, ForcedAttention forced) {
  return translate(bundle.a_x, bundle.t_x, x, forced);
}

template <typename Scalar>
Translation<Scalar> map_f(const ModelBundle<Scalar>& bundle, const Tensor<Scalar>& y, ForcedAttention forced) {
  return translate(bundle.a_y, bundle.t_y, y, forced);
}

#define AGAN_INSTANTIATE_NETWORKS(S)                                                                      \
  template class NetworkParams<S>;                                                                        \
  template NetworkParams<S> init_network<S>(const Architecture&, Prng&);                                  \
  template ModelBundle<S> build_bundle<S>(Index, Index, Index, Prng&);                                    \
  template Tensor<S> attention_forward<S>(const NetworkParams<S>&, const Tensor<S>&);                     \
  template Tensor<S> transform_forward<S>(const NetworkParams<S>&, const Tensor<S>&);                     \
  template Tensor<S> discriminator_forward<S>(const NetworkParams<S>&, const Tensor<S>&);                 \
  template Tensor<S> compose<S>(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);                    \
  template Translation<S> map_g<S>(const ModelBundle<S>&, const Tensor<S>&, ForcedAttention);             \
  template Translation<S> map_f<S>(const ModelBundle<S>&, const Tensor<S>&, ForcedAttention);

AGAN_INSTANTIATE_NETWORKS(float)
AGAN_INSTANTIATE_NETWORKS(double)

}  // namespace agan
