#pragma once

#include <Eigen/Core>

#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace agan {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

/// Raised for shape violations, non-finite operands and contract breaches in the engine.
class TensorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Index shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct TensorStorage {
  Shape shape;
  Buffer<Scalar> data;
  Buffer<Scalar> grad;  // size 0 until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
};

/// Shared handle to a dense row-major array with an optional gradient slot.
/// Copies alias the same storage, like an Eigen::Ref to a heap buffer.
template <typename Scalar>
class Tensor {
 public:
  using Storage = TensorStorage<Scalar>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Storage> storage) : storage_(std::move(storage)) {}

  static Tensor zeros(const Shape& shape) { return full(shape, Scalar(0)); }
  static Tensor ones(const Shape& shape) { return full(shape, Scalar(1)); }
  static Tensor full(const Shape& shape, Scalar value) {
    return from_buffer(shape, Buffer<Scalar>::Constant(shape_numel(shape), value));
  }
  static Tensor scalar(Scalar value) { return full({1}, value); }
  static Tensor from_buffer(const Shape& shape, Buffer<Scalar> data) {
    validate_shape(shape);
    if (data.size() != shape_numel(shape)) {
      throw TensorError("tensor data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_string(shape));
    }
    auto storage = std::make_shared<Storage>();
    storage->shape = shape;
    storage->data = std::move(data);
    return Tensor(std::move(storage));
  }
  static Tensor from_values(const Shape& shape, std::initializer_list<Scalar> values) {
    Buffer<Scalar> data(static_cast<Index>(values.size()));
    Index i = 0;
    for (Scalar v : values) data[i++] = v;
    return from_buffer(shape, std::move(data));
  }

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const { return storage().shape; }
  Index rank() const { return static_cast<Index>(shape().size()); }
  Index dim(Index axis) const { return shape().at(static_cast<std::size_t>(axis)); }
  Index numel() const { return storage().data.size(); }

  const Buffer<Scalar>& data() const { return storage().data; }
  /// Mutable access; reserved for optimizers, initializers and test hooks.
  Buffer<Scalar>& mutable_data() const { return storage().data; }
  Scalar item() const {
    if (numel() != 1) throw TensorError("item() on tensor of shape " + shape_string(shape()));
    return storage().data[0];
  }
  Scalar operator[](Index i) const { return storage().data[i]; }

  bool requires_grad() const { return storage().requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    storage().requires_grad = flag;
    return *this;
  }
  bool is_leaf() const { return storage().is_leaf; }
  bool has_grad() const { return storage().grad.size() == numel(); }
  const Buffer<Scalar>& grad() const { return storage().grad; }
  Buffer<Scalar>& mutable_grad() const { return storage().grad; }
  void zero_grad() const { storage().grad.setZero(numel()); }
  void clear_grad() const { storage().grad.resize(0); }

  /// New leaf holding a copy of the values, cut off from any tape.
  Tensor detach() const { return from_buffer(shape(), data()); }
  Tensor clone() const { return detach(); }

  const std::shared_ptr<Storage>& handle() const { return storage_; }

 private:
  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw TensorError("tensor shape must have at least one dimension");
    for (Index d : shape) {
      if (d <= 0) throw TensorError("tensor shape " + shape_string(shape) + " has a non-positive dimension");
    }
  }
  Storage& storage() const {
    if (!storage_) throw TensorError("use of an undefined tensor");
    return *storage_;
  }

  std::shared_ptr<Storage> storage_;
};

/// Ordered record of differentiable operations executed while the tape is active.
///
/// Operations record onto the tape that is active on the calling thread (see Tape::Scope)
/// whenever at least one operand requires a gradient. backward() walks the record in
/// reverse, so the record order is a valid topological order by construction.
template <typename Scalar>
class Tape {
 public:
  using StoragePtr = std::shared_ptr<TensorStorage<Scalar>>;
  /// Receives d(loss)/d(output) and accumulates into the operands' gradient slots.
  using BackwardFn = std::function<void(const Buffer<Scalar>& grad_output)>;

  struct Node {
    std::string op;
    std::vector<StoragePtr> operands;
    StoragePtr output;
    BackwardFn backward;
  };

  /// Makes a tape the active one for the current thread for the scope's lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape) : previous_(current()) { current() = &tape; }
    ~Scope() { current() = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return current(); }

  /// Fault injection for checker self-tests: while non-empty, nodes recorded under this op name
  /// receive 1.5 times their true output gradient.
  static std::string& corrupted_op() {
    thread_local std::string op;
    return op;
  }

  void record(std::string op, std::vector<StoragePtr> operands, StoragePtr output, BackwardFn backward) {
    output->is_leaf = false;
    output->requires_grad = true;
    nodes_.push_back(Node{std::move(op), std::move(operands), std::move(output), std::move(backward)});
  }

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }
  void clear() { nodes_.clear(); }

  void backward(const Tensor<Scalar>& loss) {
    if (loss.numel() != 1) {
      throw TensorError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
    }
    const auto& target = loss.handle();
    if (!target->is_leaf) {
      bool found = false;
      for (const Node& node : nodes_) found = found || node.output == target;
      if (!found) throw TensorError("backward: loss was not produced on this tape");
    }
    for (Node& node : nodes_) node.output->grad.setZero(node.output->data.size());
    if (target->is_leaf) {
      if (target->requires_grad) accumulate(target, Buffer<Scalar>::Ones(1));
      return;
    }
    target->grad.setOnes(1);
    const std::string& corrupted = corrupted_op();
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!corrupted.empty() && it->op == corrupted) {
        const Buffer<Scalar> wrong = it->output->grad * Scalar(1.5);
        it->backward(wrong);
      } else {
        it->backward(it->output->grad);
      }
    }
  }

  /// Adds `delta` into the gradient slot, allocating it on first use.
  template <typename Derived>
  static void accumulate(const StoragePtr& storage, const Eigen::ArrayBase<Derived>& delta) {
    if (!storage->requires_grad) return;
    if (storage->grad.size() != storage->data.size()) storage->grad.setZero(storage->data.size());
    storage->grad += delta;
  }

 private:
  static Tape*& current() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

  std::vector<Node> nodes_;
};

}  // namespace agan
