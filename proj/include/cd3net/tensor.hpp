#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Every tensor owns its buffer; operations always allocate fresh outputs, so
// nothing in the graph aliases mutable storage. An operation whose inputs
// require gradients records its parents and a backward closure on the output
// node. backward() walks the recorded graph in reverse topological order.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "cd3net/real.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Receives d(loss)/d(output); accumulates into the parents' grads.
  std::function<void(std::span<const Real>)> backward;

  bool is_leaf() const { return !backward; }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> data,
                     bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const Real> data() const;
  // Mutable access is meant for leaves (parameters, optimizer updates).
  std::span<Real> mutable_data();
  Real item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();
  void zero_grad();

  // Copy of the values with no graph history.
  Tensor detach() const;

  // Internal: used by operation implementations.
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node)
      : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_mode_enabled();

using BackwardFn = std::function<void(std::span<const Real>)>;

/// Builds an operation output. The closure is recorded only when at least one
/// parent requires gradients and grad mode is enabled.
Tensor make_op_result(Shape shape, std::vector<Real> data,
                      const std::vector<Tensor>& parents, BackwardFn backward);

/// Gradient buffer of an operation input, allocated (zeroed) on first use.
std::span<Real> grad_buffer(const Tensor& t);

/// Reverse-mode accumulation from a scalar. Leaf gradients accumulate across
/// calls; interior gradients are recomputed on every call.
void backward(const Tensor& loss);

/// Central-difference stencils: `central` is (f(x+h) - f(x-h)) / 2h,
/// `central4` the five-point form with O(h^4) truncation error, useful when
/// the graph is badly conditioned enough that roundoff at small h matters.
enum class Stencil { central, central4 };

/// Max over elements of |analytic - central difference| /
/// max(|analytic|, |central difference|, 1e-12).
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double h, Stencil stencil = Stencil::central);

/// Same check over several parameters captured by `f`.
double grad_check(const std::function<Tensor()>& f,
                  const std::vector<Tensor>& params, double h,
                  Stencil stencil = Stencil::central);

}  // namespace CD3NET_ABI
}  // namespace cd3net
