#include "cd3net/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "cd3net/errors.hpp"

namespace cd3net {
inline namespace CD3NET_ABI {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real{0}, requires_grad);
}

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  auto node = std::make_shared<detail::Node>();
  node->data.assign(shape_size(shape), value);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::from(Shape shape, std::vector<Real> data, bool requires_grad) {
  if (shape_size(shape) != data.size()) {
    throw InvalidArgument("Tensor::from: shape " + shape_str(shape) +
                          " does not match " + std::to_string(data.size()) +
                          " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw InvalidArgument("Tensor::dim: axis " + std::to_string(axis) +
                          " out of range for shape " + shape_str(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->data.size(); }

std::span<const Real> Tensor::data() const { return node_->data; }

std::span<Real> Tensor::mutable_data() { return node_->data; }

Real Tensor::item() const {
  if (size() != 1) {
    throw InvalidArgument("Tensor::item on tensor of shape " +
                          shape_str(shape()));
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const Real> Tensor::grad() const { return node_->grad; }

std::span<Real> Tensor::mutable_grad() { return grad_buffer(*this); }

void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  return Tensor::from(node_->shape, node_->data, false);
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) {
  g_grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_mode_enabled() { return g_grad_enabled; }

Tensor make_op_result(Shape shape, std::vector<Real> data,
                      const std::vector<Tensor>& parents,
                      BackwardFn backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) {
                                   return p.requires_grad();
                                 });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) {
        if (p.requires_grad()) node->parents.push_back(p.node());
      }
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

std::span<Real> grad_buffer(const Tensor& t) {
  auto& node = *t.node();
  if (node.grad.empty()) node.grad.assign(node.data.size(), Real{0});
  return node.grad;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw InvalidArgument("backward: loss must be a scalar tensor");
  }
  if (!loss.requires_grad()) {
    throw InvalidArgument(
        "backward: loss does not depend on any tensor requiring grad");
  }

  // Iterative post-order DFS; `order` ends up with parents before children.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (!node->is_leaf()) node->grad.assign(node->data.size(), Real{0});
  }
  if (loss.node()->grad.empty()) loss.node()->grad.assign(1, Real{0});
  loss.node()->grad[0] += Real{1};

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->is_leaf()) continue;
    node->backward(node->grad);
  }
  // Interior buffers are no longer needed once propagated.
  for (detail::Node* node : order) {
    if (!node->is_leaf() && node != loss.node().get()) {
      std::vector<Real>().swap(node->grad);
    }
  }
}

namespace {

double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

double check_params(const std::function<Tensor()>& f,
                    const std::vector<Tensor>& params, double h,
                    Stencil stencil) {
  std::vector<Tensor> ps = params;
  for (auto& p : ps) p.zero_grad();
  Tensor loss = f();
  backward(loss);
  std::vector<std::vector<Real>> analytic;
  analytic.reserve(ps.size());
  for (auto& p : ps) {
    if (p.has_grad()) {
      analytic.emplace_back(p.grad().begin(), p.grad().end());
    } else {
      analytic.emplace_back(p.size(), Real{0});
    }
  }

  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    auto values = ps[k].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      auto at = [&](double offset) {
        values[i] = static_cast<Real>(saved + offset);
        return double(f().item());
      };
      double numeric = (at(h) - at(-h)) / (2.0 * h);
      if (stencil == Stencil::central4) {
        const double wide = (at(2 * h) - at(-2 * h)) / (4.0 * h);
        numeric = (4.0 * numeric - wide) / 3.0;
      }
      values[i] = saved;
      worst = std::max(worst, relative_error(analytic[k][i], numeric));
    }
  }
  return worst;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& x, double h, Stencil stencil) {
  Tensor leaf = Tensor::from(x.shape(),
                             std::vector<Real>(x.data().begin(),
                                               x.data().end()),
                             true);
  return check_params([&] { return f(leaf); }, {leaf}, h, stencil);
}

double grad_check(const std::function<Tensor()>& f,
                  const std::vector<Tensor>& params, double h,
                  Stencil stencil) {
  return check_params(f, params, h, stencil);
}

}  // namespace CD3NET_ABI
}  // namespace cd3net
