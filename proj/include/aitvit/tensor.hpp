#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major
// double tensors. A Tensor is an immutable handle; the only state that
// changes after construction is the gradient slot filled in by backward().

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace aitvit {

using Shape = std::vector<std::size_t>;
using Buffer = std::shared_ptr<const std::vector<double>>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor variable(Shape shape, std::vector<double> values);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  // Leaf sharing an existing buffer; used to bind parameters without a copy.
  static Tensor leaf(Shape shape, Buffer values, bool requires_grad);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  const Buffer& buffer() const;
  double item() const;
  double at(std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;

  // New leaf over the same values, cut off from the graph.
  Tensor detach(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(detail::Node&)>);

  std::shared_ptr<detail::Node> node_;
};

namespace detail {
struct Node {
  Shape shape;
  Buffer value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into inputs[i]->grad.
  std::function<void(Node&)> backward;

  std::vector<double>& grad_buffer() {
    if (grad.size() != value->size()) grad.assign(value->size(), 0.0);
    return grad;
  }
};
}  // namespace detail

// Builds a graph node; backward_fn is dropped when no input requires grad.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward_fn);

// -- operations -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, double b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor sum(const Tensor& a);

// x [rows x in] * w [in x out] + b [out], bias broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
Tensor gelu(const Tensor& x);

// -log softmax(logits)[label]; logits has exactly K entries (any shape).
Tensor cross_entropy(const Tensor& logits, std::size_t label);

Tensor reshape(const Tensor& x, Shape shape);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

// Sliding windows over the columns of a [rows x width] matrix. Window t
// becomes output row t, laid out rail by rail: [x[0, t*s .. t*s+k), x[1, ...)].
Tensor unfold_cols(const Tensor& x, std::size_t kernel, std::size_t stride);

// Reverse-mode sweep from a scalar. Gradients of every reachable
// requires_grad tensor are overwritten (not accumulated).
void backward(const Tensor& loss);

}  // namespace aitvit
