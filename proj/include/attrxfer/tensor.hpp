#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace attrxfer {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Thrown by forward ops when operand shapes do not conform.
class ShapeMismatch : public std::invalid_argument {
 public:
  ShapeMismatch(const std::string& op, const Shape& lhs, const Shape& rhs);
  const std::string op;
  const Shape lhs, rhs;
};

struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated iff requires_grad
  bool requires_grad = false;
};

// Value-semantic handle to a dense 64-bit tensor (rank 0 is not used; scalars
// are shape {1}). Copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> value);
  static Tensor scalar(double v) { return constant({1}, {v}); }
  static Tensor zeros(Shape shape);
  // Leaf with requires_grad set; grad starts at zero.
  static Tensor param(Shape shape, std::vector<double> value);

  bool defined() const { return n_ != nullptr; }
  const Shape& shape() const { return n_->shape; }
  std::size_t numel() const { return n_->value.size(); }
  std::size_t rank() const { return n_->shape.size(); }
  std::size_t rows() const { return n_->shape.at(0); }
  std::size_t cols() const { return n_->shape.at(1); }

  const std::vector<double>& value() const { return n_->value; }
  std::vector<double>& raw_value() { return n_->value; }
  const std::vector<double>& grad() const { return n_->grad; }
  std::vector<double>& raw_grad() { return n_->grad; }
  bool requires_grad() const { return n_->requires_grad; }

  double item() const;
  double v(std::size_t i) const { return n_->value[i]; }
  double v(std::size_t i, std::size_t j) const {
    return n_->value[i * n_->shape[1] + j];
  }
  double g(std::size_t i) const { return n_->grad[i]; }

  // identity of the underlying node; used to deduplicate shared parameters
  const TensorNode* node() const { return n_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : n_(std::move(n)) {}
  std::shared_ptr<TensorNode> n_;
  friend class Tape;
};

// Define-by-run recorder. Every forward op computes values immediately and,
// when an input requires grad (and recording is on), appends a backward
// closure. Closures run in reverse append order, which is a valid reverse
// topological order by construction.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // When off, ops compute values only; outputs never require grad.
  void set_recording(bool on) { recording_ = on; }
  bool recording() const { return recording_; }
  std::size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

  // --- elementwise / broadcast ---
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  // X [m,n] + v [n], broadcast across rows (bias add)
  Tensor add_rowvec(const Tensor& x, const Tensor& v);
  // X [m,n] * v [m], broadcast across columns (row scaling / masking)
  Tensor mul_colvec(const Tensor& x, const Tensor& v);
  Tensor scale(const Tensor& x, double c);
  Tensor tanh(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  // log(max(x, 1e-12)); gradient is zero in the clamped region
  Tensor log_clamped(const Tensor& x);

  // --- linear algebra ---
  Tensor matmul(const Tensor& a, const Tensor& b);

  // --- structure ---
  Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
  Tensor stack_rows(const std::vector<Tensor>& rows);
  Tensor stack_cols(const std::vector<Tensor>& cols);
  Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1);
  Tensor slice(const Tensor& v, std::size_t i0, std::size_t i1);
  Tensor row(const Tensor& x, std::size_t i);
  Tensor col(const Tensor& x, std::size_t j);
  Tensor gather_rows(const Tensor& table, const std::vector<int>& ids);
  Tensor pick(const Tensor& x, const std::vector<int>& ids);
  Tensor at(const Tensor& x, std::size_t i, std::size_t j);

  // --- normalization (axis = last; rank 1 or 2) ---
  Tensor softmax(const Tensor& x);
  // mask is a 0/1 constant of the same shape; masked entries get probability
  // zero. A fully masked row is an error.
  Tensor masked_softmax(const Tensor& x, const Tensor& mask);
  Tensor log_softmax(const Tensor& x);

  // --- reductions ---
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);
  Tensor row_sum(const Tensor& x);
  // max over axis 0 of [T,F] -> [F]; ties route the gradient to the lowest t
  Tensor max_over_time(const Tensor& x);

  // --- convolution ---
  // x [T,d], kernels [F, w*d], valid padding -> [T-w+1, F]
  Tensor conv1d(const Tensor& x, const Tensor& kernels, std::size_t width);

  // Populates grads of every requires_grad leaf with d loss / d leaf.
  // loss must be scalar (numel == 1).
  void backward(const Tensor& loss);

 private:
  Tensor make(Shape shape, bool requires_grad);
  bool out_rg(const Tensor& a) const {
    return recording_ && a.requires_grad();
  }
  bool out_rg(const Tensor& a, const Tensor& b) const {
    return recording_ && (a.requires_grad() || b.requires_grad());
  }
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }

  std::vector<std::function<void()>> ops_;
  bool recording_ = true;
};

}  // namespace attrxfer
