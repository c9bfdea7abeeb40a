#include "attrxfer/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace attrxfer {

namespace {
constexpr double kLogClamp = 1e-12;

void check_rank12(const char* op, const Tensor& x) {
  if (x.rank() != 1 && x.rank() != 2) {
    throw std::invalid_argument(std::string(op) + ": expected rank 1 or 2, got " +
                                shape_str(x.shape()));
  }
}
}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

ShapeMismatch::ShapeMismatch(const std::string& op_, const Shape& lhs_,
                             const Shape& rhs_)
    : std::invalid_argument(op_ + ": shape mismatch " + shape_str(lhs_) +
                            " vs " + shape_str(rhs_)),
      op(op_),
      lhs(lhs_),
      rhs(rhs_) {}

Tensor Tensor::constant(Shape shape, std::vector<double> value) {
  if (shape_numel(shape) != value.size()) {
    throw std::invalid_argument("tensor: " + shape_str(shape) + " needs " +
                                std::to_string(shape_numel(shape)) +
                                " values, got " + std::to_string(value.size()));
  }
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape) {
  std::size_t count = shape_numel(shape);
  return constant(std::move(shape), std::vector<double>(count, 0.0));
}

Tensor Tensor::param(Shape shape, std::vector<double> value) {
  Tensor t = constant(std::move(shape), std::move(value));
  t.n_->requires_grad = true;
  t.n_->grad.assign(t.n_->value.size(), 0.0);
  return t;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item: tensor " + shape_str(shape()) +
                                " is not scalar");
  }
  return n_->value[0];
}

Tensor Tape::make(Shape shape, bool requires_grad) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->value.resize(shape_numel(n->shape));
  n->requires_grad = requires_grad;
  if (requires_grad) n->grad.assign(n->value.size(), 0.0);
  return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------
// elementwise

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("add", a.shape(), b.shape());
  Tensor out = make(a.shape(), out_rg(a, b));
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.n_->value[i] = a.n_->value[i] + b.n_->value[i];
  if (out.requires_grad()) {
    record([an = a.n_, bn = b.n_, on = out.n_] {
      const std::size_t n = on->value.size();
      if (an->requires_grad)
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("sub", a.shape(), b.shape());
  Tensor out = make(a.shape(), out_rg(a, b));
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.n_->value[i] = a.n_->value[i] - b.n_->value[i];
  if (out.requires_grad()) {
    record([an = a.n_, bn = b.n_, on = out.n_] {
      const std::size_t n = on->value.size();
      if (an->requires_grad)
        for (std::size_t i = 0; i < n; ++i) an->grad[i] += on->grad[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < n; ++i) bn->grad[i] -= on->grad[i];
    });
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch("mul", a.shape(), b.shape());
  Tensor out = make(a.shape(), out_rg(a, b));
  const std::size_t n = a.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.n_->value[i] = a.n_->value[i] * b.n_->value[i];
  if (out.requires_grad()) {
    record([an = a.n_, bn = b.n_, on = out.n_] {
      const std::size_t n = on->value.size();
      if (an->requires_grad)
        for (std::size_t i = 0; i < n; ++i)
          an->grad[i] += on->grad[i] * bn->value[i];
      if (bn->requires_grad)
        for (std::size_t i = 0; i < n; ++i)
          bn->grad[i] += on->grad[i] * an->value[i];
    });
  }
  return out;
}

Tensor Tape::add_rowvec(const Tensor& x, const Tensor& v) {
  if (x.rank() != 2 || v.rank() != 1 || x.cols() != v.shape()[0])
    throw ShapeMismatch("add_rowvec", x.shape(), v.shape());
  Tensor out = make(x.shape(), out_rg(x, v));
  const std::size_t m = x.rows(), n = x.cols();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      out.n_->value[i * n + j] = x.n_->value[i * n + j] + v.n_->value[j];
  if (out.requires_grad()) {
    record([xn = x.n_, vn = v.n_, on = out.n_, m, n] {
      if (xn->requires_grad)
        for (std::size_t i = 0; i < m * n; ++i) xn->grad[i] += on->grad[i];
      if (vn->requires_grad)
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            vn->grad[j] += on->grad[i * n + j];
    });
  }
  return out;
}

Tensor Tape::mul_colvec(const Tensor& x, const Tensor& v) {
  if (x.rank() != 2 || v.rank() != 1 || x.rows() != v.shape()[0])
    throw ShapeMismatch("mul_colvec", x.shape(), v.shape());
  Tensor out = make(x.shape(), out_rg(x, v));
  const std::size_t m = x.rows(), n = x.cols();
  for (std::size_t i = 0; i < m; ++i) {
    const double s = v.n_->value[i];
    for (std::size_t j = 0; j < n; ++j)
      out.n_->value[i * n + j] = x.n_->value[i * n + j] * s;
  }
  if (out.requires_grad()) {
    record([xn = x.n_, vn = v.n_, on = out.n_, m, n] {
      if (xn->requires_grad)
        for (std::size_t i = 0; i < m; ++i) {
          const double s = vn->value[i];
          for (std::size_t j = 0; j < n; ++j)
            xn->grad[i * n + j] += on->grad[i * n + j] * s;
        }
      if (vn->requires_grad)
        for (std::size_t i = 0; i < m; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            acc += on->grad[i * n + j] * xn->value[i * n + j];
          vn->grad[i] += acc;
        }
    });
  }
  return out;
}

Tensor Tape::scale(const Tensor& x, double c) {
  Tensor out = make(x.shape(), out_rg(x));
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) out.n_->value[i] = x.n_->value[i] * c;
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, c] {
      const std::size_t n = on->value.size();
      for (std::size_t i = 0; i < n; ++i) xn->grad[i] += on->grad[i] * c;
    });
  }
  return out;
}

Tensor Tape::tanh(const Tensor& x) {
  Tensor out = make(x.shape(), out_rg(x));
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) out.n_->value[i] = std::tanh(x.n_->value[i]);
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_] {
      const std::size_t n = on->value.size();
      for (std::size_t i = 0; i < n; ++i) {
        const double y = on->value[i];
        xn->grad[i] += on->grad[i] * (1.0 - y * y);
      }
    });
  }
  return out;
}

Tensor Tape::sigmoid(const Tensor& x) {
  Tensor out = make(x.shape(), out_rg(x));
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x.n_->value[i];
    // stable for both signs
    out.n_->value[i] = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                              : std::exp(v) / (1.0 + std::exp(v));
  }
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_] {
      const std::size_t n = on->value.size();
      for (std::size_t i = 0; i < n; ++i) {
        const double y = on->value[i];
        xn->grad[i] += on->grad[i] * y * (1.0 - y);
      }
    });
  }
  return out;
}

Tensor Tape::log_clamped(const Tensor& x) {
  Tensor out = make(x.shape(), out_rg(x));
  const std::size_t n = x.numel();
  for (std::size_t i = 0; i < n; ++i)
    out.n_->value[i] = std::log(std::max(x.n_->value[i], kLogClamp));
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_] {
      const std::size_t n = on->value.size();
      for (std::size_t i = 0; i < n; ++i)
        if (xn->value[i] > kLogClamp)
          xn->grad[i] += on->grad[i] / xn->value[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// linear algebra

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeMismatch("matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = make({m, n}, out_rg(a, b));
  const double* av = a.n_->value.data();
  const double* bv = b.n_->value.data();
  double* ov = out.n_->value.data();
  std::fill(ov, ov + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      const double* brow = bv + p * n;
      double* orow = ov + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  if (out.requires_grad()) {
    record([an = a.n_, bn = b.n_, on = out.n_, m, k, n] {
      const double* g = on->grad.data();
      if (an->requires_grad) {
        double* ga = an->grad.data();
        const double* bv = bn->value.data();
        // dA = g . B^T
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* grow = g + i * n;
            const double* brow = bv + p * n;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
      }
      if (bn->requires_grad) {
        double* gb = bn->grad.data();
        const double* av = an->value.data();
        // dB = A^T . g
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double s = av[i * k + p];
            const double* grow = g + i * n;
            double* gbrow = gb + p * n;
            for (std::size_t j = 0; j < n; ++j) gbrow[j] += s * grow[j];
          }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// structure

Tensor Tape::concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank()) throw ShapeMismatch("concat", a.shape(), b.shape());
  Shape out_shape;
  if (a.rank() == 1) {
    if (axis != 0) throw std::invalid_argument("concat: axis out of range");
    out_shape = {a.shape()[0] + b.shape()[0]};
  } else if (a.rank() == 2) {
    if (axis == 0) {
      if (a.cols() != b.cols()) throw ShapeMismatch("concat", a.shape(), b.shape());
      out_shape = {a.rows() + b.rows(), a.cols()};
    } else if (axis == 1) {
      if (a.rows() != b.rows()) throw ShapeMismatch("concat", a.shape(), b.shape());
      out_shape = {a.rows(), a.cols() + b.cols()};
    } else {
      throw std::invalid_argument("concat: axis out of range");
    }
  } else {
    throw std::invalid_argument("concat: rank > 2 unsupported");
  }
  Tensor out = make(out_shape, out_rg(a, b));
  if (a.rank() == 1 || axis == 0) {
    std::copy(a.n_->value.begin(), a.n_->value.end(), out.n_->value.begin());
    std::copy(b.n_->value.begin(), b.n_->value.end(),
              out.n_->value.begin() + static_cast<long>(a.numel()));
    if (out.requires_grad()) {
      record([an = a.n_, bn = b.n_, on = out.n_] {
        const std::size_t na = an->value.size();
        if (an->requires_grad)
          for (std::size_t i = 0; i < na; ++i) an->grad[i] += on->grad[i];
        if (bn->requires_grad)
          for (std::size_t i = 0; i < bn->value.size(); ++i)
            bn->grad[i] += on->grad[na + i];
      });
    }
  } else {
    const std::size_t m = a.rows(), ca = a.cols(), cb = b.cols();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(a.n_->value.begin() + static_cast<long>(i * ca), ca,
                  out.n_->value.begin() + static_cast<long>(i * (ca + cb)));
      std::copy_n(b.n_->value.begin() + static_cast<long>(i * cb), cb,
                  out.n_->value.begin() + static_cast<long>(i * (ca + cb) + ca));
    }
    if (out.requires_grad()) {
      record([an = a.n_, bn = b.n_, on = out.n_, m, ca, cb] {
        for (std::size_t i = 0; i < m; ++i) {
          if (an->requires_grad)
            for (std::size_t j = 0; j < ca; ++j)
              an->grad[i * ca + j] += on->grad[i * (ca + cb) + j];
          if (bn->requires_grad)
            for (std::size_t j = 0; j < cb; ++j)
              bn->grad[i * cb + j] += on->grad[i * (ca + cb) + ca + j];
        }
      });
    }
  }
  return out;
}

Tensor Tape::stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw std::invalid_argument("stack_rows: empty input");
  const std::size_t n = rows[0].numel();
  bool rg = false;
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.numel() != n)
      throw ShapeMismatch("stack_rows", rows[0].shape(), r.shape());
    rg = rg || r.requires_grad();
  }
  Tensor out = make({rows.size(), n}, recording_ && rg);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].n_->value.begin(), rows[i].n_->value.end(),
              out.n_->value.begin() + static_cast<long>(i * n));
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<TensorNode>> parents;
    parents.reserve(rows.size());
    for (const auto& r : rows) parents.push_back(r.n_);
    record([parents = std::move(parents), on = out.n_, n] {
      for (std::size_t i = 0; i < parents.size(); ++i)
        if (parents[i]->requires_grad)
          for (std::size_t j = 0; j < n; ++j)
            parents[i]->grad[j] += on->grad[i * n + j];
    });
  }
  return out;
}

Tensor Tape::stack_cols(const std::vector<Tensor>& cols) {
  if (cols.empty()) throw std::invalid_argument("stack_cols: empty input");
  const std::size_t m = cols[0].numel();
  bool rg = false;
  for (const auto& c : cols) {
    if (c.rank() != 1 || c.numel() != m)
      throw ShapeMismatch("stack_cols", cols[0].shape(), c.shape());
    rg = rg || c.requires_grad();
  }
  const std::size_t k = cols.size();
  Tensor out = make({m, k}, recording_ && rg);
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < m; ++i)
      out.n_->value[i * k + j] = cols[j].n_->value[i];
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<TensorNode>> parents;
    parents.reserve(k);
    for (const auto& c : cols) parents.push_back(c.n_);
    record([parents = std::move(parents), on = out.n_, m, k] {
      for (std::size_t j = 0; j < k; ++j)
        if (parents[j]->requires_grad)
          for (std::size_t i = 0; i < m; ++i)
            parents[j]->grad[i] += on->grad[i * k + j];
    });
  }
  return out;
}

Tensor Tape::slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  if (x.rank() != 2 || r0 > r1 || r1 > x.rows())
    throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) +
                                "," + std::to_string(r1) + ") for " +
                                shape_str(x.shape()));
  const std::size_t n = x.cols();
  Tensor out = make({r1 - r0, n}, out_rg(x));
  std::copy_n(x.n_->value.begin() + static_cast<long>(r0 * n), (r1 - r0) * n,
              out.n_->value.begin());
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, r0, n] {
      for (std::size_t i = 0; i < on->value.size(); ++i)
        xn->grad[r0 * n + i] += on->grad[i];
    });
  }
  return out;
}

Tensor Tape::slice(const Tensor& v, std::size_t i0, std::size_t i1) {
  if (v.rank() != 1 || i0 > i1 || i1 > v.numel())
    throw std::invalid_argument("slice: bad range [" + std::to_string(i0) +
                                "," + std::to_string(i1) + ") for " +
                                shape_str(v.shape()));
  Tensor out = make({i1 - i0}, out_rg(v));
  std::copy_n(v.n_->value.begin() + static_cast<long>(i0), i1 - i0,
              out.n_->value.begin());
  if (out.requires_grad()) {
    record([vn = v.n_, on = out.n_, i0] {
      for (std::size_t i = 0; i < on->value.size(); ++i)
        vn->grad[i0 + i] += on->grad[i];
    });
  }
  return out;
}

Tensor Tape::row(const Tensor& x, std::size_t i) {
  if (x.rank() != 2 || i >= x.rows())
    throw std::invalid_argument("row: index " + std::to_string(i) +
                                " out of range for " + shape_str(x.shape()));
  const std::size_t n = x.cols();
  Tensor out = make({n}, out_rg(x));
  std::copy_n(x.n_->value.begin() + static_cast<long>(i * n), n,
              out.n_->value.begin());
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, i, n] {
      for (std::size_t j = 0; j < n; ++j) xn->grad[i * n + j] += on->grad[j];
    });
  }
  return out;
}

Tensor Tape::col(const Tensor& x, std::size_t j) {
  if (x.rank() != 2 || j >= x.cols())
    throw std::invalid_argument("col: index " + std::to_string(j) +
                                " out of range for " + shape_str(x.shape()));
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = make({m}, out_rg(x));
  for (std::size_t i = 0; i < m; ++i) out.n_->value[i] = x.n_->value[i * n + j];
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, j, m, n] {
      for (std::size_t i = 0; i < m; ++i) xn->grad[i * n + j] += on->grad[i];
    });
  }
  return out;
}

Tensor Tape::gather_rows(const Tensor& table, const std::vector<int>& ids) {
  if (table.rank() != 2)
    throw std::invalid_argument("gather_rows: table must be rank 2, got " +
                                shape_str(table.shape()));
  const std::size_t v = table.rows(), d = table.cols();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= v)
      throw std::invalid_argument("gather_rows: id " + std::to_string(id) +
                                  " out of range for " + shape_str(table.shape()));
  Tensor out = make({ids.size(), d}, out_rg(table));
  for (std::size_t r = 0; r < ids.size(); ++r)
    std::copy_n(table.n_->value.begin() + static_cast<long>(ids[r] * static_cast<long>(d)),
                d, out.n_->value.begin() + static_cast<long>(r * d));
  if (out.requires_grad()) {
    record([tn = table.n_, on = out.n_, ids, d] {
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (std::size_t j = 0; j < d; ++j)
          tn->grad[static_cast<std::size_t>(ids[r]) * d + j] +=
              on->grad[r * d + j];
    });
  }
  return out;
}

Tensor Tape::pick(const Tensor& x, const std::vector<int>& ids) {
  if (x.rank() != 2 || ids.size() != x.rows())
    throw std::invalid_argument("pick: need one id per row of " +
                                shape_str(x.shape()));
  const std::size_t n = x.cols();
  for (int id : ids)
    if (id < 0 || static_cast<std::size_t>(id) >= n)
      throw std::invalid_argument("pick: id " + std::to_string(id) +
                                  " out of range for " + shape_str(x.shape()));
  Tensor out = make({ids.size()}, out_rg(x));
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.n_->value[i] = x.n_->value[i * n + static_cast<std::size_t>(ids[i])];
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, ids, n] {
      for (std::size_t i = 0; i < ids.size(); ++i)
        xn->grad[i * n + static_cast<std::size_t>(ids[i])] += on->grad[i];
    });
  }
  return out;
}

Tensor Tape::at(const Tensor& x, std::size_t i, std::size_t j) {
  if (x.rank() != 2 || i >= x.rows() || j >= x.cols())
    throw std::invalid_argument("at: (" + std::to_string(i) + "," +
                                std::to_string(j) + ") out of range for " +
                                shape_str(x.shape()));
  const std::size_t n = x.cols();
  Tensor out = make({1}, out_rg(x));
  out.n_->value[0] = x.n_->value[i * n + j];
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, i, j, n] {
      xn->grad[i * n + j] += on->grad[0];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// normalization

namespace {
struct RowView {
  std::size_t rows, cols;
};
RowView row_view(const Tensor& x) {
  if (x.rank() == 1) return {1, x.numel()};
  return {x.rows(), x.cols()};
}
}  // namespace

Tensor Tape::softmax(const Tensor& x) {
  check_rank12("softmax", x);
  auto [m, n] = row_view(x);
  Tensor out = make(x.shape(), out_rg(x));
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x.n_->value.data() + i * n;
    double* oi = out.n_->value.data() + i * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      oi[j] = std::exp(xi[j] - mx);
      z += oi[j];
    }
    for (std::size_t j = 0; j < n; ++j) oi[j] /= z;
  }
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = on->value.data() + i * n;
        const double* g = on->grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        double* gx = xn->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

Tensor Tape::masked_softmax(const Tensor& x, const Tensor& mask) {
  check_rank12("masked_softmax", x);
  if (mask.shape() != x.shape())
    throw ShapeMismatch("masked_softmax", x.shape(), mask.shape());
  auto [m, n] = row_view(x);
  Tensor out = make(x.shape(), out_rg(x));
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x.n_->value.data() + i * n;
    const double* mi = mask.n_->value.data() + i * n;
    double* oi = out.n_->value.data() + i * n;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j)
      if (mi[j] != 0.0) mx = std::max(mx, xi[j]);
    if (mx == -std::numeric_limits<double>::infinity())
      throw std::invalid_argument("masked_softmax: row " + std::to_string(i) +
                                  " is fully masked");
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      oi[j] = mi[j] != 0.0 ? std::exp(xi[j] - mx) : 0.0;
      z += oi[j];
    }
    for (std::size_t j = 0; j < n; ++j) oi[j] /= z;
  }
  if (out.requires_grad()) {
    // mask is treated as a constant; gradient flows through x only
    record([xn = x.n_, on = out.n_, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = on->value.data() + i * n;
        const double* g = on->grad.data() + i * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
        double* gx = xn->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

Tensor Tape::log_softmax(const Tensor& x) {
  check_rank12("log_softmax", x);
  auto [m, n] = row_view(x);
  Tensor out = make(x.shape(), out_rg(x));
  for (std::size_t i = 0; i < m; ++i) {
    const double* xi = x.n_->value.data() + i * n;
    double* oi = out.n_->value.data() + i * n;
    double mx = xi[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xi[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xi[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) oi[j] = xi[j] - lz;
  }
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        const double* y = on->value.data() + i * n;
        const double* g = on->grad.data() + i * n;
        double gsum = 0.0;
        for (std::size_t j = 0; j < n; ++j) gsum += g[j];
        double* gx = xn->grad.data() + i * n;
        for (std::size_t j = 0; j < n; ++j)
          gx[j] += g[j] - std::exp(y[j]) * gsum;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// reductions

Tensor Tape::sum(const Tensor& x) {
  Tensor out = make({1}, out_rg(x));
  double acc = 0.0;
  for (double v : x.n_->value) acc += v;
  out.n_->value[0] = acc;
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_] {
      const double g = on->grad[0];
      for (double& gi : xn->grad) gi += g;
    });
  }
  return out;
}

Tensor Tape::mean(const Tensor& x) {
  const double inv = 1.0 / static_cast<double>(x.numel());
  Tensor out = make({1}, out_rg(x));
  double acc = 0.0;
  for (double v : x.n_->value) acc += v;
  out.n_->value[0] = acc * inv;
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, inv] {
      const double g = on->grad[0] * inv;
      for (double& gi : xn->grad) gi += g;
    });
  }
  return out;
}

Tensor Tape::row_sum(const Tensor& x) {
  if (x.rank() != 2)
    throw std::invalid_argument("row_sum: expected rank 2, got " +
                                shape_str(x.shape()));
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = make({m}, out_rg(x));
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += x.n_->value[i * n + j];
    out.n_->value[i] = acc;
  }
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, m, n] {
      for (std::size_t i = 0; i < m; ++i) {
        const double g = on->grad[i];
        for (std::size_t j = 0; j < n; ++j) xn->grad[i * n + j] += g;
      }
    });
  }
  return out;
}

Tensor Tape::max_over_time(const Tensor& x) {
  if (x.rank() != 2 || x.rows() == 0)
    throw std::invalid_argument("max_over_time: expected nonempty rank 2, got " +
                                shape_str(x.shape()));
  const std::size_t t = x.rows(), f = x.cols();
  Tensor out = make({f}, out_rg(x));
  std::vector<std::size_t> arg(f, 0);
  for (std::size_t j = 0; j < f; ++j) {
    double best = x.n_->value[j];
    std::size_t bi = 0;
    for (std::size_t i = 1; i < t; ++i) {
      const double v = x.n_->value[i * f + j];
      if (v > best) {
        best = v;
        bi = i;
      }
    }
    out.n_->value[j] = best;
    arg[j] = bi;
  }
  if (out.requires_grad()) {
    record([xn = x.n_, on = out.n_, arg = std::move(arg), f] {
      for (std::size_t j = 0; j < f; ++j)
        xn->grad[arg[j] * f + j] += on->grad[j];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// convolution

Tensor Tape::conv1d(const Tensor& x, const Tensor& kernels, std::size_t width) {
  if (x.rank() != 2 || kernels.rank() != 2 || width == 0 ||
      kernels.cols() != width * x.cols())
    throw ShapeMismatch("conv1d", x.shape(), kernels.shape());
  if (x.rows() < width)
    throw std::invalid_argument("conv1d: input length " +
                                std::to_string(x.rows()) +
                                " shorter than filter width " +
                                std::to_string(width));
  const std::size_t t = x.rows(), d = x.cols(), f = kernels.rows();
  const std::size_t to = t - width + 1;
  Tensor out = make({to, f}, out_rg(x, kernels));
  for (std::size_t i = 0; i < to; ++i) {
    const double* window = x.n_->value.data() + i * d;
    for (std::size_t q = 0; q < f; ++q) {
      const double* k = kernels.n_->value.data() + q * (width * d);
      double acc = 0.0;
      for (std::size_t u = 0; u < width * d; ++u) acc += k[u] * window[u];
      out.n_->value[i * f + q] = acc;
    }
  }
  if (out.requires_grad()) {
    record([xn = x.n_, kn = kernels.n_, on = out.n_, to, f, width, d] {
      for (std::size_t i = 0; i < to; ++i) {
        const double* window = xn->value.data() + i * d;
        for (std::size_t q = 0; q < f; ++q) {
          const double g = on->grad[i * f + q];
          if (g == 0.0) continue;
          const double* k = kn->value.data() + q * (width * d);
          if (xn->requires_grad) {
            double* gx = xn->grad.data() + i * d;
            for (std::size_t u = 0; u < width * d; ++u) gx[u] += g * k[u];
          }
          if (kn->requires_grad) {
            double* gk = kn->grad.data() + q * (width * d);
            for (std::size_t u = 0; u < width * d; ++u) gk[u] += g * window[u];
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument(
        "backward: loss must be scalar, got " +
        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  if (loss.requires_grad()) loss.n_->grad[0] = 1.0;
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

}  // namespace attrxfer
