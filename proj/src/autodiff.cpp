#include "can/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace can::ad {

namespace {

void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

Tape& same_tape(Var a, Var b) {
  require(a.valid() && b.valid() && a.tape() == b.tape(), ErrorCode::ShapeMismatch, "operands on different tapes");
  return *a.tape();
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<std::size_t> Shape::dims() const {
  switch (rank_) {
    case 0: return {};
    case 1: return {rows_};
    default: return {rows_, cols_};
  }
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '[';
  const auto d = dims();
  for (std::size_t i = 0; i < d.size(); ++i) os << (i ? "," : "") << d[i];
  os << ']';
  return os.str();
}

Shape shape_from_dims(std::span<const std::size_t> dims) {
  switch (dims.size()) {
    case 0: return Shape::scalar();
    case 1: return Shape::vec(dims[0]);
    case 2: return Shape::mat(dims[0], dims[1]);
    default: throw Error(ErrorCode::ShapeMismatch, "rank > 2 is not supported");
  }
}

Tensor::Tensor(Shape shape) : shape_(shape), data_(shape.size(), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
  require(data_.size() == shape_.size(), ErrorCode::ShapeMismatch,
          "data length " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
}

Tensor Tensor::vector(std::vector<double> v) {
  const auto n = v.size();
  return Tensor(Shape::vec(n), std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor(Shape::mat(rows, cols), std::move(v));
}

const Shape& Var::shape() const { return tape_->node(id_).shape; }

std::span<const double> Var::values() const {
  const auto& n = tape_->node(id_);
  return {n.data(), n.shape.size()};
}

Tensor Var::tensor() const {
  auto v = values();
  return Tensor(shape(), std::vector<double>(v.begin(), v.end()));
}

bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::constant(Tensor t) {
  Node n;
  n.op = OpKind::Constant;
  n.shape = t.shape();
  n.value = std::move(t).release();
  return push(std::move(n));
}

Var Tape::variable(Tensor t) {
  Node n;
  n.op = OpKind::Variable;
  n.shape = t.shape();
  n.value = std::move(t).release();
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.op = OpKind::Param;
  n.shape = p.value.shape();
  n.param = &p;
  n.requires_grad = grad_enabled_;
  Var v = push(std::move(n));
  param_nodes_.emplace(&p, v.id());
  return v;
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

std::vector<double>& Tape::grad_buffer(int id) {
  auto& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) n.grad.assign(n.shape.size(), 0.0);
  return n.grad;
}

bool Tape::has_grad(Var v) const {
  const auto& n = node(v.id());
  return n.requires_grad && !n.grad.empty();
}

Tensor Tape::grad(Var v) const {
  require(has_grad(v), ErrorCode::NotScalar, "no gradient recorded for node " + std::to_string(v.id()));
  const auto& n = node(v.id());
  return Tensor(n.shape, n.grad);
}

const std::vector<double>* Tape::param_grad(const Parameter& p) const {
  auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end()) return nullptr;
  const auto& n = node(it->second);
  return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::for_each_param_grad(
    const std::function<void(const Parameter&, std::span<const double>)>& fn) const {
  for (const auto& n : nodes_) {
    if (n.op == OpKind::Param && !n.grad.empty()) fn(*n.param, n.grad);
  }
}

void Tape::backward(Var loss) {
  require(loss.tape() == this, ErrorCode::NotScalar, "loss belongs to another tape");
  require(loss.size() == 1, ErrorCode::NotScalar, "loss has shape " + loss.shape().str());
  for (auto& n : nodes_) n.grad.clear();
  if (!node(loss.id()).requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.empty()) continue;
    // Inputs always precede n, so n.grad is final here and never resized.
    backprop(n, n.grad);
  }
}

void Tape::backprop(const Node& n, std::span<const double> g) {
  auto wants = [&](int id) { return id >= 0 && nodes_[static_cast<std::size_t>(id)].requires_grad; };
  switch (n.op) {
    case OpKind::Constant:
    case OpKind::Variable:
    case OpKind::Param:
      return;
    case OpKind::MatMul: {
      const auto& A = node(n.a);
      const auto& B = node(n.b);
      const std::size_t m = A.shape.rows(), k = A.shape.cols();
      const std::size_t cols = B.shape.rank() == 1 ? 1 : B.shape.cols();
      const double* a = A.data();
      const double* b = B.data();
      if (wants(n.a)) {
        auto& ga = grad_buffer(n.a);
        for (std::size_t i = 0; i < m; ++i) {
          double* row = ga.data() + i * k;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gij = g[i * cols + j];
            if (gij == 0.0) continue;
            for (std::size_t t = 0; t < k; ++t) row[t] += gij * b[t * cols + j];
          }
        }
      }
      if (wants(n.b)) {
        auto& gb = grad_buffer(n.b);
        for (std::size_t i = 0; i < m; ++i) {
          const double* arow = a + i * k;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gij = g[i * cols + j];
            if (gij == 0.0) continue;
            for (std::size_t t = 0; t < k; ++t) gb[t * cols + j] += arow[t] * gij;
          }
        }
      }
      return;
    }
    case OpKind::Add:
    case OpKind::Sub: {
      const double sign = n.op == OpKind::Add ? 1.0 : -1.0;
      if (wants(n.a)) {
        auto& ga = grad_buffer(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (wants(n.b)) {
        auto& gb = grad_buffer(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += sign * g[i];
      }
      return;
    }
    case OpKind::Mul: {
      const double* a = node(n.a).data();
      const double* b = node(n.b).data();
      if (wants(n.a)) {
        auto& ga = grad_buffer(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (wants(n.b)) {
        auto& gb = grad_buffer(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
      return;
    }
    case OpKind::Sigmoid: {
      if (!wants(n.a)) return;
      auto& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i] * (1.0 - n.value[i]);
      return;
    }
    case OpKind::Tanh: {
      if (!wants(n.a)) return;
      auto& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
      return;
    }
    case OpKind::Softmax: {
      if (!wants(n.a)) return;
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * n.value[i];
      auto& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.value[i] * (g[i] - dot);
      return;
    }
    case OpKind::Embedding: {
      if (!wants(n.a)) return;
      const std::size_t cols = node(n.a).shape.cols();
      auto& ga = grad_buffer(n.a);
      for (std::size_t r = 0; r < g.size(); ++r) ga[r * cols + n.index] += g[r];
      return;
    }
    case OpKind::Concat: {
      const std::size_t p = node(n.a).shape.size();
      if (wants(n.a)) {
        auto& ga = grad_buffer(n.a);
        for (std::size_t i = 0; i < p; ++i) ga[i] += g[i];
      }
      if (wants(n.b)) {
        auto& gb = grad_buffer(n.b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[p + i];
      }
      return;
    }
    case OpKind::StackRows: {
      const std::size_t k = n.shape.cols();
      for (std::size_t r = 0; r < n.inputs.size(); ++r) {
        if (!wants(n.inputs[r])) continue;
        auto& gr = grad_buffer(n.inputs[r]);
        for (std::size_t i = 0; i < k; ++i) gr[i] += g[r * k + i];
      }
      return;
    }
    case OpKind::Transpose: {
      if (!wants(n.a)) return;
      const std::size_t rows = n.shape.rows(), cols = n.shape.cols();
      auto& ga = grad_buffer(n.a);
      for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) ga[j * rows + i] += g[i * cols + j];
      return;
    }
    case OpKind::Sum: {
      if (!wants(n.a)) return;
      auto& ga = grad_buffer(n.a);
      for (auto& x : ga) x += g[0];
      return;
    }
    case OpKind::CrossEntropy: {
      if (!wants(n.a)) return;
      const double p = node(n.a).data()[n.index];
      if (p <= kLogFloor) return;
      grad_buffer(n.a)[n.index] += -g[0] / p;
      return;
    }
  }
}

namespace {

Tape::Node derived(OpKind op, Shape shape, Var a, Var b = Var()) {
  Tape::Node n;
  n.op = op;
  n.shape = shape;
  n.a = a.id();
  n.b = b.valid() ? b.id() : -1;
  n.requires_grad = a.requires_grad() || (b.valid() && b.requires_grad());
  n.value.resize(shape.size());
  return n;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.rank() == 2 && sb.rank() >= 1 && sa.cols() == sb.rows(), ErrorCode::ShapeMismatch,
          "matmul " + sa.str() + " x " + sb.str());
  const std::size_t m = sa.rows(), k = sa.cols();
  const std::size_t cols = sb.rank() == 1 ? 1 : sb.cols();
  auto n = derived(OpKind::MatMul, sb.rank() == 1 ? Shape::vec(m) : Shape::mat(m, cols), a, b);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  double* out = n.value.data();
  if (cols == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = pa + i * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += row[t] * pb[t];
      out[i] = acc;
    }
  } else {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t t = 0; t < k; ++t) {
        const double av = pa[i * k + t];
        for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] += av * pb[t * cols + j];
      }
  }
  return tape.push(std::move(n));
}

Var elementwise(Elementwise kind, Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require(a.shape() == b.shape(), ErrorCode::ShapeMismatch, "elementwise " + a.shape().str() + " vs " + b.shape().str());
  const OpKind op = kind == Elementwise::Add ? OpKind::Add : kind == Elementwise::Sub ? OpKind::Sub : OpKind::Mul;
  auto n = derived(op, a.shape(), a, b);
  auto x = a.values();
  auto y = b.values();
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    switch (kind) {
      case Elementwise::Add: n.value[i] = x[i] + y[i]; break;
      case Elementwise::Sub: n.value[i] = x[i] - y[i]; break;
      case Elementwise::Mul: n.value[i] = x[i] * y[i]; break;
    }
  }
  return tape.push(std::move(n));
}

Var add(Var a, Var b) { return elementwise(Elementwise::Add, a, b); }
Var sub(Var a, Var b) { return elementwise(Elementwise::Sub, a, b); }
Var mul(Var a, Var b) { return elementwise(Elementwise::Mul, a, b); }

Var activation(Activation kind, Var x) {
  auto n = derived(kind == Activation::Sigmoid ? OpKind::Sigmoid : OpKind::Tanh, x.shape(), x);
  auto in = x.values();
  for (std::size_t i = 0; i < n.value.size(); ++i)
    n.value[i] = kind == Activation::Sigmoid ? stable_sigmoid(in[i]) : std::tanh(in[i]);
  return x.tape()->push(std::move(n));
}

Var sigmoid(Var x) { return activation(Activation::Sigmoid, x); }
Var tanh(Var x) { return activation(Activation::Tanh, x); }

Var softmax(Var x) {
  require(x.size() >= 1, ErrorCode::EmptyInput, "softmax of an empty vector");
  require(x.shape().rank() <= 1, ErrorCode::ShapeMismatch, "softmax expects a vector, got " + x.shape().str());
  auto n = derived(OpKind::Softmax, x.shape(), x);
  auto in = x.values();
  const double mx = *std::max_element(in.begin(), in.end());
  double total = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) total += n.value[i] = std::exp(in[i] - mx);
  for (auto& v : n.value) v /= total;
  return x.tape()->push(std::move(n));
}

Var embedding(Var table, std::size_t index) {
  const Shape& s = table.shape();
  require(s.rank() == 2, ErrorCode::ShapeMismatch, "embedding table must be a matrix");
  require(index < s.cols(), ErrorCode::IndexOutOfVocabulary,
          "token id " + std::to_string(index) + " >= " + std::to_string(s.cols()));
  auto n = derived(OpKind::Embedding, Shape::vec(s.rows()), table);
  n.index = index;
  auto in = table.values();
  for (std::size_t r = 0; r < s.rows(); ++r) n.value[r] = in[r * s.cols() + index];
  return table.tape()->push(std::move(n));
}

Var concat(Var a, Var b) {
  Tape& tape = same_tape(a, b);
  require(a.shape().rank() == 1 && b.shape().rank() == 1, ErrorCode::ShapeMismatch, "concat expects vectors");
  auto n = derived(OpKind::Concat, Shape::vec(a.size() + b.size()), a, b);
  auto x = a.values();
  auto y = b.values();
  std::copy(x.begin(), x.end(), n.value.begin());
  std::copy(y.begin(), y.end(), n.value.begin() + static_cast<std::ptrdiff_t>(x.size()));
  return tape.push(std::move(n));
}

Var stack_rows(std::span<const Var> rows) {
  require(!rows.empty(), ErrorCode::EmptyInput, "stack_rows of nothing");
  const std::size_t k = rows.front().size();
  Tape::Node n;
  n.op = OpKind::StackRows;
  n.shape = Shape::mat(rows.size(), k);
  n.value.reserve(rows.size() * k);
  for (const Var& r : rows) {
    require(r.tape() == rows.front().tape() && r.shape() == Shape::vec(k), ErrorCode::ShapeMismatch,
            "stack_rows expects equal-length vectors");
    auto v = r.values();
    n.value.insert(n.value.end(), v.begin(), v.end());
    n.inputs.push_back(r.id());
    n.requires_grad = n.requires_grad || r.requires_grad();
  }
  return rows.front().tape()->push(std::move(n));
}

Var transpose(Var m) {
  const Shape& s = m.shape();
  require(s.rank() == 2, ErrorCode::ShapeMismatch, "transpose expects a matrix");
  auto n = derived(OpKind::Transpose, Shape::mat(s.cols(), s.rows()), m);
  auto in = m.values();
  for (std::size_t i = 0; i < s.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j) n.value[j * s.rows() + i] = in[i * s.cols() + j];
  return m.tape()->push(std::move(n));
}

Var sum(Var x) {
  auto n = derived(OpKind::Sum, Shape::scalar(), x);
  auto in = x.values();
  n.value[0] = std::accumulate(in.begin(), in.end(), 0.0);
  return x.tape()->push(std::move(n));
}

Var cross_entropy(Var probs, std::size_t target) {
  require(probs.shape().rank() == 1, ErrorCode::ShapeMismatch, "cross_entropy expects a vector");
  require(target < probs.size(), ErrorCode::IndexOutOfVocabulary,
          "target " + std::to_string(target) + " >= " + std::to_string(probs.size()));
  auto p = probs.values();
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  require(std::abs(total - 1.0) <= 1e-6, ErrorCode::NotNormalized, "probabilities sum to " + std::to_string(total));
  auto n = derived(OpKind::CrossEntropy, Shape::scalar(), probs);
  n.index = target;
  n.value[0] = -std::log(std::max(p[target], kLogFloor));
  return probs.tape()->push(std::move(n));
}

double finite_diff_check(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params,
                         const GradCheckOptions& opts) {
  require(opts.epsilon > 0.0, ErrorCode::InvalidConfig, "epsilon must be positive");
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Var l = loss(tape);
    tape.backward(l);
    for (Parameter* p : params) {
      const auto* g = tape.param_grad(*p);
      analytic.push_back(g ? *g : std::vector<double>(p->value.size(), 0.0));
    }
  }
  auto evaluate = [&] {
    Tape tape(false);
    return loss(tape)[0];
  };
  std::mt19937_64 rng(opts.seed);
  double worst = 0.0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto data = params[pi]->value.data();
    std::vector<std::size_t> coords(data.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opts.max_coords_per_param && coords.size() > opts.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(opts.max_coords_per_param);
    }
    for (std::size_t i : coords) {
      const double saved = data[i];
      data[i] = saved + opts.epsilon;
      const double up = evaluate();
      data[i] = saved - opts.epsilon;
      const double down = evaluate();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * opts.epsilon);
      const double a = analytic[pi][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), opts.denominator_floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace can::ad
