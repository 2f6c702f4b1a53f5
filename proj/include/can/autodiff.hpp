#pragma once

// Dense rank-0/1/2 tensors with a reverse-mode tape.
//
// Values are stored row-major in 64-bit floats. A rank-1 tensor of length n
// behaves as an n x 1 column wherever a matrix operand is expected.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "can/error.hpp"

namespace can::ad {

class Shape {
 public:
  constexpr Shape() = default;

  static constexpr Shape scalar() { return Shape(0, 1, 1); }
  static constexpr Shape vec(std::size_t n) { return Shape(1, n, 1); }
  static constexpr Shape mat(std::size_t rows, std::size_t cols) { return Shape(2, rows, cols); }

  constexpr int rank() const { return rank_; }
  constexpr std::size_t rows() const { return rows_; }
  constexpr std::size_t cols() const { return cols_; }
  constexpr std::size_t size() const { return rows_ * cols_; }

  std::vector<std::size_t> dims() const;
  std::string str() const;

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

 private:
  constexpr Shape(int rank, std::size_t rows, std::size_t cols) : rank_(rank), rows_(rows), cols_(cols) {}

  int rank_ = 0;
  std::size_t rows_ = 1;
  std::size_t cols_ = 1;
};

Shape shape_from_dims(std::span<const std::size_t> dims);

class Tensor {
 public:
  Tensor() : Tensor(Shape::scalar()) {}
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape::scalar(), {v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }
  std::vector<double> release() && { return std::move(data_); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.cols() + c]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// A named trainable array. Parameters are never mutated by a tape; gradients
// are read back from the tape that recorded their use.
struct Parameter {
  std::string name;
  Tensor value;
};

class Tape;

// Handle to a node of a Tape. Cheap to copy; valid until the tape is cleared.
class Var {
 public:
  Var() = default;

  const Shape& shape() const;
  std::span<const double> values() const;
  double operator[](std::size_t i) const { return values()[i]; }
  std::size_t size() const { return shape().size(); }
  Tensor tensor() const;
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class OpKind {
  Constant,
  Variable,
  Param,
  MatMul,
  Add,
  Sub,
  Mul,
  Sigmoid,
  Tanh,
  Softmax,
  Embedding,
  Concat,
  StackRows,
  Transpose,
  Sum,
  CrossEntropy,
};

// Append-only computation record. Single owner; not thread-safe.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor t);
  Var variable(Tensor t);
  // Binds a parameter without copying it. The parameter must outlive the tape.
  Var param(const Parameter& p);

  void backward(Var loss);

  bool has_grad(Var v) const;
  Tensor grad(Var v) const;
  // Gradient recorded for a parameter bound on this tape, or nullptr.
  const std::vector<double>* param_grad(const Parameter& p) const;
  void for_each_param_grad(const std::function<void(const Parameter&, std::span<const double>)>& fn) const;

  bool grad_enabled() const { return grad_enabled_; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

  // Internal node construction used by the op functions.
  struct Node {
    OpKind op = OpKind::Constant;
    Shape shape;
    std::vector<double> value;
    const Parameter* param = nullptr;
    std::vector<double> grad;
    bool requires_grad = false;
    int a = -1;
    int b = -1;
    std::vector<int> inputs;
    std::size_t index = 0;

    const double* data() const { return param ? param->value.data().data() : value.data(); }
  };

  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Var push(Node n);

 private:
  void backprop(const Node& n, std::span<const double> g);
  std::vector<double>& grad_buffer(int id);

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var sigmoid(Var x);
Var tanh(Var x);
Var softmax(Var x);
// Column `index` of a K x V embedding matrix.
Var embedding(Var table, std::size_t index);
Var concat(Var a, Var b);
// Stacks equal-length rank-1 vectors into an N x K matrix.
Var stack_rows(std::span<const Var> rows);
Var transpose(Var m);
Var sum(Var x);
// -ln(max(probs[target], 1e-12)).
Var cross_entropy(Var probs, std::size_t target);

enum class Elementwise { Add, Sub, Mul };
enum class Activation { Sigmoid, Tanh };
Var elementwise(Elementwise kind, Var a, Var b);
Var activation(Activation kind, Var x);

inline constexpr double kLogFloor = 1e-12;

struct GradCheckOptions {
  double epsilon = 1e-5;
  // 0 checks every coordinate; otherwise a seeded random subset per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
  // Relative error is |a - n| / max(|a|, |n|, denominator_floor).
  double denominator_floor = 1e-3;
};

// Compares tape gradients of `loss` against central differences for every
// listed parameter and returns the maximum relative error. Parameters are
// perturbed in place and restored.
double finite_diff_check(const std::function<Var(Tape&)>& loss, std::span<Parameter* const> params,
                         const GradCheckOptions& opts = {});

}  // namespace can::ad
