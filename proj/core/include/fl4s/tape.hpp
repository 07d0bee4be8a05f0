#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "fl4s/matrix.hpp"

namespace fl4s::ad {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid for the
/// lifetime of the tape that created it.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  std::size_t index() const noexcept { return index_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

/// Result of a backward pass. Parameters always carry a gradient (zero when
/// the loss does not depend on them); constants never do.
class Gradients {
 public:
  std::optional<Matrix> of(Var v) const;
  const Matrix& at(Var v) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::optional<Matrix>> grads_;
};

/// Records matrix-valued operations in creation order (which is a
/// topological order) and replays their derivative rules in reverse.
///
/// Only nodes that depend on a parameter store a derivative rule, so a tape
/// built from constants alone is plain eager evaluation.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(Matrix value);
  Var constant(Matrix value);

  /// Reverse pass from a 1x1 loss recorded on this tape.
  Gradients backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Used by the operation implementations.
  using Rule = std::function<void(Tape&, std::size_t)>;
  Var record(Matrix value, bool tracked, Rule rule);
  const Matrix& value(std::size_t i) const { return nodes_[i].value; }
  const Matrix& grad(std::size_t i) const { return nodes_[i].grad; }
  bool tracked(std::size_t i) const { return nodes_[i].tracked; }
  /// Gradient buffer of node i, zero-initialised on first use.
  Matrix& grad_buffer(std::size_t i);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool tracked = false;
    bool is_parameter = false;
    Rule rule;
  };

  friend class Var;
  std::vector<Node> nodes_;
};

// Operations. All operands must live on the same tape.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
/// a (n x m) + b (1 x m) broadcast over rows.
Var add_row(Var a, Var bias);
/// a (n x m) scaled per row by w (n x 1).
Var scale_rows(Var a, Var w);
Var scale(Var a, double factor);
Var tanh(Var a);
Var sigmoid(Var a);
/// Sum of all entries as a 1x1 value.
Var sum(Var a);
Var sum_squares(Var a);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t count);
/// Softmax applied independently to every row.
Var row_softmax(Var a);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }

}  // namespace fl4s::ad
