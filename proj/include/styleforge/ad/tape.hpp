#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "styleforge/ad/tensor.hpp"
#include "styleforge/common/rng.hpp"

namespace styleforge::ad {

enum class Mode { train, eval };

class Tape;

// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  const Tensor& value() const;
  Tape* tape() const noexcept { return tape_; }
  std::size_t index() const noexcept { return index_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t index) : tape_(tape), index_(index) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

// Records a forward computation for one reverse sweep. Parameter nodes refer
// to the ParameterSet's storage, which must outlive the tape and stay
// unmodified until backward() returns. Frozen parameters never require a
// gradient, so no work flows into them.
class Tape {
 public:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Tensor grad;
    bool requires_grad = false;
    std::ptrdiff_t param = -1;
    std::vector<std::size_t> inputs;
    std::vector<double> aux;
    // Pushes this node's grad into the grads of its inputs.
    std::function<void(Tape&, std::size_t self)> backward;

    const Tensor& value() const noexcept { return ref ? *ref : owned; }
  };

  explicit Tape(const ParameterSet* params = nullptr) : params_(params) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(std::size_t index);
  Var parameter(const std::string& id);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  Node& node(std::size_t i) { return nodes_.at(i); }
  const ParameterSet* parameters() const noexcept { return params_; }

  // Appends an op node; requires_grad is derived from the inputs.
  Var push(Node node);
  // Gradient buffer of node i, allocated on first use.
  std::span<double> grad(std::size_t i);
  bool requires_grad(std::size_t i) const { return nodes_.at(i).requires_grad; }

  // Reverse sweep from a scalar loss. Adds the gradient of every trainable
  // parameter into grads (index-aligned with the ParameterSet); entries for
  // frozen parameters are left untouched.
  void backward(Var loss, Gradients& grads);
  Gradients backward(Var loss);

  const std::vector<std::size_t>& last_visit_order() const noexcept { return visit_order_; }

 private:
  void check_owned(Var v, const char* what) const;

  const ParameterSet* params_;
  std::vector<Node> nodes_;
  std::vector<std::size_t> visit_order_;
};

// Valid (no padding) cross-correlation: input [C,H,W], kernel [F,C,kh,kw],
// bias [F] -> [F, (H-kh)/stride+1, (W-kw)/stride+1].
Var conv2d(Var input, Var kernel, Var bias, std::size_t stride);
// weight [m,n] times input [n] plus bias [m].
Var dense(Var input, Var weight, Var bias);
Var relu(Var x);
Var flatten(Var x);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
// Inverted dropout. Eval mode returns x itself.
Var dropout(Var x, double rate, Mode mode, CounterRng& rng);
// [3] -> (tanh, sigmoid, sigmoid): steering, throttle, brake ranges.
Var action_head(Var x);
Var mse_loss(Var pred, Var target);
Var sum(Var x);

}  // namespace styleforge::ad
