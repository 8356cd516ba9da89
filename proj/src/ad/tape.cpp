#include "styleforge/ad/tape.hpp"

#include <algorithm>
#include <cmath>

#include "styleforge/ad/kernels.hpp"
#include "styleforge/common/errors.hpp"

namespace styleforge::ad {

const Tensor& Var::value() const {
  if (!tape_) throw GraphError("value() on an unbound Var");
  return tape_->node(index_).value();
}

void Tape::check_owned(Var v, const char* what) const {
  if (v.tape_ != this || v.index_ >= nodes_.size())
    throw GraphError(std::string(what) + " is not a node of this tape");
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(std::size_t index) {
  if (!params_ || index >= params_->size()) throw GraphError("parameter index out of range");
  Node n;
  n.ref = &(*params_)[index].value;
  n.param = static_cast<std::ptrdiff_t>(index);
  n.requires_grad = (*params_)[index].trainable;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::parameter(const std::string& id) {
  if (!params_) throw GraphError("tape has no parameter set");
  return parameter(params_->index_of(id));
}

Var Tape::push(Node node) {
  node.requires_grad = false;
  for (auto i : node.inputs) {
    if (i >= nodes_.size()) throw GraphError("op input is not on this tape");
    node.requires_grad = node.requires_grad || nodes_[i].requires_grad;
  }
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

std::span<double> Tape::grad(std::size_t i) {
  Node& n = nodes_.at(i);
  if (n.grad.size() != n.value().size()) n.grad = Tensor(n.value().shape());
  return n.grad.data();
}

void Tape::backward(Var loss, Gradients& grads) {
  check_owned(loss, "loss");
  if (nodes_[loss.index_].value().size() != 1) throw GraphError("loss must be a scalar");
  if (params_ && grads.size() != params_->size()) throw GraphError("gradient buffer does not match parameters");
  visit_order_.clear();
  if (!nodes_[loss.index_].requires_grad) return;

  grad(loss.index_)[0] = 1.0;
  for (std::size_t i = loss.index_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    visit_order_.push_back(i);
    if (n.param >= 0) {
      auto dst = grads[static_cast<std::size_t>(n.param)].data();
      auto src = n.grad.data();
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    } else if (n.backward) {
      n.backward(*this, i);
    }
  }
}

Gradients Tape::backward(Var loss) {
  Gradients g = params_ ? zero_gradients(*params_) : Gradients{};
  backward(loss, g);
  return g;
}

namespace {

Tape& common_tape(std::initializer_list<Var> vars) {
  Tape* t = vars.begin()->tape();
  for (const Var& v : vars)
    if (!v.tape() || v.tape() != t) throw GraphError("op inputs live on different tapes");
  return *t;
}

}  // namespace

Var conv2d(Var input, Var kernel, Var bias, std::size_t stride) {
  Tape& tape = common_tape({input, kernel, bias});
  const Tensor& x = input.value();
  const Tensor& w = kernel.value();
  const Tensor& b = bias.value();
  if (x.rank() != 3 || w.rank() != 4 || b.rank() != 1 || w.dim(1) != x.dim(0) || b.dim(0) != w.dim(0) ||
      w.dim(2) > x.dim(1) || w.dim(3) > x.dim(2) || stride == 0)
    throw ShapeError("conv2d: input " + shape_to_string(x.shape()) + " incompatible with kernel " +
                     shape_to_string(w.shape()) + " / bias " + shape_to_string(b.shape()) + " at stride " +
                     std::to_string(stride));
  kernels::ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), w.dim(0), w.dim(2), w.dim(3), stride};

  Tape::Node n;
  n.inputs = {input.index(), kernel.index(), bias.index()};
  n.aux.resize(g.patch() * g.positions());
  kernels::parallel::im2col(g, x.data(), n.aux);
  n.owned = Tensor({g.filters, g.out_h(), g.out_w()});
  kernels::parallel::conv2d_forward(g, n.aux, w.data(), b.data(), n.owned.data());
  n.backward = [g](Tape& t, std::size_t self) {
    auto& node = t.node(self);
    const std::size_t xi = node.inputs[0], wi = node.inputs[1], bi = node.inputs[2];
    const auto go = node.grad.data();
    if (t.requires_grad(wi) || t.requires_grad(bi)) {
      // Params share one kernel call; a frozen side gets a scratch buffer.
      std::vector<double> scratch_w, scratch_b;
      std::span<double> gw, gb;
      if (t.requires_grad(wi)) gw = t.grad(wi);
      else { scratch_w.resize(t.node(wi).value().size()); gw = scratch_w; }
      if (t.requires_grad(bi)) gb = t.grad(bi);
      else { scratch_b.resize(t.node(bi).value().size()); gb = scratch_b; }
      kernels::parallel::conv2d_backward_params(g, node.aux, go, gw, gb);
    }
    if (t.requires_grad(xi))
      kernels::parallel::conv2d_backward_input(g, t.node(wi).value().data(), go, t.grad(xi));
  };
  return tape.push(std::move(n));
}

Var dense(Var input, Var weight, Var bias) {
  Tape& tape = common_tape({input, weight, bias});
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  const Tensor& b = bias.value();
  if (x.rank() != 1 || w.rank() != 2 || b.rank() != 1 || w.dim(1) != x.dim(0) || w.dim(0) != b.dim(0))
    throw ShapeError("dense: input " + shape_to_string(x.shape()) + " incompatible with weight " +
                     shape_to_string(w.shape()) + " / bias " + shape_to_string(b.shape()));
  const std::size_t rows = w.dim(0), cols = w.dim(1);
  Tape::Node n;
  n.inputs = {input.index(), weight.index(), bias.index()};
  n.owned = Tensor({rows});
  kernels::parallel::dense_forward(rows, cols, x.data(), w.data(), b.data(), n.owned.data());
  n.backward = [rows, cols](Tape& t, std::size_t self) {
    auto& node = t.node(self);
    const std::size_t xi = node.inputs[0], wi = node.inputs[1], bi = node.inputs[2];
    const auto gy = node.grad.data();
    if (t.requires_grad(wi) || t.requires_grad(bi)) {
      std::vector<double> scratch_w, scratch_b;
      std::span<double> gw, gb;
      if (t.requires_grad(wi)) gw = t.grad(wi);
      else { scratch_w.resize(rows * cols); gw = scratch_w; }
      if (t.requires_grad(bi)) gb = t.grad(bi);
      else { scratch_b.resize(rows); gb = scratch_b; }
      kernels::parallel::dense_backward_params(rows, cols, t.node(xi).value().data(), gy, gw, gb);
    }
    if (t.requires_grad(xi))
      kernels::parallel::dense_backward_input(rows, cols, t.node(wi).value().data(), gy, t.grad(xi));
  };
  return tape.push(std::move(n));
}

Var relu(Var x) {
  Tape& tape = common_tape({x});
  Tape::Node n;
  n.inputs = {x.index()};
  n.owned = x.value();
  for (auto& v : n.owned.data()) v = v > 0.0 ? v : 0.0;
  n.backward = [](Tape& t, std::size_t self) {
    auto& node = t.node(self);
    const std::size_t xi = node.inputs[0];
    if (!t.requires_grad(xi)) return;
    auto gx = t.grad(xi);
    const auto y = node.owned.data();
    const auto gy = node.grad.data();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (y[i] > 0.0) gx[i] += gy[i];
  };
  return tape.push(std::move(n));
}

Var flatten(Var x) {
  Tape& tape = common_tape({x});
  Tape::Node n;
  n.inputs = {x.index()};
  n.owned = x.value().reshaped({x.value().size()});
  n.backward = [](Tape& t, std::size_t self) {
    auto& node = t.node(self);
    const std::size_t xi = node.inputs[0];
    if (!t.requires_grad(xi)) return;
    auto gx = t.grad(xi);
    const auto gy = node.grad.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
  };
  return tape.push(std::move(n));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  Tape* tape = parts[0].tape();
  std::size_t total = 0;
  Tape::Node n;
  for (const Var& p : parts) {
    if (p.tape() != tape || !tape) throw GraphError("concat inputs live on different tapes");
    if (p.value().rank() != 1) throw ShapeError("concat expects vectors, got " + shape_to_string(p.value().shape()));
    total += p.value().size();
    n.inputs.push_back(p.index());
  }
  std::vector<double> data;
  data.reserve(total);
  for (const Var& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  n.owned = Tensor({total}, std::move(data));
  n.backward = [](Tape& t, std::size_t self) {
    auto& node = t.node(self);
    const auto gy = node.grad.data();
    std::size_t offset = 0;
    for (std::size_t xi : node.inputs) {
      const std::size_t len = t.node(xi).value().size();
      if (t.requires_grad(xi)) {
        auto gx = t.grad(xi);
        for (std::size_t i = 0; i < len; ++i) gx[i] += gy[offset + i];
      }
      offset += len;
    }
  };
  return tape->push(std::move(n));
}

Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

Var dropout(Var x, double rate, Mode mode, CounterRng& rng) {
  Tape& tape = common_tape({x});
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must lie in [0, 1)");
  if (mode == Mode::eval) return x;
  Tape::Node n;
  n.inputs = {x.index()};
  n.owned = x.value();
  n.aux.resize(n.owned.size());
  const double scale = 1.0 / (1.0 - rate);
  auto y = n.owned.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    n.aux[i] = rng.uniform() >= rate ? scale : 0.0;
    y[i] *= n.aux[i];
  }
  n.backward = [](Tape& t, std::size_t self) {
    auto& node = t.node(self);
    const std::size_t xi = node.inputs[0];
    if (!t.requires_grad(xi)) return;
    auto gx = t.grad(xi);
    const auto gy = node.grad.data();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * node.aux[i];
  };
  return tape.push(std::move(n));
}

Var action_head(Var x) {
  Tape& tape = common_tape({x});
  if (x.value().rank() != 1 || x.value().size() != 3)
    throw ShapeError("action_head expects [3], got " + shape_to_string(x.value().shape()));
  Tape::Node n;
  n.inputs = {x.index()};
  n.owned = x.value();
  auto y = n.owned.data();
  y[0] = std::tanh(y[0]);
  y[1] = 1.0 / (1.0 + std::exp(-y[1]));
  y[2] = 1.0 / (1.0 + std::exp(-y[2]));
  n.backward = [](Tape& t, std::size_t self) {
    auto& node = t.node(self);
    const std::size_t xi = node.inputs[0];
    if (!t.requires_grad(xi)) return;
    auto gx = t.grad(xi);
    const auto y = node.owned.data();
    const auto gy = node.grad.data();
    gx[0] += gy[0] * (1.0 - y[0] * y[0]);
    gx[1] += gy[1] * y[1] * (1.0 - y[1]);
    gx[2] += gy[2] * y[2] * (1.0 - y[2]);
  };
  return tape.push(std::move(n));
}

Var mse_loss(Var pred, Var target) {
  Tape& tape = common_tape({pred, target});
  const Tensor& p = pred.value();
  const Tensor& q = target.value();
  if (p.shape() != q.shape())
    throw ShapeError("mse_loss: prediction " + shape_to_string(p.shape()) + " vs target " +
                     shape_to_string(q.shape()));
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += (p[i] - q[i]) * (p[i] - q[i]);
  Tape::Node n;
  n.inputs = {pred.index(), target.index()};
  n.owned = Tensor({1}, {acc / static_cast<double>(p.size())});
  n.backward = [](Tape& t, std::size_t self) {
    auto& node = t.node(self);
    const std::size_t pi = node.inputs[0], qi = node.inputs[1];
    const auto p = t.node(pi).value().data();
    const auto q = t.node(qi).value().data();
    const double g = node.grad[0] * 2.0 / static_cast<double>(p.size());
    if (t.requires_grad(pi)) {
      auto gp = t.grad(pi);
      for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * (p[i] - q[i]);
    }
    if (t.requires_grad(qi)) {
      auto gq = t.grad(qi);
      for (std::size_t i = 0; i < p.size(); ++i) gq[i] -= g * (p[i] - q[i]);
    }
  };
  return tape.push(std::move(n));
}

Var sum(Var x) {
  Tape& tape = common_tape({x});
  double acc = 0.0;
  for (double v : x.value().data()) acc += v;
  Tape::Node n;
  n.inputs = {x.index()};
  n.owned = Tensor({1}, {acc});
  n.backward = [](Tape& t, std::size_t self) {
    auto& node = t.node(self);
    const std::size_t xi = node.inputs[0];
    if (!t.requires_grad(xi)) return;
    auto gx = t.grad(xi);
    for (auto& v : gx) v += node.grad[0];
  };
  return tape.push(std::move(n));
}

}  // namespace styleforge::ad
