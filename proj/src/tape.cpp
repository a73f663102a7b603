#include "thoughtflow/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "thoughtflow/errors.hpp"
#include "thoughtflow/tensor.hpp"

namespace thoughtflow {

Var Tape::push(std::vector<double> value, bool requires_grad,
               std::function<void(Tape&, const Node&)> backward) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  n.view = n.owned;
  n.requires_grad = requires_grad;
  n.backward = std::move(backward);
  return Var{nodes_.size() - 1};
}

void Tape::check(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("tape: unknown variable");
}

Var Tape::variable(std::span<const double> value) {
  return push({value.begin(), value.end()}, true, nullptr);
}

Var Tape::constant(std::span<const double> value) {
  return push({value.begin(), value.end()}, false, nullptr);
}

Var Tape::bind(std::span<const double> value, bool requires_grad) {
  Node& n = nodes_.emplace_back();
  n.view = value;
  n.requires_grad = requires_grad;
  return Var{nodes_.size() - 1};
}

std::span<const double> Tape::value(Var v) const {
  check(v);
  return node(v).view;
}

double Tape::scalar(Var v) const {
  auto val = value(v);
  if (val.size() != 1) throw ContractError("tape: node is not a scalar");
  return val[0];
}

std::vector<double>& Tape::grad_buffer(Var v) { return node(v).grad; }

std::span<const double> Tape::grad(Var v) const {
  check(v);
  return node(v).grad;
}

Var Tape::dense(Var x, Var weights, Var bias) {
  check(x), check(weights), check(bias);
  auto xv = value(x);
  auto wv = value(weights);
  auto bv = value(bias);
  std::vector<double> out(bv.size());
  dense_kernel(xv, wv, bv, out);
  const bool tracked = node(x).requires_grad || node(weights).requires_grad ||
                       node(bias).requires_grad;
  return push(std::move(out), tracked, [x, weights, bias](Tape& t, const Node& self) {
    auto xv = t.value(x);
    auto wv = t.value(weights);
    const std::size_t rows = self.grad.size();
    const std::size_t cols = xv.size();
    const auto& g = self.grad;
    if (t.node(x).requires_grad) {
      auto& gx = t.grad_buffer(x);
      for (std::size_t i = 0; i < rows; ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const double* wr = wv.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) gx[j] += gi * wr[j];
      }
    }
    if (t.node(weights).requires_grad) {
      auto& gw = t.grad_buffer(weights);
      for (std::size_t i = 0; i < rows; ++i) {
        const double gi = g[i];
        double* gr = gw.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) gr[j] += gi * xv[j];
      }
    }
    if (t.node(bias).requires_grad) {
      auto& gb = t.grad_buffer(bias);
      for (std::size_t i = 0; i < rows; ++i) gb[i] += g[i];
    }
  });
}

Var Tape::selu(Var x) {
  check(x);
  auto xv = value(x);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = thoughtflow::selu(xv[i]);
  return push(std::move(out), node(x).requires_grad, [x](Tape& t, const Node& self) {
    auto xv = t.value(x);
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += self.grad[i] * selu_derivative(xv[i]);
  });
}

Var Tape::sigmoid(Var x) {
  check(x);
  auto xv = value(x);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = thoughtflow::sigmoid(xv[i]);
  return push(std::move(out), node(x).requires_grad, [x](Tape& t, const Node& self) {
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = self.view[i];
      gx[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Var Tape::softmax(Var x) {
  check(x);
  auto xv = value(x);
  std::vector<double> out(xv.size());
  softmax_into(xv, out);
  return push(std::move(out), node(x).requires_grad, [x](Tape& t, const Node& self) {
    const auto& y = self.view;
    double dot = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) dot += self.grad[k] * y[k];
    auto& gx = t.grad_buffer(x);
    for (std::size_t j = 0; j < y.size(); ++j) gx[j] += y[j] * (self.grad[j] - dot);
  });
}

Var Tape::concat(Var a, Var b) {
  check(a), check(b);
  auto av = value(a);
  auto bv = value(b);
  std::vector<double> out(av.begin(), av.end());
  out.insert(out.end(), bv.begin(), bv.end());
  const bool tracked = node(a).requires_grad || node(b).requires_grad;
  const std::size_t na = av.size();
  return push(std::move(out), tracked, [a, b, na](Tape& t, const Node& self) {
    if (t.node(a).requires_grad) {
      auto& ga = t.grad_buffer(a);
      for (std::size_t i = 0; i < na; ++i) ga[i] += self.grad[i];
    }
    if (t.node(b).requires_grad) {
      auto& gb = t.grad_buffer(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[na + i];
    }
  });
}

Var Tape::mul_mask(Var x, std::span<const double> mask) {
  check(x);
  auto xv = value(x);
  if (xv.size() != mask.size()) throw DimensionError("mul_mask: length mismatch");
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * mask[i];
  std::vector<double> m(mask.begin(), mask.end());
  return push(std::move(out), node(x).requires_grad,
              [x, m = std::move(m)](Tape& t, const Node& self) {
                auto& gx = t.grad_buffer(x);
                for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * m[i];
              });
}

Var Tape::pick(Var x, std::size_t index) {
  check(x);
  auto xv = value(x);
  if (index >= xv.size()) throw DimensionError("pick: index out of range");
  return push({xv[index]}, node(x).requires_grad, [x, index](Tape& t, const Node& self) {
    t.grad_buffer(x)[index] += self.grad[0];
  });
}

Var Tape::square(Var x) {
  check(x);
  auto xv = value(x);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * xv[i];
  return push(std::move(out), node(x).requires_grad, [x](Tape& t, const Node& self) {
    auto xv = t.value(x);
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += 2.0 * xv[i] * self.grad[i];
  });
}

Var Tape::add(Var a, Var b) {
  check(a), check(b);
  auto av = value(a);
  auto bv = value(b);
  if (av.size() != bv.size()) throw DimensionError("add: length mismatch");
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  const bool tracked = node(a).requires_grad || node(b).requires_grad;
  return push(std::move(out), tracked, [a, b](Tape& t, const Node& self) {
    for (Var v : {a, b}) {
      if (!t.node(v).requires_grad) continue;
      auto& g = t.grad_buffer(v);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Var Tape::scale(Var x, double factor) {
  check(x);
  auto xv = value(x);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * factor;
  return push(std::move(out), node(x).requires_grad, [x, factor](Tape& t, const Node& self) {
    auto& gx = t.grad_buffer(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * factor;
  });
}

Var Tape::sum(Var x) {
  check(x);
  auto xv = value(x);
  double total = 0.0;
  for (double v : xv) total += v;
  return push({total}, node(x).requires_grad, [x](Tape& t, const Node& self) {
    auto& gx = t.grad_buffer(x);
    for (double& g : gx) g += self.grad[0];
  });
}

Var Tape::softmax_cross_entropy(Var logits, std::size_t gold) {
  check(logits);
  auto z = value(logits);
  if (gold >= z.size()) throw DimensionError("softmax_cross_entropy: gold class out of range");
  const double shift = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - shift);
  const double loss = shift + std::log(total) - z[gold];
  return push({loss}, node(logits).requires_grad, [logits, gold](Tape& t, const Node& self) {
    auto z = t.value(logits);
    std::vector<double> p(z.size());
    softmax_into(z, p);
    auto& gz = t.grad_buffer(logits);
    for (std::size_t j = 0; j < z.size(); ++j) {
      gz[j] += self.grad[0] * (p[j] - (j == gold ? 1.0 : 0.0));
    }
  });
}

Var Tape::sigmoid_binary_cross_entropy(Var logit, double target, double positive_weight) {
  check(logit);
  const double l = scalar(logit);
  const double w = target > 0.5 ? positive_weight : 1.0;
  const double loss = w * (std::max(l, 0.0) - l * target + std::log1p(std::exp(-std::abs(l))));
  return push({loss}, node(logit).requires_grad, [logit, target, w](Tape& t, const Node& self) {
    const double l = t.value(logit)[0];
    t.grad_buffer(logit)[0] += self.grad[0] * w * (thoughtflow::sigmoid(l) - target);
  });
}

void Tape::backward(Var out) {
  check(out);
  if (value(out).size() != 1) {
    throw ContractError("backward: output node has " + std::to_string(value(out).size()) +
                        " entries, expected a scalar");
  }
  for (Node& n : nodes_) {
    if (n.requires_grad) {
      n.grad.assign(n.view.size(), 0.0);
    } else {
      n.grad.clear();
    }
  }
  Node& root = node(out);
  if (!root.requires_grad) return;
  root.grad[0] = 1.0;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, n);
  }
}

}  // namespace thoughtflow
