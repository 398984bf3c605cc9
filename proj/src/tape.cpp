#include "flowplug/tape.hpp"

#include <cmath>
#include <string>

#include "flowplug/errors.hpp"

namespace flowplug::ad {

double Var::value() const { return tape_->value(index_); }

Var Tape::variable(double v) {
  nodes_.push_back({v, {0, 0}, {0.0, 0.0}, 0});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(double value, std::size_t a, double da, std::size_t b, double db) {
  nodes_.push_back({value, {a, b}, {da, db}, 2});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(double value, std::size_t a, double da) {
  nodes_.push_back({value, {a, 0}, {da, 0.0}, 1});
  return Var(this, nodes_.size() - 1);
}

std::vector<double> Tape::backward(Var output) const {
  std::vector<double> adj(nodes_.size(), 0.0);
  adj[output.index()] = 1.0;
  for (std::size_t i = output.index() + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (adj[i] == 0.0) continue;
    for (int p = 0; p < n.arity; ++p) adj[n.parent[p]] += adj[i] * n.partial[p];
  }
  return adj;
}

namespace {
Tape& tape_of(Var a) { return *a.tape(); }
}  // namespace

Var operator+(Var a, Var b) {
  return tape_of(a).push(a.value() + b.value(), a.index(), 1.0, b.index(), 1.0);
}
Var operator-(Var a, Var b) {
  return tape_of(a).push(a.value() - b.value(), a.index(), 1.0, b.index(), -1.0);
}
Var operator*(Var a, Var b) {
  return tape_of(a).push(a.value() * b.value(), a.index(), b.value(), b.index(), a.value());
}
Var operator/(Var a, Var b) {
  const double bv = b.value();
  return tape_of(a).push(a.value() / bv, a.index(), 1.0 / bv, b.index(), -a.value() / (bv * bv));
}
Var operator-(Var a) { return tape_of(a).push(-a.value(), a.index(), -1.0); }
Var operator+(Var a, double b) { return tape_of(a).push(a.value() + b, a.index(), 1.0); }
Var operator+(double a, Var b) { return b + a; }
Var operator-(Var a, double b) { return tape_of(a).push(a.value() - b, a.index(), 1.0); }
Var operator-(double a, Var b) { return tape_of(b).push(a - b.value(), b.index(), -1.0); }
Var operator*(Var a, double b) { return tape_of(a).push(a.value() * b, a.index(), b); }
Var operator*(double a, Var b) { return b * a; }
Var operator/(Var a, double b) { return tape_of(a).push(a.value() / b, a.index(), 1.0 / b); }

Var exp(Var a) {
  const double e = std::exp(a.value());
  return tape_of(a).push(e, a.index(), e);
}
Var log(Var a) { return tape_of(a).push(std::log(a.value()), a.index(), 1.0 / a.value()); }
Var tanh(Var a) {
  const double t = std::tanh(a.value());
  return tape_of(a).push(t, a.index(), 1.0 - t * t);
}
Var square(Var a) { return tape_of(a).push(a.value() * a.value(), a.index(), 2.0 * a.value()); }
Var leaky_relu(Var a, double slope) {
  const double v = a.value();
  return v < 0.0 ? tape_of(a).push(slope * v, a.index(), slope) : tape_of(a).push(v, a.index(), 1.0);
}

std::vector<double> gradient(const ScalarFn& fn, std::span<const double> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (double p : params) vars.push_back(tape.variable(p));
  const Var out = fn(tape, vars);
  for (std::size_t i = 0; i < tape.size(); ++i)
    if (!std::isfinite(tape.value(i)))
      throw NumericError("gradient: non-finite intermediate at tape node " + std::to_string(i));
  const auto adj = tape.backward(out);
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < vars.size(); ++i) {
    g[i] = adj[vars[i].index()];
    if (!std::isfinite(g[i]))
      throw NumericError("gradient: non-finite adjoint for parameter " + std::to_string(i));
  }
  return g;
}

double evaluate(const ScalarFn& fn, std::span<const double> params) {
  Tape tape;
  std::vector<Var> vars;
  for (double p : params) vars.push_back(tape.variable(p));
  return fn(tape, vars).value();
}

}  // namespace flowplug::ad
