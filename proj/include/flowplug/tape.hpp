#pragma once

// Scalar reverse-mode differentiation. A Tape records every primitive in
// evaluation order; backward() sweeps it once in reverse. It is slow compared
// to the batched hand-written backprop in mlp/flow but works for any scalar
// function built from the primitives below, which makes it a second,
// independent route to the same gradients.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace flowplug::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy.
class Var {
 public:
  Var() = default;
  double value() const;
  std::size_t index() const { return index_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t i) : tape_(t), index_(i) {}
  Tape* tape_ = nullptr;
  std::size_t index_ = 0;
};

class Tape {
 public:
  Var variable(double v);
  Var constant(double v) { return variable(v); }

  // Node with up to two parents and the local partial derivatives.
  Var push(double value, std::size_t a, double da, std::size_t b, double db);
  Var push(double value, std::size_t a, double da);

  double value(std::size_t i) const { return nodes_[i].value; }
  std::size_t size() const { return nodes_.size(); }

  // Adjoints of every node with respect to `output`.
  std::vector<double> backward(Var output) const;

 private:
  struct Node {
    double value;
    std::size_t parent[2];
    double partial[2];
    int arity;
  };
  std::vector<Node> nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var square(Var a);
Var leaky_relu(Var a, double slope);

using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

// Gradient of fn at params. Throws NumericError if any recorded intermediate
// or adjoint is non-finite.
std::vector<double> gradient(const ScalarFn& fn, std::span<const double> params);

// Value of fn at params, evaluated on a throwaway tape.
double evaluate(const ScalarFn& fn, std::span<const double> params);

}  // namespace flowplug::ad
