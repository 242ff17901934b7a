#pragma once

// Scalar define-by-run reverse-mode differentiation. Deliberately naive: one
// node per scalar, local partials recorded at creation, gradients propagated
// in reverse creation order. Used only as a test oracle.

#include <cstddef>
#include <vector>

namespace bsnn::tape {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  double value() const;
  double grad() const;
};

class Tape {
 public:
  Var leaf(double v);
  /// A value the backward sweep never differentiates through.
  Var constant(double v) { return leaf(v); }
  Var detach(Var x) { return constant(x.value()); }

  Var unary(Var a, double value, double da);
  Var binary(Var a, Var b, double value, double da, double db);

  /// Seeds d(out)/d(out) = seed and sweeps backwards. Gradients accumulate
  /// across calls until clear_grads.
  void backward(Var out, double seed = 1.0);
  void clear_grads();

  double value(std::size_t id) const { return nodes_[id].value; }
  double grad(std::size_t id) const { return nodes_[id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    double value = 0.0;
    double grad = 0.0;
    std::size_t a = 0, b = 0;
    double da = 0.0, db = 0.0;
    int arity = 0;
  };
  std::vector<Node> nodes_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator+(Var a, double c);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator-(Var a);

Var sqrt(Var a);
Var exp(Var a);
Var log(Var a);
Var abs(Var a);
Var logistic(Var a);

/// Heaviside at v_th (>= fires) with the triangular surrogate as derivative.
Var spike(Var u, double v_th, double beta);
/// -1 below zero, +1 otherwise; derivative 1 where |w| <= 1.
Var sign_ste(Var w);

/// Sum of a list of vars, left to right.
Var sum(const std::vector<Var>& xs);

}  // namespace bsnn::tape
