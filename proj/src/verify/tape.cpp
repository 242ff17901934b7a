#include "bsnn/verify/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace bsnn::tape {

double Var::value() const { return tape->value(id); }
double Var::grad() const { return tape->grad(id); }

Var Tape::leaf(double v) {
  nodes_.push_back({v, 0.0, 0, 0, 0.0, 0.0, 0});
  return {this, nodes_.size() - 1};
}

Var Tape::unary(Var a, double value, double da) {
  nodes_.push_back({value, 0.0, a.id, 0, da, 0.0, 1});
  return {this, nodes_.size() - 1};
}

Var Tape::binary(Var a, Var b, double value, double da, double db) {
  nodes_.push_back({value, 0.0, a.id, b.id, da, db, 2});
  return {this, nodes_.size() - 1};
}

void Tape::backward(Var out, double seed) {
  nodes_[out.id].grad += seed;
  for (std::size_t k = out.id + 1; k-- > 0;) {
    const Node& n = nodes_[k];
    if (n.grad == 0.0) continue;
    if (n.arity >= 1) nodes_[n.a].grad += n.grad * n.da;
    if (n.arity == 2) nodes_[n.b].grad += n.grad * n.db;
  }
}

void Tape::clear_grads() {
  for (auto& n : nodes_) n.grad = 0.0;
}

namespace {
Tape* same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("vars from different tapes");
  return a.tape;
}
}  // namespace

Var operator+(Var a, Var b) { return same_tape(a, b)->binary(a, b, a.value() + b.value(), 1.0, 1.0); }
Var operator-(Var a, Var b) { return same_tape(a, b)->binary(a, b, a.value() - b.value(), 1.0, -1.0); }
Var operator*(Var a, Var b) {
  return same_tape(a, b)->binary(a, b, a.value() * b.value(), b.value(), a.value());
}
Var operator/(Var a, Var b) {
  const double bv = b.value();
  return same_tape(a, b)->binary(a, b, a.value() / bv, 1.0 / bv, -a.value() / (bv * bv));
}
Var operator+(Var a, double c) { return a.tape->unary(a, a.value() + c, 1.0); }
Var operator*(Var a, double c) { return a.tape->unary(a, a.value() * c, c); }
Var operator*(double c, Var a) { return a * c; }
Var operator-(Var a) { return a.tape->unary(a, -a.value(), -1.0); }

Var sqrt(Var a) {
  const double r = std::sqrt(a.value());
  return a.tape->unary(a, r, 0.5 / r);
}
Var exp(Var a) {
  const double e = std::exp(a.value());
  return a.tape->unary(a, e, e);
}
Var log(Var a) { return a.tape->unary(a, std::log(a.value()), 1.0 / a.value()); }
Var abs(Var a) { return a.tape->unary(a, std::fabs(a.value()), a.value() < 0.0 ? -1.0 : 1.0); }

Var logistic(Var a) {
  const double s = 1.0 / (1.0 + std::exp(-a.value()));
  return a.tape->unary(a, s, s * (1.0 - s));
}

Var spike(Var u, double v_th, double beta) {
  const double v = u.value();
  const double d = beta - std::fabs(v - v_th);
  return u.tape->unary(u, v >= v_th ? 1.0 : 0.0, d > 0.0 ? d : 0.0);
}

Var sign_ste(Var w) {
  const double v = w.value();
  return w.tape->unary(w, v < 0.0 ? -1.0 : 1.0, std::fabs(v) <= 1.0 ? 1.0 : 0.0);
}

Var sum(const std::vector<Var>& xs) {
  if (xs.empty()) throw std::logic_error("sum of nothing");
  Var s = xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) s = s + xs[i];
  return s;
}

}  // namespace bsnn::tape
