#pragma once

// Reverse-mode automatic differentiation on a Wengert list, templated on the
// scalar type.  Tape<double> yields exact first derivatives; Tape<Dual>
// (forward-over-reverse) yields Hessian-vector products to machine precision,
// which is what makes the exact meta-gradient mode exact rather than an FD
// approximation.
//
// Nodes hold up to n arguments with precomputed local partials, so a whole
// constant-coefficient dot product (the encoder workhorse) is one node.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gml/common.hpp"
#include "gml/tensor.hpp"

namespace gml::ad {

/// First-order dual number: value v, directional derivative d.
struct Dual {
  double v = 0.0;
  double d = 0.0;
  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit from double is the point
  Dual(double value, double deriv) : v(value), d(deriv) {}
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator-(Dual a) { return {-a.v, -a.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) {
  const double q = a.v / b.v;
  return {q, (a.d - q * b.d) / b.v};
}
inline Dual& operator+=(Dual& a, Dual b) { a = a + b; return a; }
inline bool operator<(Dual a, Dual b) { return a.v < b.v; }
inline bool operator>(Dual a, Dual b) { return a.v > b.v; }
inline Dual exp(Dual a) {
  const double e = std::exp(a.v);
  return {e, e * a.d};
}
inline Dual log(Dual a) { return {std::log(a.v), a.d / a.v}; }
inline Dual sigmoid(Dual a) {
  const double s = num::sigmoid(a.v);
  return {s, s * (1.0 - s) * a.d};
}
inline Dual leaky(Dual a, double slope) {
  return a.v >= 0.0 ? a : Dual{slope * a.v, slope * a.d};
}
inline bool is_finite(Dual a) { return std::isfinite(a.v) && std::isfinite(a.d); }
inline bool is_zero(Dual a) { return a.v == 0.0 && a.d == 0.0; }
inline double value_part(Dual a) { return a.v; }
inline double deriv_part(Dual a) { return a.d; }

inline bool is_finite(double a) { return std::isfinite(a); }
inline bool is_zero(double a) { return a == 0.0; }
inline double value_part(double a) { return a; }

// Double counterparts of the scalar math, declared before Tape so that
// unqualified calls inside Tape<double> resolve here and not via the
// implicit double -> Dual conversion.
inline double exp(double x) { return std::exp(x); }
inline double log(double x) { return std::log(x); }
inline double sigmoid(double x) { return num::sigmoid(x); }
inline double leaky(double x, double slope) { return num::leaky(x, slope); }

template <class S>
class Tape;

/// Handle to a tape node.  Copyable, trivially small; all arithmetic on Vars
/// records new nodes on the owning tape.
template <class S>
struct Var {
  Tape<S>* tape = nullptr;
  std::int32_t id = -1;
};

template <class S>
class Tape {
 public:
  explicit Tape(std::size_t reserve_nodes = 1024) {
    values_.reserve(reserve_nodes);
    arg_begin_.reserve(reserve_nodes);
    arg_count_.reserve(reserve_nodes);
    args_.reserve(reserve_nodes * 2);
    partials_.reserve(reserve_nodes * 2);
  }

  /// Differentiable leaf.
  Var<S> input(S value) { return emplace(value, nullptr, nullptr, 0); }

  /// Non-differentiable leaf (gradient sinks here).
  Var<S> constant(S value) { return emplace(value, nullptr, nullptr, 0); }

  S value(Var<S> x) const { return values_[x.id]; }
  std::size_t size() const { return values_.size(); }

  Var<S> add(Var<S> a, Var<S> b) {
    const S one(1.0);
    const S parts[2] = {one, one};
    const std::int32_t args[2] = {a.id, b.id};
    return emplace(values_[a.id] + values_[b.id], args, parts, 2);
  }
  Var<S> sub(Var<S> a, Var<S> b) {
    const S parts[2] = {S(1.0), S(-1.0)};
    const std::int32_t args[2] = {a.id, b.id};
    return emplace(values_[a.id] - values_[b.id], args, parts, 2);
  }
  Var<S> mul(Var<S> a, Var<S> b) {
    const S parts[2] = {values_[b.id], values_[a.id]};
    const std::int32_t args[2] = {a.id, b.id};
    return emplace(values_[a.id] * values_[b.id], args, parts, 2);
  }
  Var<S> div(Var<S> a, Var<S> b) {
    const S q = values_[a.id] / values_[b.id];
    const S parts[2] = {S(1.0) / values_[b.id], -q / values_[b.id]};
    const std::int32_t args[2] = {a.id, b.id};
    return emplace(q, args, parts, 2);
  }
  Var<S> neg(Var<S> a) {
    const S part = S(-1.0);
    return emplace(-values_[a.id], &a.id, &part, 1);
  }
  Var<S> addc(Var<S> a, double c) {
    const S part = S(1.0);
    return emplace(values_[a.id] + S(c), &a.id, &part, 1);
  }
  Var<S> mulc(Var<S> a, double c) {
    const S part = S(c);
    return emplace(values_[a.id] * S(c), &a.id, &part, 1);
  }
  Var<S> exp_(Var<S> a) {
    using std::exp;
    const S e = exp(values_[a.id]);
    return emplace(e, &a.id, &e, 1);
  }
  Var<S> log_(Var<S> a) {
    using std::log;
    const S part = S(1.0) / values_[a.id];
    return emplace(log(values_[a.id]), &a.id, &part, 1);
  }
  Var<S> sigmoid_(Var<S> a) {
    const S s = sigmoid(values_[a.id]);
    const S part = s * (S(1.0) - s);
    return emplace(s, &a.id, &part, 1);
  }
  Var<S> leaky_(Var<S> a, double slope) {
    const S v = values_[a.id];
    const bool pos = !(v < S(0.0));
    const S part = pos ? S(1.0) : S(slope);
    return emplace(pos ? v : S(slope) * v, &a.id, &part, 1);
  }

  /// sum_i coeff[i] * xs[i] with constant coefficients, as a single node.
  Var<S> dot_const(std::span<const double> coeff, const Var<S>* xs) {
    S acc(0.0);
    scratch_args_.clear();
    scratch_parts_.clear();
    for (std::size_t i = 0; i < coeff.size(); ++i) {
      acc += S(coeff[i]) * values_[xs[i].id];
      scratch_args_.push_back(xs[i].id);
      scratch_parts_.push_back(S(coeff[i]));
    }
    return emplace(acc, scratch_args_.data(), scratch_parts_.data(),
                   static_cast<std::uint32_t>(coeff.size()));
  }

  /// sum_i coeff[i] * xs[i*stride]: dot_const against a strided column.
  Var<S> dot_const_strided(std::span<const double> coeff, const Var<S>* xs, std::size_t stride) {
    S acc(0.0);
    scratch_args_.clear();
    scratch_parts_.clear();
    for (std::size_t i = 0; i < coeff.size(); ++i) {
      const std::int32_t id = xs[i * stride].id;
      acc += S(coeff[i]) * values_[id];
      scratch_args_.push_back(id);
      scratch_parts_.push_back(S(coeff[i]));
    }
    return emplace(acc, scratch_args_.data(), scratch_parts_.data(),
                   static_cast<std::uint32_t>(coeff.size()));
  }

  /// Variable-variable inner product sum_i a[i*sa] * b[i*sb], one node.
  Var<S> dot(const Var<S>* a, const Var<S>* b, std::size_t n, std::size_t sa = 1,
             std::size_t sb = 1) {
    S acc(0.0);
    scratch_args_.clear();
    scratch_parts_.clear();
    for (std::size_t i = 0; i < n; ++i) {
      const std::int32_t ia = a[i * sa].id;
      const std::int32_t ib = b[i * sb].id;
      acc += values_[ia] * values_[ib];
      scratch_args_.push_back(ia);
      scratch_parts_.push_back(values_[ib]);
      scratch_args_.push_back(ib);
      scratch_parts_.push_back(values_[ia]);
    }
    return emplace(acc, scratch_args_.data(), scratch_parts_.data(),
                   static_cast<std::uint32_t>(2 * n));
  }

  /// sum_i xs[i] as a single node.
  Var<S> sum(const Var<S>* xs, std::size_t n) {
    S acc(0.0);
    scratch_args_.clear();
    scratch_parts_.clear();
    for (std::size_t i = 0; i < n; ++i) {
      acc += values_[xs[i].id];
      scratch_args_.push_back(xs[i].id);
      scratch_parts_.push_back(S(1.0));
    }
    return emplace(acc, scratch_args_.data(), scratch_parts_.data(), static_cast<std::uint32_t>(n));
  }

  /// Reverse sweep from `out` (seed adjoint 1).  Adjoints of all nodes with
  /// id <= out.id become available via adjoint().
  void backward(Var<S> out) {
    adjoints_.assign(values_.size(), S(0.0));
    adjoints_[out.id] = S(1.0);
    for (std::int32_t i = out.id; i >= 0; --i) {
      const S a = adjoints_[i];
      if (is_zero(a)) continue;
      const std::uint32_t begin = arg_begin_[i];
      const std::uint32_t n = arg_count_[i];
      for (std::uint32_t k = 0; k < n; ++k) {
        adjoints_[args_[begin + k]] += partials_[begin + k] * a;
      }
    }
  }

  S adjoint(Var<S> x) const { return adjoints_[x.id]; }

 private:
  Var<S> emplace(S value, const std::int32_t* args, const S* parts, std::uint32_t n) {
    const std::int32_t id = static_cast<std::int32_t>(values_.size());
    values_.push_back(value);
    arg_begin_.push_back(static_cast<std::uint32_t>(args_.size()));
    arg_count_.push_back(n);
    for (std::uint32_t k = 0; k < n; ++k) {
      args_.push_back(args[k]);
      partials_.push_back(parts[k]);
    }
    return Var<S>{this, id};
  }

  std::vector<S> values_;
  std::vector<std::uint32_t> arg_begin_;
  std::vector<std::uint32_t> arg_count_;
  std::vector<std::int32_t> args_;
  std::vector<S> partials_;
  std::vector<S> adjoints_;
  std::vector<std::int32_t> scratch_args_;
  std::vector<S> scratch_parts_;
};

// Operator sugar so model code reads like scalar math for any numeric type.
template <class S> Var<S> operator+(Var<S> a, Var<S> b) { return a.tape->add(a, b); }
template <class S> Var<S> operator-(Var<S> a, Var<S> b) { return a.tape->sub(a, b); }
template <class S> Var<S> operator*(Var<S> a, Var<S> b) { return a.tape->mul(a, b); }
template <class S> Var<S> operator/(Var<S> a, Var<S> b) { return a.tape->div(a, b); }
template <class S> Var<S> operator-(Var<S> a) { return a.tape->neg(a); }
template <class S> Var<S>& operator+=(Var<S>& a, Var<S> b) { a = a + b; return a; }

template <class S> Var<S> exp(Var<S> a) { return a.tape->exp_(a); }
template <class S> Var<S> log(Var<S> a) { return a.tape->log_(a); }
template <class S> Var<S> sigmoid(Var<S> a) { return a.tape->sigmoid_(a); }
template <class S> Var<S> leaky(Var<S> a, double slope) { return a.tape->leaky_(a, slope); }

template <class S> double value_of(Var<S> x) { return value_part(x.tape->value(x)); }
inline double value_of(double x) { return x; }

// Mixed Num/constant helpers used by generic model code.
template <class S> Var<S> mulc(Var<S> x, double c) { return x.tape->mulc(x, c); }
template <class S> Var<S> addc(Var<S> x, double c) { return x.tape->addc(x, c); }
inline double mulc(double x, double c) { return x * c; }
inline double addc(double x, double c) { return x + c; }

template <class S>
Var<S> dot_const(std::span<const double> coeff, const Var<S>* xs) {
  return xs[0].tape->dot_const(coeff, xs);
}
inline double dot_const(std::span<const double> coeff, const double* xs) {
  double acc = 0.0;
  for (std::size_t i = 0; i < coeff.size(); ++i) acc += coeff[i] * xs[i];
  return acc;
}

template <class S>
Var<S> sum(const Var<S>* xs, std::size_t n) {
  return xs[0].tape->sum(xs, n);
}
inline double sum(const double* xs, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += xs[i];
  return acc;
}

template <class S>
Var<S> dot_const_strided(std::span<const double> coeff, const Var<S>* xs, std::size_t stride) {
  return xs[0].tape->dot_const_strided(coeff, xs, stride);
}
inline double dot_const_strided(std::span<const double> coeff, const double* xs,
                                std::size_t stride) {
  double acc = 0.0;
  for (std::size_t i = 0; i < coeff.size(); ++i) acc += coeff[i] * xs[i * stride];
  return acc;
}

template <class S>
Var<S> dot(const Var<S>* a, const Var<S>* b, std::size_t n, std::size_t sa = 1,
           std::size_t sb = 1) {
  return a[0].tape->dot(a, b, n, sa, sb);
}
inline double dot(const double* a, const double* b, std::size_t n, std::size_t sa = 1,
                  std::size_t sb = 1) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i * sa] * b[i * sb];
  return acc;
}

template <class S>
Var<S> constant_like(Var<S> sample, double c) {
  return sample.tape->constant(S(c));
}
inline double constant_like(double, double c) { return c; }

/// Generic mirror of ParamSet whose entries can be doubles, tape vars, or
/// duals — the differentiable forward pass is written once against this.
template <class Num>
struct ParamPack {
  int d = 0;
  int d_hidden = 0;
  int n_way = 0;
  std::vector<Num> encoder;
  std::vector<Num> reweight;
  std::vector<Num> attention;
  std::vector<Num> classifier;
  std::vector<Num> bias;
};

inline ParamPack<double> pack(const ParamSet& p) {
  return {p.d, p.d_hidden, p.n_way, p.encoder, p.reweight, p.attention, p.classifier, p.bias};
}

/// Register every parameter as a differentiable tape leaf (flatten order).
template <class S>
ParamPack<Var<S>> lift(Tape<S>& tape, const ParamSet& p) {
  ParamPack<Var<S>> out;
  out.d = p.d;
  out.d_hidden = p.d_hidden;
  out.n_way = p.n_way;
  auto lift_part = [&tape](const std::vector<double>& src, std::vector<Var<S>>& dst) {
    dst.reserve(src.size());
    for (double v : src) dst.push_back(tape.input(S(v)));
  };
  lift_part(p.encoder, out.encoder);
  lift_part(p.reweight, out.reweight);
  lift_part(p.attention, out.attention);
  lift_part(p.classifier, out.classifier);
  lift_part(p.bias, out.bias);
  return out;
}

/// As lift(), but each leaf carries direction[i] in its derivative slot, so a
/// backward pass over this tape produces Hessian-vector products.
inline ParamPack<Var<Dual>> lift_dual(Tape<Dual>& tape, const ParamSet& p,
                                      const GradientSet& direction) {
  if (!p.same_shape(direction)) throw DataError("lift_dual: direction shape mismatch");
  ParamPack<Var<Dual>> out;
  out.d = p.d;
  out.d_hidden = p.d_hidden;
  out.n_way = p.n_way;
  auto lift_part = [&tape](const std::vector<double>& src, const std::vector<double>& dir,
                           std::vector<Var<Dual>>& dst) {
    dst.reserve(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) dst.push_back(tape.input(Dual(src[i], dir[i])));
  };
  lift_part(p.encoder, direction.encoder, out.encoder);
  lift_part(p.reweight, direction.reweight, out.reweight);
  lift_part(p.attention, direction.attention, out.attention);
  lift_part(p.classifier, direction.classifier, out.classifier);
  lift_part(p.bias, direction.bias, out.bias);
  return out;
}

namespace detail {
template <class S, class Extract>
GradientSet collect(const Tape<S>& tape, const ParamPack<Var<S>>& leaves, const ParamSet& shape,
                    Extract extract) {
  GradientSet g = ParamSet::zeros(shape.d, shape.d_hidden, shape.n_way);
  auto pull = [&tape, &extract](const std::vector<Var<S>>& vars, std::vector<double>& dst) {
    for (std::size_t i = 0; i < vars.size(); ++i) dst[i] = extract(tape.adjoint(vars[i]));
  };
  pull(leaves.encoder, g.encoder);
  pull(leaves.reweight, g.reweight);
  pull(leaves.attention, g.attention);
  pull(leaves.classifier, g.classifier);
  pull(leaves.bias, g.bias);
  return g;
}
}  // namespace detail

/// Exact gradient of a tape-expressible scalar loss at `p`.
/// F: (Tape<double>&, const ParamPack<Var<double>>&) -> Var<double>.
template <class F>
GradientSet gradient(F&& loss, const ParamSet& p, std::size_t reserve_nodes = 4096) {
  Tape<double> tape(reserve_nodes);
  ParamPack<Var<double>> leaves = lift(tape, p);
  Var<double> out = loss(tape, leaves);
  if (!std::isfinite(tape.value(out))) throw DivergenceError("gradient: non-finite loss");
  tape.backward(out);
  return detail::collect(tape, leaves, p, [](double a) { return a; });
}

/// Hessian-vector product H(p) * v of the same loss, via forward-over-reverse.
/// The value parts reproduce the gradient; the derivative parts are H v.
template <class F>
GradientSet hessian_vector(F&& loss, const ParamSet& p, const GradientSet& v,
                           std::size_t reserve_nodes = 4096) {
  Tape<Dual> tape(reserve_nodes);
  ParamPack<Var<Dual>> leaves = lift_dual(tape, p, v);
  Var<Dual> out = loss(tape, leaves);
  if (!is_finite(tape.value(out))) throw DivergenceError("hessian_vector: non-finite loss");
  tape.backward(out);
  return detail::collect(tape, leaves, p, [](Dual a) { return a.d; });
}

}  // namespace gml::ad
