#pragma once

// Dense numerics: a shape-checked tensor, the trainable parameter set, and
// the scalar primitives (softmax/sigmoid/leaky rectifier/cross-entropy) the
// model is built from.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "gml/common.hpp"

namespace gml {

/// Dense row-major tensor of doubles.  Construction validates that the shape
/// product matches the value count and that every value is finite.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  /// Zero-filled tensor of the given shape.
  static Tensor zeros(std::vector<std::size_t> shape);

  const std::vector<std::size_t>& shape() const { return shape_; }
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  std::size_t size() const { return values_.size(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

  /// Element (r, c) of a rank-2 tensor.
  double at(std::size_t r, std::size_t c) const { return values_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

/// Trainable parameters theta.  Shapes are fixed by (d, d_hidden, n_way):
///   encoder     d x d_hidden    linear embedding weights
///   reweight    2*d_hidden      scoring vector applied to [z || delta]
///   attention   2               pair-mixing vector (length 2, as specified)
///   classifier  d_hidden x n_way
///   bias        n_way
struct ParamSet {
  int d = 0;
  int d_hidden = 0;
  int n_way = 0;
  std::vector<double> encoder;
  std::vector<double> reweight;
  std::vector<double> attention;
  std::vector<double> classifier;
  std::vector<double> bias;

  /// All-zero parameters of the given dimensions.
  static ParamSet zeros(int d, int d_hidden, int n_way);

  /// Seeded Glorot-uniform init (+-sqrt(6/(fan_in+fan_out))); bias starts at zero.
  static ParamSet init(int d, int d_hidden, int n_way, std::uint64_t seed);

  std::size_t count() const;
  std::vector<double> flatten() const;
  static ParamSet unflatten(int d, int d_hidden, int n_way, std::span<const double> flat);

  bool same_shape(const ParamSet& other) const {
    return d == other.d && d_hidden == other.d_hidden && n_way == other.n_way;
  }
  bool all_finite() const;
};

/// Derivatives share the layout of the parameters they differentiate.
using GradientSet = ParamSet;

/// y += a * x, shape-checked.  The only vector-space op the optimizers need.
void axpy(double a, const GradientSet& x, ParamSet& y);

namespace num {

/// Numerically stable softmax (max-shifted).  Throws DivergenceError on
/// non-finite input.
std::vector<double> softmax(std::span<const double> logits);

double sigmoid(double x);

/// x for x >= 0, slope*x otherwise (slope 0.2 by default; x = 0 takes the
/// positive branch).
double leaky(double x, double slope = 0.2);

/// -log(p[target]) with p clamped at 1e-12.
double cross_entropy(std::span<const double> probs, std::size_t target);

inline constexpr double kProbFloor = 1e-12;

}  // namespace num

}  // namespace gml
