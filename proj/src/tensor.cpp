#include "gml/tensor.hpp"

#include <cmath>
#include <numeric>

namespace gml {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  return n;
}

void check_finite(const std::vector<double>& values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw DivergenceError(std::string(what) + ": non-finite value");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_product(shape_) != values_.size()) {
    throw DataError("Tensor: shape product " + std::to_string(shape_product(shape_)) +
                    " != value count " + std::to_string(values_.size()));
  }
  check_finite(values_, "Tensor");
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::vector<double> v(shape_product(shape), 0.0);
  return Tensor(std::move(shape), std::move(v));
}

ParamSet ParamSet::zeros(int d, int d_hidden, int n_way) {
  if (d <= 0 || d_hidden <= 0 || n_way <= 0) throw DataError("ParamSet: dimensions must be positive");
  ParamSet p;
  p.d = d;
  p.d_hidden = d_hidden;
  p.n_way = n_way;
  p.encoder.assign(static_cast<std::size_t>(d) * d_hidden, 0.0);
  p.reweight.assign(2 * static_cast<std::size_t>(d_hidden), 0.0);
  p.attention.assign(2, 0.0);
  p.classifier.assign(static_cast<std::size_t>(d_hidden) * n_way, 0.0);
  p.bias.assign(static_cast<std::size_t>(n_way), 0.0);
  return p;
}

ParamSet ParamSet::init(int d, int d_hidden, int n_way, std::uint64_t seed) {
  ParamSet p = zeros(d, d_hidden, n_way);
  Rng rng(derive_seed(seed, /*tag=*/0x1417u));
  auto fill = [&rng](std::vector<double>& w, int fan_in, int fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (double& x : w) x = rng.uniform_real(-bound, bound);
  };
  fill(p.encoder, d, d_hidden);
  fill(p.reweight, 2 * d_hidden, 1);
  fill(p.attention, 2, 1);
  fill(p.classifier, d_hidden, n_way);
  // bias stays zero
  return p;
}

std::size_t ParamSet::count() const {
  return encoder.size() + reweight.size() + attention.size() + classifier.size() + bias.size();
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> flat;
  flat.reserve(count());
  for (const auto* part : {&encoder, &reweight, &attention, &classifier, &bias}) {
    flat.insert(flat.end(), part->begin(), part->end());
  }
  return flat;
}

ParamSet ParamSet::unflatten(int d, int d_hidden, int n_way, std::span<const double> flat) {
  ParamSet p = zeros(d, d_hidden, n_way);
  if (flat.size() != p.count()) {
    throw DataError("ParamSet::unflatten: expected " + std::to_string(p.count()) +
                    " values, got " + std::to_string(flat.size()));
  }
  std::size_t off = 0;
  for (auto* part : {&p.encoder, &p.reweight, &p.attention, &p.classifier, &p.bias}) {
    std::copy(flat.begin() + off, flat.begin() + off + part->size(), part->begin());
    off += part->size();
  }
  return p;
}

bool ParamSet::all_finite() const {
  for (const auto* part : {&encoder, &reweight, &attention, &classifier, &bias}) {
    for (double v : *part) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

void axpy(double a, const GradientSet& x, ParamSet& y) {
  if (!x.same_shape(y)) throw DataError("axpy: shape mismatch");
  auto add = [a](const std::vector<double>& src, std::vector<double>& dst) {
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] += a * src[i];
  };
  add(x.encoder, y.encoder);
  add(x.reweight, y.reweight);
  add(x.attention, y.attention);
  add(x.classifier, y.classifier);
  add(x.bias, y.bias);
}

namespace num {

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw DataError("softmax: empty input");
  double m = logits[0];
  for (double x : logits) {
    if (!std::isfinite(x)) throw DivergenceError("softmax: non-finite logit");
    if (x > m) m = x;
  }
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

double sigmoid(double x) {
  // split on sign to avoid overflow in exp
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double leaky(double x, double slope) { return x >= 0.0 ? x : slope * x; }

double cross_entropy(std::span<const double> probs, std::size_t target) {
  if (target >= probs.size()) throw DataError("cross_entropy: target out of range");
  double p = probs[target];
  if (!std::isfinite(p)) throw DivergenceError("cross_entropy: non-finite probability");
  if (p < kProbFloor) p = kProbFloor;
  return -std::log(p);
}

}  // namespace num

}  // namespace gml
