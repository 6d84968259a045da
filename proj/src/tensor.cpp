#include "capmatch/tensor.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace capmatch {

namespace {

std::size_t product(const std::vector<std::size_t>& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  data.assign(product(shape), 0.0);
}

Tensor Tensor::zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }

Tensor Tensor::full(std::vector<std::size_t> s, double v) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = v;
  return t;
}

Tensor Tensor::scalar(double v) {
  Tensor t({1});
  t.data[0] = v;
  return t;
}

Tensor Tensor::from_vector(std::vector<double> v) {
  Tensor t;
  t.shape = {v.size()};
  t.data = std::move(v);
  return t;
}

Tensor Tensor::from_matrix(std::size_t rows, std::size_t cols,
                           std::vector<double> v) {
  if (v.size() != rows * cols)
    throw std::invalid_argument("from_matrix: data size does not match shape");
  Tensor t;
  t.shape = {rows, cols};
  t.data = std::move(v);
  return t;
}

std::size_t Tensor::rows() const { return rank() >= 1 ? shape[0] : 1; }

std::size_t Tensor::cols() const {
  if (rank() == 2) return shape[1];
  if (rank() == 1) return 1;
  throw std::logic_error("cols: tensor rank > 2");
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return data[i * shape[1] + j];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  return data[i * shape[1] + j];
}

bool Tensor::all_finite() const {
  for (double x : data)
    if (!std::isfinite(x)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor matvec(const Tensor& a, const Tensor& x) {
  Tensor out({a.shape[0]});
  matvec_into(a, x, out);
  return out;
}

void matvec_into(const Tensor& a, const Tensor& x, Tensor& out) {
  if (a.rank() != 2 || x.rank() != 1 || a.shape[1] != x.shape[0])
    throw std::invalid_argument("matvec: shape mismatch " + a.shape_str() +
                                " vs " + x.shape_str());
  const std::size_t m = a.shape[0], k = a.shape[1];
  const double* ap = a.data.data();
  const double* xp = x.data.data();
  double* op = out.data.data();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    const double* row = ap + i * k;
    for (std::size_t j = 0; j < k; ++j) acc += row[j] * xp[j];
    op[i] = acc;
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  add_inplace(out, b);
  return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw std::invalid_argument("add: shape mismatch " + a.shape_str() +
                                " vs " + b.shape_str());
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != 1 || b.rank() != 1)
    throw std::invalid_argument("concat: rank-1 tensors required, got " +
                                a.shape_str() + " and " + b.shape_str());
  Tensor out({a.numel() + b.numel()});
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.numel());
  return out;
}

void relu_inplace(Tensor& a) {
  for (double& x : a.data)
    if (x < 0.0) x = 0.0;
}

void tanh_inplace(Tensor& a) {
  for (double& x : a.data) x = std::tanh(x);
}

double squared_norm(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data) acc += x * x;
  return acc;
}

double sigmoid(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_sigmoid(double x) {
  // log(sigmoid(x)) without overflow on either tail.
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

}  // namespace capmatch
