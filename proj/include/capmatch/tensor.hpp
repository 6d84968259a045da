#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace capmatch {

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 cover every model
// in this project; scalars are shape {1}.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);

  static Tensor zeros(std::vector<std::size_t> s);
  static Tensor full(std::vector<std::size_t> s, double v);
  static Tensor scalar(double v);
  static Tensor from_vector(std::vector<double> v);
  static Tensor from_matrix(std::size_t rows, std::size_t cols,
                            std::vector<double> v);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool is_scalar() const { return numel() == 1; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j);
  double at(std::size_t i, std::size_t j) const;

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  std::string shape_str() const;  // e.g. "[3x4]"
};

// Plain math helpers shared by the inference fast path and tests.
Tensor matvec(const Tensor& a, const Tensor& x);        // [m x k] * [k] -> [m]
void matvec_into(const Tensor& a, const Tensor& x, Tensor& out);
Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);
Tensor concat(const Tensor& a, const Tensor& b);        // rank-1 only
void relu_inplace(Tensor& a);
void tanh_inplace(Tensor& a);
double squared_norm(const Tensor& a);
double sigmoid(double x);
double log_sigmoid(double x);

}  // namespace capmatch
