#ifndef VOXBUILD_TENSOR_HPP_
#define VOXBUILD_TENSOR_HPP_

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace voxbuild {

// Dense row-major tensor of 64-bit floats. Deliberately minimal: the
// training code addresses raw data with explicit index arithmetic, this
// type just owns the storage and the shape.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::initializer_list<std::size_t> dims)
      : shape(dims), data(product(dims), 0.0) {}

  static Tensor zeros(std::initializer_list<std::size_t> dims) {
    return Tensor(dims);
  }

  std::size_t numel() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape[i]; }

  double& at(std::size_t i) { return data[i]; }
  double at(std::size_t i) const { return data[i]; }
  double& at(std::size_t i, std::size_t j) {
    assert(shape.size() == 2);
    return data[i * shape[1] + j];
  }
  double at(std::size_t i, std::size_t j) const {
    assert(shape.size() == 2);
    return data[i * shape[1] + j];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    assert(shape.size() == 3);
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    assert(shape.size() == 3);
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  void fill(double v) { data.assign(data.size(), v); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

 private:
  static std::size_t product(std::initializer_list<std::size_t> dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
  }
};

// y = x * w + bias for w with shape [in, out], x [rows, in], y [rows, out],
// all row-major. Buffers must not alias.
void linear_forward(const double* __restrict x, const double* __restrict w,
                    const double* __restrict bias, double* __restrict y,
                    std::size_t rows, std::size_t in, std::size_t out);

// Accumulates dx += dy * w^T, dw += x^T * dy, dbias += column sums of dy.
// Null gradient pointers skip that output. Buffers must not alias.
void linear_backward(const double* __restrict x, const double* __restrict w,
                     const double* __restrict dy, double* __restrict dx,
                     double* __restrict dw, double* __restrict dbias,
                     std::size_t rows, std::size_t in, std::size_t out);

}  // namespace voxbuild

#endif  // VOXBUILD_TENSOR_HPP_
