#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace reenact::nn {

struct Shape {
  int n = 0, c = 0, h = 0, w = 0;

  Eigen::Index size() const { return Eigen::Index(n) * c * h * w; }
  Eigen::Index plane() const { return Eigen::Index(h) * w; }
  Eigen::Index sample() const { return Eigen::Index(c) * h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense NCHW tensor.
template <typename Scalar>
struct Tensor {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using PlaneMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
  using ConstPlaneMap =
      Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

  Shape shape;
  Array data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(Array::Zero(s.size())) {}
  Tensor(Shape s, Scalar fill) : shape(s), data(Array::Constant(s.size(), fill)) {}
  Tensor(Shape s, Array d) : shape(s), data(std::move(d)) {
    if (data.size() != s.size()) throw std::invalid_argument("tensor data does not match shape " + s.str());
  }

  bool empty() const { return data.size() == 0; }
  Scalar* ptr(int n, int c = 0) { return data.data() + n * shape.sample() + c * shape.plane(); }
  const Scalar* ptr(int n, int c = 0) const { return data.data() + n * shape.sample() + c * shape.plane(); }
  Scalar& at(int n, int c, int y, int x) { return ptr(n, c)[Eigen::Index(y) * shape.w + x]; }
  Scalar at(int n, int c, int y, int x) const { return ptr(n, c)[Eigen::Index(y) * shape.w + x]; }
  PlaneMap plane(int n, int c) { return PlaneMap(ptr(n, c), shape.h, shape.w); }
  ConstPlaneMap plane(int n, int c) const { return ConstPlaneMap(ptr(n, c), shape.h, shape.w); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape, data.template cast<Other>());
  }
};

}  // namespace reenact::nn
