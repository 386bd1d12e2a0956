#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "amc/error.hpp"

namespace amc::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Dense row-major double tensor of rank <= 4.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(shape_size(shape), fill) {
    if (shape.size() > 4) throw ConfigError("tensor rank above 4");
  }
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape.size() > 4) throw ConfigError("tensor rank above 4");
    if (data.size() != shape_size(shape)) throw ConfigError("tensor data does not match shape " + shape_str(shape));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::span<double> span() { return data; }
  std::span<const double> span() const { return data; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  Tensor reshaped(Shape s) const {
    if (shape_size(s) != size()) throw ConfigError("cannot reshape " + shape_str(shape) + " to " + shape_str(s));
    return Tensor(std::move(s), data);
  }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }
};

inline void require_shape(const Tensor& t, const Shape& s, const char* what) {
  if (t.shape != s)
    throw ConfigError(std::string(what) + ": expected shape " + shape_str(s) + ", got " + shape_str(t.shape));
}

inline void require_rank(const Tensor& t, std::size_t r, const char* what) {
  if (t.rank() != r)
    throw ConfigError(std::string(what) + ": expected rank " + std::to_string(r) + ", got " + shape_str(t.shape));
}

/// Trainable tensor plus its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Shape s) : name(std::move(n)), value(s), grad(s) {}

  void zero_grad() { grad.fill(0.0); }
};

using ParamList = std::vector<Parameter*>;

#ifndef NDEBUG
inline void debug_check_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite values in ") + where);
}
#else
inline void debug_check_finite(const Tensor&, const char*) {}
#endif

}  // namespace amc::ad
