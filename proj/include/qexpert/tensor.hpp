#pragma once

// Dense row-major tensors and the handful of differentiable ops the
// question/answer towers are built from. Every op has an explicit backward
// that accumulates into caller-provided gradient buffers.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace qexpert {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    for (auto e : shape_)
      if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(shape_));
    data_.assign(shape_volume(shape_), fill);
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_volume(shape_))
      throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                       shape_str(shape_));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Element (r, c) of a rank-2 tensor.
  T& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  /// Row r of a rank-2 tensor.
  std::span<T> row(std::size_t r) { return std::span<T>(data_).subspan(r * shape_[1], shape_[1]); }
  std::span<const T> row(std::size_t r) const {
    return std::span<const T>(data_).subspan(r * shape_[1], shape_[1]);
  }

  bool has_grad() const noexcept { return !grad_.empty(); }
  void enable_grad() {
    if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
  }
  void drop_grad() { grad_.clear(); }
  void zero_grad() { std::fill(grad_.begin(), grad_.end(), T(0)); }
  std::span<T> grad() noexcept { return grad_; }
  std::span<const T> grad() const noexcept { return grad_; }

 private:
  Shape shape_;
  std::vector<T> data_;
  std::vector<T> grad_;
};

/// Region sizes and widths of one convolutional text tower.
struct ConvSpec {
  std::vector<std::size_t> region_sizes{2, 3, 4, 5};
  std::size_t filters_per_size = 100;
  std::size_t input_length = 50;
  std::size_t embed_dim = 100;

  void validate() const {
    if (region_sizes.empty()) throw std::invalid_argument("conv spec needs at least one region size");
    if (filters_per_size < 1) throw std::invalid_argument("filters_per_size must be >= 1");
    if (embed_dim < 1) throw std::invalid_argument("embed_dim must be >= 1");
    for (auto m : region_sizes)
      if (m < 1 || m > input_length)
        throw std::invalid_argument("region size " + std::to_string(m) +
                                    " outside [1, input_length=" + std::to_string(input_length) + "]");
  }
  std::size_t total_filters() const { return region_sizes.size() * filters_per_size; }
  /// Feature-map height for region size m ("valid" convolution, stride 1).
  std::size_t output_height(std::size_t m) const { return input_length - m + 1; }
};

namespace nn {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Valid stride-1 convolution over token rows.
/// input: n x k, filters: F x m x k, bias: F  ->  output: (n-m+1) x F.
template <typename T>
Tensor<T> conv_text(const Tensor<T>& input, const Tensor<T>& filters, const Tensor<T>& bias) {
  if (input.rank() != 2 || filters.rank() != 3)
    throw ShapeError("conv_text expects a rank-2 input and rank-3 filters, got " +
                     shape_str(input.shape()) + " and " + shape_str(filters.shape()));
  const std::size_t n = input.dim(0), k = input.dim(1);
  const std::size_t num_filters = filters.dim(0), m = filters.dim(1);
  if (filters.dim(2) != k)
    throw ShapeError("conv_text: input " + shape_str(input.shape()) + " has " + std::to_string(k) +
                     " columns but filters " + shape_str(filters.shape()) + " are " +
                     std::to_string(filters.dim(2)) + " wide");
  if (m > n)
    throw ShapeError("conv_text: region size " + std::to_string(m) + " exceeds input length " +
                     std::to_string(n) + " (input " + shape_str(input.shape()) + ")");
  if (bias.size() != num_filters)
    throw ShapeError("conv_text: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(num_filters) + " filters");

  const std::size_t height = n - m + 1;
  Tensor<T> out({height, num_filters});
  // Window t is the contiguous slice input[t*k, (t+m)*k); consecutive windows overlap.
  Eigen::Map<const RowMatrix<T>, Eigen::Unaligned, Eigen::OuterStride<>> windows(
      input.ptr(), Eigen::Index(height), Eigen::Index(m * k), Eigen::OuterStride<>(Eigen::Index(k)));
  Eigen::Map<const RowMatrix<T>> filt(filters.ptr(), Eigen::Index(num_filters), Eigen::Index(m * k));
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.ptr(), Eigen::Index(num_filters));
  Eigen::Map<RowMatrix<T>> o(out.ptr(), Eigen::Index(height), Eigen::Index(num_filters));
  o.noalias() = windows * filt.transpose();
  o.rowwise() += b;
  return out;
}

/// Accumulates gradients of conv_text. Any of the gradient outputs may be null.
/// Zero entries of grad_out are skipped, which makes the pooled (sparse) case cheap.
template <typename T>
void conv_text_backward(const Tensor<T>& input, const Tensor<T>& filters, std::span<const T> grad_out,
                        std::span<T> grad_input, std::span<T> grad_filters, std::span<T> grad_bias) {
  const std::size_t n = input.dim(0), k = input.dim(1);
  const std::size_t num_filters = filters.dim(0), m = filters.dim(1);
  const std::size_t height = n - m + 1, window = m * k;
  if (grad_out.size() != height * num_filters)
    throw ShapeError("conv_text_backward: grad_out length mismatch");
  for (std::size_t t = 0; t < height; ++t) {
    const T* win = input.ptr() + t * k;
    for (std::size_t f = 0; f < num_filters; ++f) {
      const T g = grad_out[t * num_filters + f];
      if (g == T(0)) continue;
      const T* filt = filters.ptr() + f * window;
      if (!grad_bias.empty()) grad_bias[f] += g;
      if (!grad_filters.empty()) {
        T* gf = grad_filters.data() + f * window;
        for (std::size_t i = 0; i < window; ++i) gf[i] += g * win[i];
      }
      if (!grad_input.empty()) {
        T* gi = grad_input.data() + t * k;
        for (std::size_t i = 0; i < window; ++i) gi[i] += g * filt[i];
      }
    }
  }
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.data()) v = v > T(0) ? v : T(0);
  return y;
}

/// dL/dx given dL/dy; the derivative at exactly zero is taken as 0.
template <typename T>
std::vector<T> relu_backward(std::span<const T> x, std::span<const T> grad_y) {
  std::vector<T> gx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > T(0) ? grad_y[i] : T(0);
  return gx;
}

template <typename T>
struct PoolResult {
  T value;
  std::size_t index;  // first position holding the maximum
};

template <typename T>
PoolResult<T> max_pool_1max(std::span<const T> feature_map) {
  if (feature_map.empty()) throw std::invalid_argument("max_pool_1max: empty feature map");
  std::size_t best = 0;
  for (std::size_t i = 1; i < feature_map.size(); ++i)
    if (feature_map[i] > feature_map[best]) best = i;
  return {feature_map[best], best};
}

/// Routes the pooled gradient to the argmax; all other positions get zero.
template <typename T>
std::vector<T> max_pool_1max_backward(std::size_t length, std::size_t argmax, T grad) {
  std::vector<T> g(length, T(0));
  g.at(argmax) = grad;
  return g;
}

/// 1-max pooling of every column of a (height x F) feature map.
template <typename T>
void max_pool_columns(const Tensor<T>& maps, std::span<T> values, std::span<std::size_t> argmax) {
  const std::size_t height = maps.dim(0), cols = maps.dim(1);
  for (std::size_t f = 0; f < cols; ++f) {
    std::size_t best = 0;
    T best_v = maps.at(0, f);
    for (std::size_t t = 1; t < height; ++t) {
      const T v = maps.at(t, f);
      if (v > best_v) {
        best_v = v;
        best = t;
      }
    }
    values[f] = best_v;
    argmax[f] = best;
  }
}

/// y = x W + b with x: in, W: in x out, b: out.
template <typename T>
std::vector<T> linear(std::span<const T> x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2 || weight.dim(0) != x.size() || bias.size() != weight.dim(1))
    throw ShapeError("linear: x of length " + std::to_string(x.size()) + ", W " +
                     shape_str(weight.shape()) + ", b " + shape_str(bias.shape()) + " do not conform");
  const auto in = Eigen::Index(weight.dim(0)), out = Eigen::Index(weight.dim(1));
  std::vector<T> y(bias.data().begin(), bias.data().end());
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> xv(x.data(), in);
  Eigen::Map<const RowMatrix<T>> w(weight.ptr(), in, out);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> yv(y.data(), out);
  yv.noalias() += xv * w;
  return y;
}

/// Accumulates dW, db and returns dx.
template <typename T>
std::vector<T> linear_backward(std::span<const T> x, const Tensor<T>& weight, std::span<const T> grad_y,
                               std::span<T> grad_weight, std::span<T> grad_bias) {
  const std::size_t in = weight.dim(0), out = weight.dim(1);
  std::vector<T> gx(in, T(0));
  for (std::size_t i = 0; i < in; ++i) {
    const T* w = weight.ptr() + i * out;
    T acc = T(0);
    for (std::size_t j = 0; j < out; ++j) acc += w[j] * grad_y[j];
    gx[i] = acc;
    if (!grad_weight.empty() && x[i] != T(0)) {
      T* gw = grad_weight.data() + i * out;
      for (std::size_t j = 0; j < out; ++j) gw[j] += x[i] * grad_y[j];
    }
  }
  if (!grad_bias.empty())
    for (std::size_t j = 0; j < out; ++j) grad_bias[j] += grad_y[j];
  return gx;
}

enum class Mode { train, eval };

/// Inverted dropout. The scale factors (0 or 1/(1-rate)) are kept for backward.
template <typename T>
struct DropoutMask {
  std::vector<T> scale;  // empty means identity
};

template <typename T, typename Rng>
std::vector<T> dropout_apply(std::span<const T> x, double rate, Mode mode, Rng& rng, DropoutMask<T>* mask) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw std::invalid_argument("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  std::vector<T> y(x.begin(), x.end());
  if (mask) mask->scale.clear();
  if (mode == Mode::eval || rate == 0.0) return y;
  const T keep_scale = T(1.0 / (1.0 - rate));
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<T> scale(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    scale[i] = keep(rng) ? keep_scale : T(0);
    y[i] *= scale[i];
  }
  if (mask) mask->scale = std::move(scale);
  return y;
}

template <typename T>
std::vector<T> dropout_backward(const DropoutMask<T>& mask, std::span<const T> grad_y) {
  std::vector<T> g(grad_y.begin(), grad_y.end());
  if (!mask.scale.empty())
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= mask.scale[i];
  return g;
}

inline constexpr double kMinNorm = 1e-12;

template <typename T>
T dot(std::span<const T> u, std::span<const T> v) {
  T acc = T(0);
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

/// u.v / (|u||v|); 0 when either norm is below 1e-12.
template <typename T>
T cosine(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size())
    throw ShapeError("cosine: length mismatch " + std::to_string(u.size()) + " vs " +
                     std::to_string(v.size()));
  const T nu = std::sqrt(dot(u, u)), nv = std::sqrt(dot(v, v));
  if (nu < T(kMinNorm) || nv < T(kMinNorm)) return T(0);
  return dot(u, v) / (nu * nv);
}

/// Accumulates g * d cos/du and g * d cos/dv. Zero-norm inputs get no gradient.
template <typename T>
void cosine_backward(std::span<const T> u, std::span<const T> v, T g, std::span<T> grad_u,
                     std::span<T> grad_v) {
  const T uu = dot(u, u), vv = dot(v, v);
  const T nu = std::sqrt(uu), nv = std::sqrt(vv);
  if (nu < T(kMinNorm) || nv < T(kMinNorm)) return;
  const T inv = T(1) / (nu * nv);
  const T c = dot(u, v) * inv;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (!grad_u.empty()) grad_u[i] += g * (v[i] * inv - c * u[i] / uu);
    if (!grad_v.empty()) grad_v[i] += g * (u[i] * inv - c * v[i] / vv);
  }
}

/// Uniform in [-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))].
template <typename T, typename Rng>
void glorot_uniform(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (auto& v : t.data()) v = T(dist(rng));
}

}  // namespace nn
}  // namespace qexpert
