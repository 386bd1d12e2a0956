#pragma once

// Layers with hand-written backward passes. Every layer caches what its
// backward pass needs during forward(); backward() must follow the matching
// forward() and accumulates (never overwrites) parameter gradients.
// Image tensors are [N, C, H, W], vectors are [N, D], sequences [N, T, D].

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "amc/autodiff/tensor.hpp"
#include "amc/rng.hpp"

namespace amc::ad {

/// Fan-in scaled uniform, U(-sqrt(6 / fan_in), sqrt(6 / fan_in)).
inline void he_uniform(Tensor& t, std::size_t fan_in, CounterRng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (auto& v : t.data) v = rng.uniform(-a, a);
}

inline void uniform_init(Tensor& t, double a, CounterRng& rng) {
  for (auto& v : t.data) v = rng.uniform(-a, a);
}

// ---------------------------------------------------------------- conv2d

class Conv2d {
public:
  Conv2d() = default;
  Conv2d(std::string name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, std::size_t stride = 1,
         std::size_t padding = 0)
      : weight(name + ".weight", {out_ch, in_ch, kernel, kernel}), bias(name + ".bias", {out_ch}), in_(in_ch),
        out_(out_ch), k_(kernel), stride_(stride), pad_(padding) {
    if (in_ch == 0 || out_ch == 0 || kernel == 0) throw ConfigError("conv2d: zero-sized layer");
    if (stride == 0) throw ConfigError("conv2d: stride must be >= 1");
  }

  void init(CounterRng& rng) {
    he_uniform(weight.value, in_ * k_ * k_, rng);
    bias.value.fill(0.0);
  }

  Shape output_shape(const Shape& in) const {
    if (in.size() != 4 || in[1] != in_) throw ConfigError("conv2d: input shape " + shape_str(in) + " mismatch");
    if (in[2] + 2 * pad_ < k_ || in[3] + 2 * pad_ < k_) throw ConfigError("conv2d: kernel larger than padded input");
    return {in[0], out_, (in[2] + 2 * pad_ - k_) / stride_ + 1, (in[3] + 2 * pad_ - k_) / stride_ + 1};
  }

  Tensor forward(const Tensor& x) {
    const Shape os = output_shape(x.shape);
    in_shape_ = x.shape;
    const std::size_t n_batch = os[0], plane = os[2] * os[3], cols = n_batch * plane;
    im2col(x, os);
    const Mat y_mat = wmat() * Eigen::Map<const Mat>(cols_.data(), rows(), static_cast<Eigen::Index>(cols));
    Tensor y(os);
    for (std::size_t n = 0; n < n_batch; ++n)
      for (std::size_t o = 0; o < out_; ++o) {
        double* yo = &y.data[(n * out_ + o) * plane];
        for (std::size_t p = 0; p < plane; ++p) yo[p] = y_mat(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(n * plane + p)) + bias.value[o];
      }
    debug_check_finite(y, "conv2d forward");
    return y;
  }

  Tensor backward(const Tensor& dy) {
    const Shape os = output_shape(in_shape_);
    require_shape(dy, os, "conv2d backward");
    const std::size_t n_batch = os[0], plane = os[2] * os[3], cols = n_batch * plane;
    Mat g(static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(cols));
    for (std::size_t n = 0; n < n_batch; ++n)
      for (std::size_t o = 0; o < out_; ++o) {
        const double* go = &dy.data[(n * out_ + o) * plane];
        for (std::size_t p = 0; p < plane; ++p) g(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(n * plane + p)) = go[p];
      }
    const Eigen::Map<const Mat> col_mat(cols_.data(), rows(), static_cast<Eigen::Index>(cols));
    Eigen::Map<Mat>(weight.grad.data.data(), static_cast<Eigen::Index>(out_), rows()).noalias() += g * col_mat.transpose();
    const Eigen::VectorXd bsum = g.rowwise().sum();
    for (std::size_t o = 0; o < out_; ++o) bias.grad[o] += bsum(static_cast<Eigen::Index>(o));
    const Mat dcols = wmat().transpose() * g;
    Tensor dx(in_shape_);
    col2im(dcols, os, dx);
    debug_check_finite(dx, "conv2d backward");
    return dx;
  }

  ParamList params() { return {&weight, &bias}; }
  std::size_t in_channels() const { return in_; }
  std::size_t out_channels() const { return out_; }

  Parameter weight;
  Parameter bias;

private:
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Eigen::Index rows() const { return static_cast<Eigen::Index>(in_ * k_ * k_); }
  Eigen::Map<const Mat> wmat() const { return {weight.value.data.data(), static_cast<Eigen::Index>(out_), rows()}; }

  // Column (n, oy, ox) of the patch matrix holds the receptive field of that
  // output pixel, row (c, ky, kx); padding reads as zero.
  template <class Fn>
  void for_each_tap(const Shape& os, Fn&& fn) const {
    const std::size_t h = in_shape_[2], w = in_shape_[3], oh = os[2], ow = os[3], plane = oh * ow;
    const std::size_t cols = os[0] * plane;
    for (std::size_t c = 0; c < in_; ++c)
      for (std::size_t ky = 0; ky < k_; ++ky)
        for (std::size_t kx = 0; kx < k_; ++kx) {
          const std::size_t r = (c * k_ + ky) * k_ + kx;
          for (std::size_t n = 0; n < os[0]; ++n)
            for (std::size_t oy = 0; oy < oh; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * stride_ + ky) - static_cast<std::ptrdiff_t>(pad_);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t ox = 0; ox < ow; ++ox) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * stride_ + kx) - static_cast<std::ptrdiff_t>(pad_);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                fn(r * cols + n * plane + oy * ow + ox,
                   ((n * in_ + c) * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix));
              }
            }
        }
  }

  void im2col(const Tensor& x, const Shape& os) {
    cols_.assign(static_cast<std::size_t>(rows()) * os[0] * os[2] * os[3], 0.0);
    for_each_tap(os, [&](std::size_t col_idx, std::size_t x_idx) { cols_[col_idx] = x.data[x_idx]; });
  }

  void col2im(const Mat& dcols, const Shape& os, Tensor& dx) const {
    const double* d = dcols.data();
    for_each_tap(os, [&](std::size_t col_idx, std::size_t x_idx) { dx.data[x_idx] += d[col_idx]; });
  }

  std::size_t in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Shape in_shape_;
  std::vector<double> cols_;
};

// ------------------------------------------------------------ batch_norm

/// Per-channel batch normalization over (N, H, W). Running statistics use
/// an exponential moving average with the unbiased batch variance.
class BatchNorm2d {
public:
  BatchNorm2d() = default;
  BatchNorm2d(std::string name, std::size_t channels, double eps = 1e-5, double momentum = 0.1)
      : gamma(name + ".gamma", {channels}), beta(name + ".beta", {channels}), running_mean({channels}, 0.0),
        running_var({channels}, 1.0), name_(std::move(name)), c_(channels), eps_(eps), momentum_(momentum) {
    if (!(eps > 0.0)) throw ConfigError("batch_norm: eps must be > 0");
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("batch_norm: momentum must lie in [0, 1]");
    gamma.value.fill(1.0);
  }

  Tensor forward(const Tensor& x, bool training) {
    require_rank(x, 4, "batch_norm");
    if (x.dim(1) != c_) throw ConfigError("batch_norm: channel mismatch");
    const std::size_t n_batch = x.dim(0), hw = x.dim(2) * x.dim(3);
    Tensor y(x.shape);
    training_ = training;
    if (training) {
      if (n_batch < 2) throw ConfigError("batch_norm: training needs a batch of at least 2");
      const double count = static_cast<double>(n_batch * hw);
      mean_.assign(c_, 0.0);
      inv_std_.assign(c_, 0.0);
      for (std::size_t c = 0; c < c_; ++c) {
        double s = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const double* p = &x.data[(n * c_ + c) * hw];
          for (std::size_t i = 0; i < hw; ++i) s += p[i];
        }
        const double mu = s / count;
        double v = 0.0;
        for (std::size_t n = 0; n < n_batch; ++n) {
          const double* p = &x.data[(n * c_ + c) * hw];
          for (std::size_t i = 0; i < hw; ++i) v += (p[i] - mu) * (p[i] - mu);
        }
        const double var = v / count;
        mean_[c] = mu;
        inv_std_[c] = 1.0 / std::sqrt(var + eps_);
        running_mean[c] = (1.0 - momentum_) * running_mean[c] + momentum_ * mu;
        running_var[c] = (1.0 - momentum_) * running_var[c] + momentum_ * var * count / (count - 1.0);
      }
    } else {
      mean_.assign(running_mean.data.begin(), running_mean.data.end());
      inv_std_.resize(c_);
      for (std::size_t c = 0; c < c_; ++c) inv_std_[c] = 1.0 / std::sqrt(running_var[c] + eps_);
    }
    xhat_ = Tensor(x.shape);
    for (std::size_t n = 0; n < n_batch; ++n) {
      for (std::size_t c = 0; c < c_; ++c) {
        const std::size_t off = (n * c_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          const double xh = (x.data[off + i] - mean_[c]) * inv_std_[c];
          xhat_.data[off + i] = xh;
          y.data[off + i] = gamma.value[c] * xh + beta.value[c];
        }
      }
    }
    debug_check_finite(y, "batch_norm forward");
    return y;
  }

  Tensor backward(const Tensor& dy) {
    require_shape(dy, xhat_.shape, "batch_norm backward");
    const std::size_t n_batch = dy.dim(0), hw = dy.dim(2) * dy.dim(3);
    const double count = static_cast<double>(n_batch * hw);
    Tensor dx(dy.shape);
    for (std::size_t c = 0; c < c_; ++c) {
      double sum_dy = 0.0, sum_dy_xh = 0.0;
      for (std::size_t n = 0; n < n_batch; ++n) {
        const std::size_t off = (n * c_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_dy += dy.data[off + i];
          sum_dy_xh += dy.data[off + i] * xhat_.data[off + i];
        }
      }
      gamma.grad[c] += sum_dy_xh;
      beta.grad[c] += sum_dy;
      const double g = gamma.value[c] * inv_std_[c];
      for (std::size_t n = 0; n < n_batch; ++n) {
        const std::size_t off = (n * c_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          if (training_)
            dx.data[off + i] = g * (dy.data[off + i] - sum_dy / count - xhat_.data[off + i] * sum_dy_xh / count);
          else
            dx.data[off + i] = g * dy.data[off + i];
        }
      }
    }
    debug_check_finite(dx, "batch_norm backward");
    return dx;
  }

  ParamList params() { return {&gamma, &beta}; }
  const std::string& name() const { return name_; }

  Parameter gamma;
  Parameter beta;
  Tensor running_mean;
  Tensor running_var;

private:
  std::string name_;
  std::size_t c_ = 0;
  double eps_ = 1e-5, momentum_ = 0.1;
  bool training_ = true;
  std::vector<double> mean_, inv_std_;
  Tensor xhat_;
};

// -------------------------------------------------------------- avg_pool

/// Average pooling. With `adaptive` set, a window or stride larger than the
/// input extent is clamped to that extent instead of being rejected.
class AvgPool2d {
public:
  AvgPool2d(std::size_t window = 2, std::size_t stride = 2, bool adaptive = true)
      : win_(window), stride_(stride), adaptive_(adaptive) {
    if (window == 0 || stride == 0) throw ConfigError("avg_pool: window and stride must be >= 1");
  }

  struct Geometry {
    std::size_t kh, kw, sh, sw, oh, ow;
  };

  Geometry geometry(const Shape& in) const {
    if (in.size() != 4) throw ConfigError("avg_pool: expected rank 4 input");
    const std::size_t h = in[2], w = in[3];
    if (!adaptive_ && (win_ > h || win_ > w)) throw ConfigError("avg_pool: window larger than input");
    Geometry g{std::min(win_, h), std::min(win_, w), std::min(stride_, h), std::min(stride_, w), 0, 0};
    g.oh = (h - g.kh) / g.sh + 1;
    g.ow = (w - g.kw) / g.sw + 1;
    return g;
  }

  Shape output_shape(const Shape& in) const {
    const auto g = geometry(in);
    return {in[0], in[1], g.oh, g.ow};
  }

  Tensor forward(const Tensor& x) {
    in_shape_ = x.shape;
    const auto g = geometry(x.shape);
    const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
    Tensor y({x.dim(0), x.dim(1), g.oh, g.ow});
    const double inv = 1.0 / static_cast<double>(g.kh * g.kw);
    for (std::size_t p = 0; p < planes; ++p) {
      const double* xp = &x.data[p * h * w];
      double* yp = &y.data[p * g.oh * g.ow];
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          double s = 0.0;
          for (std::size_t ky = 0; ky < g.kh; ++ky)
            for (std::size_t kx = 0; kx < g.kw; ++kx) s += xp[(oy * g.sh + ky) * w + ox * g.sw + kx];
          yp[oy * g.ow + ox] = s * inv;
        }
    }
    return y;
  }

  Tensor backward(const Tensor& dy) {
    const auto g = geometry(in_shape_);
    require_shape(dy, {in_shape_[0], in_shape_[1], g.oh, g.ow}, "avg_pool backward");
    Tensor dx(in_shape_);
    const std::size_t planes = in_shape_[0] * in_shape_[1], h = in_shape_[2], w = in_shape_[3];
    const double inv = 1.0 / static_cast<double>(g.kh * g.kw);
    for (std::size_t p = 0; p < planes; ++p) {
      double* dxp = &dx.data[p * h * w];
      const double* gp = &dy.data[p * g.oh * g.ow];
      for (std::size_t oy = 0; oy < g.oh; ++oy)
        for (std::size_t ox = 0; ox < g.ow; ++ox) {
          const double v = gp[oy * g.ow + ox] * inv;
          for (std::size_t ky = 0; ky < g.kh; ++ky)
            for (std::size_t kx = 0; kx < g.kw; ++kx) dxp[(oy * g.sh + ky) * w + ox * g.sw + kx] += v;
        }
    }
    return dx;
  }

private:
  std::size_t win_, stride_;
  bool adaptive_;
  Shape in_shape_;
};

// ---------------------------------------------------------------- concat

/// Stacks a and b along the channel axis of [N, C, H, W] tensors.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat");
  require_rank(b, 4, "concat");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw ConfigError("concat: extent mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const std::size_t n_batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor y({n_batch, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t n = 0; n < n_batch; ++n) {
    std::copy_n(&a.data[n * ca * hw], ca * hw, &y.data[n * (ca + cb) * hw]);
    if (cb) std::copy_n(&b.data[n * cb * hw], cb * hw, &y.data[(n * (ca + cb) + ca) * hw]);
  }
  return y;
}

/// Inverse of concat_channels for gradients: splits after `first` channels.
inline std::pair<Tensor, Tensor> split_channels(const Tensor& g, std::size_t first) {
  require_rank(g, 4, "split");
  const std::size_t n_batch = g.dim(0), c = g.dim(1), hw = g.dim(2) * g.dim(3);
  if (first > c) throw ConfigError("split: channel index out of range");
  Tensor a({n_batch, first, g.dim(2), g.dim(3)});
  Tensor b({n_batch, c - first, g.dim(2), g.dim(3)});
  for (std::size_t n = 0; n < n_batch; ++n) {
    std::copy_n(&g.data[n * c * hw], first * hw, &a.data[n * first * hw]);
    std::copy_n(&g.data[(n * c + first) * hw], (c - first) * hw, &b.data[n * (c - first) * hw]);
  }
  return {std::move(a), std::move(b)};
}

// ------------------------------------------------------------ relu/dense

class Relu {
public:
  Tensor forward(const Tensor& x) {
    Tensor y = x;
    mask_.assign(x.size(), 0);
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y.data[i] > 0.0)
        mask_[i] = 1;
      else
        y.data[i] = 0.0;
    }
    return y;
  }
  Tensor backward(const Tensor& dy) const {
    if (dy.size() != mask_.size()) throw ConfigError("relu backward: size mismatch");
    Tensor dx = dy;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (!mask_[i]) dx.data[i] = 0.0;
    return dx;
  }

private:
  std::vector<unsigned char> mask_;
};

/// y = x W^T + b with W stored [out, in].
class Dense {
public:
  Dense() = default;
  Dense(std::string name, std::size_t in, std::size_t out)
      : weight(name + ".weight", {out, in}), bias(name + ".bias", {out}), in_(in), out_(out) {
    if (in == 0 || out == 0) throw ConfigError("dense: zero-sized layer");
  }

  void init(CounterRng& rng) {
    he_uniform(weight.value, in_, rng);
    bias.value.fill(0.0);
  }

  Tensor forward(const Tensor& x) {
    require_rank(x, 2, "dense");
    if (x.dim(1) != in_) throw ConfigError("dense: expected " + std::to_string(in_) + " inputs, got " + shape_str(x.shape));
    x_ = x;
    const auto n_batch = static_cast<Eigen::Index>(x.dim(0));
    Tensor y({x.dim(0), out_});
    Eigen::Map<Mat> ym(y.data.data(), n_batch, out());
    ym.noalias() = Eigen::Map<const Mat>(x.data.data(), n_batch, in()) * wmat().transpose();
    ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias.value.data.data(), out());
    debug_check_finite(y, "dense forward");
    return y;
  }

  Tensor backward(const Tensor& dy) {
    require_shape(dy, {x_.dim(0), out_}, "dense backward");
    const auto n_batch = static_cast<Eigen::Index>(dy.dim(0));
    const Eigen::Map<const Mat> g(dy.data.data(), n_batch, out());
    Eigen::Map<Mat>(weight.grad.data.data(), out(), in()).noalias() +=
        g.transpose() * Eigen::Map<const Mat>(x_.data.data(), n_batch, in());
    Eigen::Map<Eigen::RowVectorXd>(bias.grad.data.data(), out()) += g.colwise().sum();
    Tensor dx({dy.dim(0), in_});
    Eigen::Map<Mat>(dx.data.data(), n_batch, in()).noalias() = g * wmat();
    return dx;
  }

  ParamList params() { return {&weight, &bias}; }
  std::size_t in_features() const { return in_; }
  std::size_t out_features() const { return out_; }

  Parameter weight;
  Parameter bias;

private:
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Eigen::Index in() const { return static_cast<Eigen::Index>(in_); }
  Eigen::Index out() const { return static_cast<Eigen::Index>(out_); }
  Eigen::Map<const Mat> wmat() const { return {weight.value.data.data(), out(), in()}; }

  std::size_t in_ = 0, out_ = 0;
  Tensor x_;
};

// ------------------------------------------------------------------ lstm

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

struct LstmState {
  std::vector<double> h;
  std::vector<double> c;
};

/// One LSTM step for a single example. `w` is [4H, D + H] with gate blocks
/// in the order input, forget, cell candidate, output; `b` is [4H].
inline LstmState lstm_cell(std::span<const double> x, std::span<const double> h_prev, std::span<const double> c_prev,
                           const Tensor& w, const Tensor& b) {
  const std::size_t hidden = h_prev.size(), d = x.size();
  if (c_prev.size() != hidden || w.rank() != 2 || w.dim(0) != 4 * hidden || w.dim(1) != d + hidden ||
      b.size() != 4 * hidden)
    throw ConfigError("lstm_cell: shape mismatch");
  LstmState s{std::vector<double>(hidden), std::vector<double>(hidden)};
  for (std::size_t j = 0; j < hidden; ++j) {
    double z[4];
    for (std::size_t g = 0; g < 4; ++g) {
      const double* row = &w.data[(g * hidden + j) * (d + hidden)];
      double a = b.data[g * hidden + j];
      for (std::size_t i = 0; i < d; ++i) a += row[i] * x[i];
      for (std::size_t i = 0; i < hidden; ++i) a += row[d + i] * h_prev[i];
      z[g] = a;
    }
    const double ig = sigmoid(z[0]), fg = sigmoid(z[1]), gg = std::tanh(z[2]), og = sigmoid(z[3]);
    s.c[j] = fg * c_prev[j] + ig * gg;
    s.h[j] = og * std::tanh(s.c[j]);
  }
  return s;
}

/// Single LSTM layer unrolled over a [N, T, D] sequence with zero initial
/// state; returns the hidden states [N, T, H]. backward() runs BPTT.
class LstmLayer {
public:
  LstmLayer() = default;
  LstmLayer(std::string name, std::size_t input, std::size_t hidden)
      : weight(name + ".weight", {4 * hidden, input + hidden}), bias(name + ".bias", {4 * hidden}), d_(input),
        h_(hidden) {
    if (input == 0 || hidden == 0) throw ConfigError("lstm: zero-sized layer");
  }

  void init(CounterRng& rng) {
    uniform_init(weight.value, 1.0 / std::sqrt(static_cast<double>(h_)), rng);
    bias.value.fill(0.0);
    for (std::size_t j = 0; j < h_; ++j) bias.value[h_ + j] = 1.0;  // forget gate
  }

  Tensor forward(const Tensor& x) {
    require_rank(x, 3, "lstm");
    if (x.dim(2) != d_) throw ConfigError("lstm: input width mismatch");
    const std::size_t n_batch = x.dim(0), steps = x.dim(1), zw = d_ + h_;
    n_ = n_batch;
    t_ = steps;
    // Time-major caches: concatenated input [x; h_prev], gate activations,
    // cell state and tanh(cell).
    xh_.assign(steps * n_batch * zw, 0.0);
    gates_.assign(steps * n_batch * 4 * h_, 0.0);
    cell_.assign(steps * n_batch * h_, 0.0);
    tanh_c_.assign(steps * n_batch * h_, 0.0);
    Tensor y({n_batch, steps, h_});
    const Eigen::Map<const Mat> w(weight.value.data.data(), static_cast<Eigen::Index>(4 * h_), static_cast<Eigen::Index>(zw));
    const Eigen::Map<const Eigen::RowVectorXd> b(bias.value.data.data(), static_cast<Eigen::Index>(4 * h_));
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t n = 0; n < n_batch; ++n) {
        double* z = &xh_[(t * n_batch + n) * zw];
        std::copy_n(&x.data[(n * steps + t) * d_], d_, z);
        if (t > 0) std::copy_n(&y.data[(n * steps + t - 1) * h_], h_, z + d_);
      }
      Eigen::Map<Mat> gt_mat(&gates_[t * n_batch * 4 * h_], static_cast<Eigen::Index>(n_batch), static_cast<Eigen::Index>(4 * h_));
      gt_mat.noalias() = step_input(t) * w.transpose();
      gt_mat.rowwise() += b;
      for (std::size_t n = 0; n < n_batch; ++n) {
        double* gt = &gates_[(t * n_batch + n) * 4 * h_];
        for (std::size_t j = 0; j < h_; ++j) {
          const double ig = sigmoid(gt[j]), fg = sigmoid(gt[h_ + j]), gg = std::tanh(gt[2 * h_ + j]),
                       og = sigmoid(gt[3 * h_ + j]);
          gt[j] = ig;
          gt[h_ + j] = fg;
          gt[2 * h_ + j] = gg;
          gt[3 * h_ + j] = og;
          const double c_prev = t > 0 ? cell_[((t - 1) * n_batch + n) * h_ + j] : 0.0;
          const double c = fg * c_prev + ig * gg;
          cell_[(t * n_batch + n) * h_ + j] = c;
          const double tc = std::tanh(c);
          tanh_c_[(t * n_batch + n) * h_ + j] = tc;
          y.data[(n * steps + t) * h_ + j] = og * tc;
        }
      }
    }
    debug_check_finite(y, "lstm forward");
    return y;
  }

  /// dy is the gradient w.r.t. every hidden output [N, T, H].
  Tensor backward(const Tensor& dy) {
    require_shape(dy, {n_, t_, h_}, "lstm backward");
    const std::size_t zw = d_ + h_;
    Tensor dx({n_, t_, d_});
    const auto rows = static_cast<Eigen::Index>(n_);
    Mat dh = Mat::Zero(rows, static_cast<Eigen::Index>(h_)), dc = dh;
    Mat dz(rows, static_cast<Eigen::Index>(4 * h_));
    const Eigen::Map<const Mat> w(weight.value.data.data(), static_cast<Eigen::Index>(4 * h_), static_cast<Eigen::Index>(zw));
    Eigen::Map<Mat> gw(weight.grad.data.data(), static_cast<Eigen::Index>(4 * h_), static_cast<Eigen::Index>(zw));
    for (std::size_t t = t_; t-- > 0;) {
      for (std::size_t n = 0; n < n_; ++n) {
        const auto r = static_cast<Eigen::Index>(n);
        const double* gt = &gates_[(t * n_ + n) * 4 * h_];
        for (std::size_t j = 0; j < h_; ++j) {
          const auto c = static_cast<Eigen::Index>(j);
          const double dht = dh(r, c) + dy.data[(n * t_ + t) * h_ + j];
          const double ig = gt[j], fg = gt[h_ + j], gg = gt[2 * h_ + j], og = gt[3 * h_ + j];
          const double tc = tanh_c_[(t * n_ + n) * h_ + j];
          const double c_prev = t > 0 ? cell_[((t - 1) * n_ + n) * h_ + j] : 0.0;
          const double dct = dc(r, c) + dht * og * (1.0 - tc * tc);
          dz(r, c) = dct * gg * ig * (1.0 - ig);
          dz(r, static_cast<Eigen::Index>(h_ + j)) = dct * c_prev * fg * (1.0 - fg);
          dz(r, static_cast<Eigen::Index>(2 * h_ + j)) = dct * ig * (1.0 - gg * gg);
          dz(r, static_cast<Eigen::Index>(3 * h_ + j)) = dht * tc * og * (1.0 - og);
          dc(r, c) = dct * fg;
        }
      }
      gw.noalias() += dz.transpose() * step_input(t);
      const Eigen::RowVectorXd bsum = dz.colwise().sum();
      for (std::size_t r = 0; r < 4 * h_; ++r) bias.grad[r] += bsum(static_cast<Eigen::Index>(r));
      const Mat dxh = dz * w;
      for (std::size_t n = 0; n < n_; ++n)
        std::copy_n(&dxh(static_cast<Eigen::Index>(n), 0), d_, &dx.data[(n * t_ + t) * d_]);
      dh = dxh.rightCols(static_cast<Eigen::Index>(h_));
    }
    debug_check_finite(dx, "lstm backward");
    return dx;
  }

  ParamList params() { return {&weight, &bias}; }
  std::size_t hidden() const { return h_; }

  Parameter weight;
  Parameter bias;

private:
  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  Eigen::Map<const Mat> step_input(std::size_t t) const {
    return {&xh_[t * n_ * (d_ + h_)], static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(d_ + h_)};
  }

  std::size_t d_ = 0, h_ = 0, n_ = 0, t_ = 0;
  std::vector<double> xh_, gates_, cell_, tanh_c_;
};

// ------------------------------------------------------------ softmax_ce

struct LossGrad {
  double loss = 0.0;
  Tensor grad;
};

/// Mean softmax cross-entropy over a batch of logits [N, K]; the gradient
/// is (softmax - onehot) / N.
inline LossGrad softmax_ce(const Tensor& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_ce");
  const std::size_t n_batch = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n_batch) throw ConfigError("softmax_ce: label count mismatch");
  LossGrad out{0.0, Tensor(logits.shape)};
  const double inv_n = 1.0 / static_cast<double>(n_batch);
  for (std::size_t n = 0; n < n_batch; ++n) {
    const int y = labels[n];
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw ConfigError("softmax_ce: label out of range");
    const double* z = &logits.data[n * k];
    const double zmax = *std::max_element(z, z + k);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(z[j] - zmax);
    const double lse = zmax + std::log(s);
    out.loss += (lse - z[y]) * inv_n;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(z[j] - lse);
      out.grad.data[n * k + j] = (p - (static_cast<int>(j) == y ? 1.0 : 0.0)) * inv_n;
    }
  }
  if (!std::isfinite(out.loss)) throw NumericError("softmax_ce: non-finite loss");
  return out;
}

/// Single-example form over a logit vector [K].
inline LossGrad softmax_ce(const Tensor& logits, int label) {
  const Tensor batch = logits.reshaped({1, logits.size()});
  const int labels[1] = {label};
  LossGrad r = softmax_ce(batch, labels);
  r.grad = r.grad.reshaped(logits.shape);
  return r;
}

/// Plain SGD: w <- w - lr * grad, then the gradient is zeroed.
inline void sgd_step(const ParamList& params, double lr) {
  for (Parameter* p : params) {
    if (p->value.shape != p->grad.shape) throw ConfigError("sgd: gradient shape mismatch for " + p->name);
    for (std::size_t i = 0; i < p->value.size(); ++i) p->value.data[i] -= lr * p->grad.data[i];
    p->zero_grad();
  }
}

inline void zero_grads(const ParamList& params) {
  for (Parameter* p : params) p->zero_grad();
}

inline std::size_t parameter_count(const ParamList& params) {
  std::size_t n = 0;
  for (const Parameter* p : params) n += p->value.size();
  return n;
}

}  // namespace amc::ad
