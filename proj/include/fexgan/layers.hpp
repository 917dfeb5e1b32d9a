// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "fexgan/rng.hpp"
#include "fexgan/tensor.hpp"

namespace fexgan {

enum class Mode { train, eval };

/// A trainable tensor and its accumulated gradient.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, Shape shape) : name(std::move(n)), value(shape), grad(shape) {}

  void zero_grad() { grad.fill(T{}); }
};

/// Named view of a persistent tensor (parameter value or running buffer).
template <typename T>
struct StateEntry {
  std::string name;
  Tensor<T>* tensor;
};

/// What a backward call should produce.
struct GradRequest {
  bool params = true;  // accumulate into Param::grad
  bool input = true;   // return d(loss)/d(input)
};

template <typename T>
void init_normal(Tensor<T>& t, Rng& rng, double stddev) {
  for (auto& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
}

// ---------------------------------------------------------------------------
// Patch extraction shared by strided and transposed convolutions.

struct ConvGeometry {
  std::size_t kernel = 4;
  std::size_t stride = 2;
  std::size_t padding = 1;

  std::size_t output_extent(std::size_t in) const {
    return (in + 2 * padding - kernel) / stride + 1;
  }
  /// Input extent that a transposed convolution produces from `in`.
  std::size_t transposed_extent(std::size_t in) const {
    return (in - 1) * stride + kernel - 2 * padding;
  }
};

/// Gathers kernel-sized patches of an N x H x W x C image batch into rows of
/// `cols` (N*oh*ow rows, kernel*kernel*C columns). Out-of-range taps are 0.
template <typename T>
void im2col(const T* x, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
            const ConvGeometry& g, std::size_t oh, std::size_t ow, T* cols) {
  const std::size_t k = g.kernel;
  const std::size_t row_len = k * k * c;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        T* row = cols + ((b * oh + y) * ow + xo) * row_len;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(y * g.stride + ky) - static_cast<long>(g.padding);
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(xo * g.stride + kx) - static_cast<long>(g.padding);
            T* dst = row + (ky * k + kx) * c;
            if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) {
              std::fill(dst, dst + c, T{});
            } else {
              const T* src = x + ((b * h + static_cast<std::size_t>(iy)) * w +
                                  static_cast<std::size_t>(ix)) * c;
              std::copy(src, src + c, dst);
            }
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatters and sums patch rows back into `x` (zeroed
/// by the caller).
template <typename T>
void col2im(const T* cols, std::size_t n, std::size_t h, std::size_t w, std::size_t c,
            const ConvGeometry& g, std::size_t oh, std::size_t ow, T* x) {
  const std::size_t k = g.kernel;
  const std::size_t row_len = k * k * c;
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xo = 0; xo < ow; ++xo) {
        const T* row = cols + ((b * oh + y) * ow + xo) * row_len;
        for (std::size_t ky = 0; ky < k; ++ky) {
          const long iy = static_cast<long>(y * g.stride + ky) - static_cast<long>(g.padding);
          if (iy < 0 || iy >= static_cast<long>(h)) continue;
          for (std::size_t kx = 0; kx < k; ++kx) {
            const long ix = static_cast<long>(xo * g.stride + kx) - static_cast<long>(g.padding);
            if (ix < 0 || ix >= static_cast<long>(w)) continue;
            const T* src = row + (ky * k + kx) * c;
            T* dst = x + ((b * h + static_cast<std::size_t>(iy)) * w +
                          static_cast<std::size_t>(ix)) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch];
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------

/// Strided 2D convolution on channel-last batches. Weight layout is
/// (kernel, kernel, in_channels) x out_channels.
template <typename T>
class Conv2d {
 public:
  struct Cache {
    RowMatrix<T> cols;
    Shape input_shape;
  };

  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in_channels, std::size_t out_channels, bool bias,
         ConvGeometry geometry = {})
      : in_(in_channels),
        out_(out_channels),
        geometry_(geometry),
        weight_(name + ".weight", {geometry.kernel * geometry.kernel * in_channels, out_channels}),
        has_bias_(bias) {
    if (bias) bias_ = Param<T>(name + ".bias", {out_channels});
  }

  void init(Rng& rng, double stddev) {
    init_normal(weight_.value, rng, stddev);
    if (has_bias_) bias_.value.fill(T{});
  }

  Tensor<T> forward(const Tensor<T>& x, Cache& cache) const {
    if (x.rank() != 4 || x.dim(3) != in_)
      throw ShapeError("Conv2d " + weight_.name + ": bad input " + shape_string(x.shape()));
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = geometry_.output_extent(h), ow = geometry_.output_extent(w);
    const std::size_t kk = geometry_.kernel * geometry_.kernel * in_;
    cache.input_shape = x.shape();
    cache.cols.resize(static_cast<Eigen::Index>(n * oh * ow), static_cast<Eigen::Index>(kk));
    im2col(x.data(), n, h, w, in_, geometry_, oh, ow, cache.cols.data());

    Tensor<T> y({n, oh, ow, out_});
    auto ym = as_matrix(y, out_);
    ym.noalias() = cache.cols * as_matrix(weight_.value, out_);
    if (has_bias_) ym.rowwise() += as_matrix(bias_.value, out_).row(0);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Cache& cache, GradRequest req) {
    const auto dym = as_matrix(dy, out_);
    if (req.params) {
      as_matrix(weight_.grad, out_).noalias() += cache.cols.transpose() * dym;
      if (has_bias_) as_matrix(bias_.grad, out_).row(0) += dym.colwise().sum();
    }
    if (!req.input) return {};
    RowMatrix<T> dcols = dym * as_matrix(weight_.value, out_).transpose();
    const auto& s = cache.input_shape;
    Tensor<T> dx(s);
    col2im(dcols.data(), s[0], s[1], s[2], s[3], geometry_, dy.dim(1), dy.dim(2), dx.data());
    return dx;
  }

  void parameters(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }
  void state(std::vector<StateEntry<T>>& out) {
    out.push_back({weight_.name, &weight_.value});
    if (has_bias_) out.push_back({bias_.name, &bias_.value});
  }

  std::size_t out_channels() const { return out_; }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  ConvGeometry geometry_;
  Param<T> weight_;
  Param<T> bias_;
  bool has_bias_ = false;
};

/// Transposed strided convolution (the adjoint of Conv2d's data path).
/// Weight layout is in_channels x (kernel, kernel, out_channels).
template <typename T>
class ConvTranspose2d {
 public:
  struct Cache {
    Tensor<T> input;
  };

  ConvTranspose2d() = default;
  ConvTranspose2d(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                  bool bias, ConvGeometry geometry = {})
      : in_(in_channels),
        out_(out_channels),
        geometry_(geometry),
        weight_(name + ".weight", {in_channels, geometry.kernel * geometry.kernel * out_channels}),
        has_bias_(bias) {
    if (bias) bias_ = Param<T>(name + ".bias", {out_channels});
  }

  void init(Rng& rng, double stddev) {
    init_normal(weight_.value, rng, stddev);
    if (has_bias_) bias_.value.fill(T{});
  }

  Tensor<T> forward(const Tensor<T>& x, Cache& cache) const {
    if (x.rank() != 4 || x.dim(3) != in_)
      throw ShapeError("ConvTranspose2d " + weight_.name + ": bad input " +
                       shape_string(x.shape()));
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t oh = geometry_.transposed_extent(h), ow = geometry_.transposed_extent(w);
    const std::size_t kk = geometry_.kernel * geometry_.kernel * out_;
    cache.input = x;
    RowMatrix<T> cols = as_matrix(x, in_) * as_matrix(weight_.value, kk);
    Tensor<T> y({n, oh, ow, out_});
    col2im(cols.data(), n, oh, ow, out_, geometry_, h, w, y.data());
    if (has_bias_) as_matrix(y, out_).rowwise() += as_matrix(bias_.value, out_).row(0);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Cache& cache, GradRequest req) {
    const auto& x = cache.input;
    const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2);
    const std::size_t kk = geometry_.kernel * geometry_.kernel * out_;
    RowMatrix<T> dcols(static_cast<Eigen::Index>(n * h * w), static_cast<Eigen::Index>(kk));
    im2col(dy.data(), n, dy.dim(1), dy.dim(2), out_, geometry_, h, w, dcols.data());
    if (req.params) {
      as_matrix(weight_.grad, kk).noalias() += as_matrix(x, in_).transpose() * dcols;
      if (has_bias_) as_matrix(bias_.grad, out_).row(0) += as_matrix(dy, out_).colwise().sum();
    }
    if (!req.input) return {};
    Tensor<T> dx(x.shape());
    as_matrix(dx, in_).noalias() = dcols * as_matrix(weight_.value, kk).transpose();
    return dx;
  }

  void parameters(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }
  void state(std::vector<StateEntry<T>>& out) {
    out.push_back({weight_.name, &weight_.value});
    if (has_bias_) out.push_back({bias_.name, &bias_.value});
  }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  ConvGeometry geometry_;
  Param<T> weight_;
  Param<T> bias_;
  bool has_bias_ = false;
};

/// Batch normalization over every axis but the last (channel) axis.
template <typename T>
class BatchNorm {
 public:
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.1;

  struct Cache {
    Tensor<T> normalized;
    std::vector<T> inv_std;
    Mode mode = Mode::train;
  };

  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels)
      : channels_(channels),
        gamma_(name + ".gamma", {channels}),
        beta_(name + ".beta", {channels}),
        mean_name_(name + ".running_mean"),
        var_name_(name + ".running_var"),
        running_mean_({channels}, T{0}),
        running_var_({channels}, T{1}) {
    gamma_.value.fill(T{1});
  }

  /// Train mode normalizes with batch statistics and, when
  /// `update_running` is set, folds them into the running estimates.
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Cache& cache, bool update_running = true) {
    if (x.empty() || x.shape().back() != channels_)
      throw ShapeError("BatchNorm " + gamma_.name + ": bad input " + shape_string(x.shape()));
    const std::size_t c = channels_;
    const std::size_t m = x.size() / c;
    const T* xs = x.data();
    cache.mode = mode;
    cache.inv_std.assign(c, T{});
    std::vector<double> mean(c, 0.0), var(c, 0.0);

    if (mode == Mode::train) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) mean[ch] += xs[r * c + ch];
      for (auto& v : mean) v /= static_cast<double>(m);
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double d = xs[r * c + ch] - mean[ch];
          var[ch] += d * d;
        }
      for (auto& v : var) v /= static_cast<double>(m);
      if (update_running) {
        const double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
        for (std::size_t ch = 0; ch < c; ++ch) {
          running_mean_[ch] =
              static_cast<T>((1.0 - kMomentum) * running_mean_[ch] + kMomentum * mean[ch]);
          running_var_[ch] =
              static_cast<T>((1.0 - kMomentum) * running_var_[ch] + kMomentum * var[ch] * unbias);
        }
      }
    } else {
      for (std::size_t ch = 0; ch < c; ++ch) {
        mean[ch] = running_mean_[ch];
        var[ch] = running_var_[ch];
      }
    }

    for (std::size_t ch = 0; ch < c; ++ch)
      cache.inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + kEpsilon));
    cache.normalized = Tensor<T>(x.shape());
    Tensor<T> y(x.shape());
    T* xn = cache.normalized.data();
    T* ys = y.data();
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = r * c + ch;
        xn[i] = static_cast<T>((xs[i] - mean[ch]) * cache.inv_std[ch]);
        ys[i] = gamma_.value[ch] * xn[i] + beta_.value[ch];
      }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Cache& cache, GradRequest req) {
    const std::size_t c = channels_;
    const std::size_t m = dy.size() / c;
    const T* g = dy.data();
    const T* xn = cache.normalized.data();
    std::vector<double> sum_dy(c, 0.0), sum_dy_xn(c, 0.0);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) {
        sum_dy[ch] += g[r * c + ch];
        sum_dy_xn[ch] += g[r * c + ch] * xn[r * c + ch];
      }
    if (req.params) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        beta_.grad[ch] += static_cast<T>(sum_dy[ch]);
        gamma_.grad[ch] += static_cast<T>(sum_dy_xn[ch]);
      }
    }
    if (!req.input) return {};
    Tensor<T> dx(dy.shape());
    T* out = dx.data();
    if (cache.mode == Mode::eval) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t ch = 0; ch < c; ++ch)
          out[r * c + ch] = g[r * c + ch] * gamma_.value[ch] * cache.inv_std[ch];
      return dx;
    }
    // d/dx of gamma * (x - mean) * inv_std with batch statistics.
    const double inv_m = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t i = r * c + ch;
        const double scale = gamma_.value[ch] * cache.inv_std[ch];
        out[i] = static_cast<T>(scale * (g[i] - inv_m * sum_dy[ch] - inv_m * xn[i] * sum_dy_xn[ch]));
      }
    return dx;
  }

  void parameters(std::vector<Param<T>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void state(std::vector<StateEntry<T>>& out) {
    out.push_back({gamma_.name, &gamma_.value});
    out.push_back({beta_.name, &beta_.value});
    out.push_back({mean_name_, &running_mean_});
    out.push_back({var_name_, &running_var_});
  }

 private:
  std::size_t channels_ = 0;
  Param<T> gamma_;
  Param<T> beta_;
  std::string mean_name_;
  std::string var_name_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
};

/// Fully connected layer on N x in batches.
template <typename T>
class Dense {
 public:
  struct Cache {
    Tensor<T> input;
  };

  Dense() = default;
  Dense(const std::string& name, std::size_t in, std::size_t out)
      : in_(in), out_(out), weight_(name + ".weight", {in, out}), bias_(name + ".bias", {out}) {}

  void init(Rng& rng, double stddev) {
    init_normal(weight_.value, rng, stddev);
    bias_.value.fill(T{});
  }

  Tensor<T> forward(const Tensor<T>& x, Cache& cache) const {
    if (x.rank() != 2 || x.dim(1) != in_)
      throw ShapeError("Dense " + weight_.name + ": bad input " + shape_string(x.shape()));
    cache.input = x;
    Tensor<T> y({x.dim(0), out_});
    auto ym = as_matrix(y, out_);
    ym.noalias() = as_matrix(x, in_) * as_matrix(weight_.value, out_);
    ym.rowwise() += as_matrix(bias_.value, out_).row(0);
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy, const Cache& cache, GradRequest req) {
    const auto dym = as_matrix(dy, out_);
    if (req.params) {
      as_matrix(weight_.grad, out_).noalias() += as_matrix(cache.input, in_).transpose() * dym;
      as_matrix(bias_.grad, out_).row(0) += dym.colwise().sum();
    }
    if (!req.input) return {};
    Tensor<T> dx(cache.input.shape());
    as_matrix(dx, in_).noalias() = dym * as_matrix(weight_.value, out_).transpose();
    return dx;
  }

  void parameters(std::vector<Param<T>*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }
  void state(std::vector<StateEntry<T>>& out) {
    out.push_back({weight_.name, &weight_.value});
    out.push_back({bias_.name, &bias_.value});
  }

 private:
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  Param<T> weight_;
  Param<T> bias_;
};

// ---------------------------------------------------------------------------
// Pointwise activations. Backward passes take the forward output.

template <typename T>
Tensor<T> relu(Tensor<T> x) {
  for (auto& v : x.values()) v = v > T{} ? v : T{};
  return x;
}
template <typename T>
Tensor<T> relu_backward(Tensor<T> dy, const Tensor<T>& y) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(y[i] > T{})) dy[i] = T{};
  return dy;
}

template <typename T>
Tensor<T> leaky_relu(Tensor<T> x, double slope) {
  for (auto& v : x.values()) v = v > T{} ? v : static_cast<T>(slope * v);
  return x;
}
template <typename T>
Tensor<T> leaky_relu_backward(Tensor<T> dy, const Tensor<T>& y, double slope) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(y[i] > T{})) dy[i] = static_cast<T>(slope * dy[i]);
  return dy;
}

template <typename T>
Tensor<T> tanh_activation(Tensor<T> x) {
  for (auto& v : x.values()) v = std::tanh(v);
  return x;
}
template <typename T>
Tensor<T> tanh_backward(Tensor<T> dy, const Tensor<T>& y) {
  for (std::size_t i = 0; i < dy.size(); ++i) dy[i] *= T{1} - y[i] * y[i];
  return dy;
}

template <typename T>
T sigmoid(T z) {
  if (z >= T{}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

/// Row-wise softmax of an N x K matrix.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  Tensor<T> out(logits.shape());
  const std::size_t k = logits.dim(1);
  for (std::size_t r = 0; r < logits.dim(0); ++r) {
    const T* z = logits.data() + r * k;
    T* p = out.data() + r * k;
    const T zmax = *std::max_element(z, z + k);
    T total{};
    for (std::size_t i = 0; i < k; ++i) total += (p[i] = std::exp(z[i] - zmax));
    for (std::size_t i = 0; i < k; ++i) p[i] /= total;
  }
  return out;
}

/// Concatenates two N x a and N x b matrices into N x (a + b).
template <typename T>
Tensor<T> concat_columns(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dim(0) != b.dim(0)) throw ShapeError("concat_columns: row mismatch");
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  Tensor<T> out({n, ca + cb});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.data() + r * ca, ca, out.data() + r * (ca + cb));
    std::copy_n(b.data() + r * cb, cb, out.data() + r * (ca + cb) + ca);
  }
  return out;
}

/// Splits an N x (a + b) matrix into its leading a and trailing b columns.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_columns(const Tensor<T>& x, std::size_t a) {
  const std::size_t n = x.dim(0), total = x.dim(1), b = total - a;
  Tensor<T> left({n, a}), right({n, b});
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(x.data() + r * total, a, left.data() + r * a);
    std::copy_n(x.data() + r * total + a, b, right.data() + r * b);
  }
  return {std::move(left), std::move(right)};
}

}  // namespace fexgan
