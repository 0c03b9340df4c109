#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "normgen/nn/tensor.hpp"
#include "normgen/rng.hpp"

namespace normgen::nn {

/// Learnable tensor with its gradient accumulator.
template <class Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

/// Named non-learnable state (batch-norm running statistics).
template <class Scalar>
struct NamedTensor {
  std::string name;
  Matrix<Scalar>* tensor;
};

template <class Scalar>
Matrix<Scalar> gaussian(Eigen::Index rows, Eigen::Index cols, double mean, double stddev, Rng& rng) {
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<Scalar>(mean + stddev * rng.normal());
  }
  return m;
}

// All convolutions in the U-Net are 4x4, stride 2, padding 1.
inline constexpr int kKernel = 4;
inline constexpr int kTaps = kKernel * kKernel;

/// Gathers the 4x4/stride-2 receptive field of every output pixel of a map
/// with `in` extent into a (16 * channels) x out_pixels matrix; rows are
/// ordered (tap, channel). Out-of-image taps are zero.
template <class Scalar>
Matrix<Scalar> im2col(const Matrix<Scalar>& x, const Extent& in) {
  const int c = static_cast<int>(x.rows());
  const Extent out = in.halved();
  Matrix<Scalar> cols = Matrix<Scalar>::Zero(kTaps * c, out.pixels());
  for (int n = 0; n < out.batch; ++n)
    for (int oy = 0; oy < out.height; ++oy)
      for (int ox = 0; ox < out.width; ++ox) {
        const int col = out.column(n, oy, ox);
        for (int ky = 0; ky < kKernel; ++ky) {
          const int iy = 2 * oy - 1 + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < kKernel; ++kx) {
            const int ix = 2 * ox - 1 + kx;
            if (ix < 0 || ix >= in.width) continue;
            cols.col(col).segment((ky * kKernel + kx) * c, c) = x.col(in.column(n, iy, ix));
          }
        }
      }
  return cols;
}

/// Adjoint of im2col: scatter-adds columns back onto a map with `in` extent.
template <class Scalar>
Matrix<Scalar> col2im(const Matrix<Scalar>& cols, const Extent& in) {
  const int c = static_cast<int>(cols.rows()) / kTaps;
  const Extent out = in.halved();
  Matrix<Scalar> x = Matrix<Scalar>::Zero(c, in.pixels());
  for (int n = 0; n < out.batch; ++n)
    for (int oy = 0; oy < out.height; ++oy)
      for (int ox = 0; ox < out.width; ++ox) {
        const int col = out.column(n, oy, ox);
        for (int ky = 0; ky < kKernel; ++ky) {
          const int iy = 2 * oy - 1 + ky;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < kKernel; ++kx) {
            const int ix = 2 * ox - 1 + kx;
            if (ix < 0 || ix >= in.width) continue;
            x.col(in.column(n, iy, ix)) += cols.col(col).segment((ky * kKernel + kx) * c, c);
          }
        }
      }
  return x;
}

/// Strided 4x4 convolution, halves the spatial extent.
template <class Scalar>
class Conv2d {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, bool bias, Rng& rng)
      : weight_(name + ".weight", gaussian<Scalar>(out_channels, kTaps * in_channels, 0.0, 0.02, rng)),
        has_bias_(bias) {
    if (bias) bias_ = Parameter<Scalar>(name + ".bias", Matrix<Scalar>::Zero(out_channels, 1));
  }

  int in_channels() const { return static_cast<int>(weight_.value.cols()) / kTaps; }
  int out_channels() const { return static_cast<int>(weight_.value.rows()); }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) {
    if (x.channels() != in_channels()) {
      throw Error(ErrorKind::ShapeMismatch, weight_.name + ": expected " +
                                                std::to_string(in_channels()) + " input channels, got " +
                                                std::to_string(x.channels()));
    }
    in_extent_ = x.extent;
    cols_ = im2col(x.values, x.extent);
    FeatureMap<Scalar> y;
    y.extent = x.extent.halved();
    y.values.noalias() = weight_.value * cols_;
    if (has_bias_) y.values.colwise() += bias_.value.col(0);
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) {
    weight_.grad.noalias() += dy.values * cols_.transpose();
    if (has_bias_) bias_.grad += dy.values.rowwise().sum();
    Matrix<Scalar> dcols = weight_.value.transpose() * dy.values;
    return {col2im(dcols, in_extent_), in_extent_};
  }

  void collect(std::vector<Parameter<Scalar>*>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

 private:
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  bool has_bias_;
  Extent in_extent_;
  Matrix<Scalar> cols_;
};

/// Strided 4x4 transposed convolution (adjoint of Conv2d), doubles the extent.
/// The weight is stored as in_channels x (16 * out_channels).
template <class Scalar>
class ConvTranspose2d {
 public:
  ConvTranspose2d(std::string name, int in_channels, int out_channels, bool bias, Rng& rng)
      : weight_(name + ".weight", gaussian<Scalar>(in_channels, kTaps * out_channels, 0.0, 0.02, rng)),
        has_bias_(bias) {
    if (bias) bias_ = Parameter<Scalar>(name + ".bias", Matrix<Scalar>::Zero(out_channels, 1));
  }

  int in_channels() const { return static_cast<int>(weight_.value.rows()); }
  int out_channels() const { return static_cast<int>(weight_.value.cols()) / kTaps; }

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x) {
    if (x.channels() != in_channels()) {
      throw Error(ErrorKind::ShapeMismatch, weight_.name + ": expected " +
                                                std::to_string(in_channels()) + " input channels, got " +
                                                std::to_string(x.channels()));
    }
    input_ = x;
    const Extent out = x.extent.doubled();
    Matrix<Scalar> cols = weight_.value.transpose() * x.values;
    FeatureMap<Scalar> y{col2im(cols, out), out};
    if (has_bias_) y.values.colwise() += bias_.value.col(0);
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) {
    const Matrix<Scalar> dcols = im2col(dy.values, dy.extent);
    weight_.grad.noalias() += input_.values * dcols.transpose();
    if (has_bias_) bias_.grad += dy.values.rowwise().sum();
    FeatureMap<Scalar> dx;
    dx.extent = input_.extent;
    dx.values.noalias() = weight_.value * dcols;
    return dx;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

 private:
  Parameter<Scalar> weight_;
  Parameter<Scalar> bias_;
  bool has_bias_;
  FeatureMap<Scalar> input_;
};

/// Per-channel batch normalization over batch and spatial positions.
template <class Scalar>
class BatchNorm {
 public:
  static constexpr double kMomentum = 0.1;
  static constexpr double kEpsilon = 1e-5;

  BatchNorm(std::string name, int channels, Rng& rng)
      : name_(name),
        gamma_(name + ".gamma", gaussian<Scalar>(channels, 1, 1.0, 0.02, rng)),
        beta_(name + ".beta", Matrix<Scalar>::Zero(channels, 1)),
        running_mean_(Matrix<Scalar>::Zero(channels, 1)),
        running_var_(Matrix<Scalar>::Ones(channels, 1)) {}

  FeatureMap<Scalar> forward(const FeatureMap<Scalar>& x, bool training) {
    training_ = training;
    const Eigen::Index count = x.values.cols();
    if (training) {
      const Matrix<Scalar> mean = x.values.rowwise().mean();
      xhat_ = x.values.colwise() - mean.col(0);
      const Matrix<Scalar> var = xhat_.array().square().rowwise().mean();
      inv_std_ = (var.array() + Scalar(kEpsilon)).rsqrt();
      xhat_.array().colwise() *= inv_std_.col(0).array();
      const Scalar m = Scalar(kMomentum);
      const Scalar unbias = count > 1 ? Scalar(count) / Scalar(count - 1) : Scalar(1);
      running_mean_ = (Scalar(1) - m) * running_mean_ + m * mean;
      running_var_ = (Scalar(1) - m) * running_var_ + (m * unbias) * var;
    } else {
      inv_std_ = (running_var_.array() + Scalar(kEpsilon)).rsqrt();
      xhat_ = x.values.colwise() - running_mean_.col(0);
      xhat_.array().colwise() *= inv_std_.col(0).array();
    }
    FeatureMap<Scalar> y{xhat_, x.extent};
    y.values.array().colwise() *= gamma_.value.col(0).array();
    y.values.colwise() += beta_.value.col(0);
    return y;
  }

  FeatureMap<Scalar> backward(const FeatureMap<Scalar>& dy) {
    gamma_.grad += (dy.values.array() * xhat_.array()).rowwise().sum().matrix();
    beta_.grad += dy.values.rowwise().sum();
    FeatureMap<Scalar> dx{dy.values, dy.extent};
    const Eigen::Array<Scalar, Eigen::Dynamic, 1> scale = gamma_.value.col(0).array() * inv_std_.col(0).array();
    if (training_) {
      const Scalar n = Scalar(dy.values.cols());
      const Eigen::Array<Scalar, Eigen::Dynamic, 1> sum_dy = dy.values.rowwise().sum().array();
      const Eigen::Array<Scalar, Eigen::Dynamic, 1> sum_dy_xhat =
          (dy.values.array() * xhat_.array()).rowwise().sum();
      dx.values.array().colwise() -= sum_dy / n;
      dx.values.array() -= xhat_.array().colwise() * (sum_dy_xhat / n);
    }
    dx.values.array().colwise() *= scale;
    return dx;
  }

  void collect(std::vector<Parameter<Scalar>*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }
  void collect_buffers(std::vector<NamedTensor<Scalar>>& out) {
    out.push_back({name_ + ".running_mean", &running_mean_});
    out.push_back({name_ + ".running_var", &running_var_});
  }

 private:
  std::string name_;
  Parameter<Scalar> gamma_;
  Parameter<Scalar> beta_;
  Matrix<Scalar> running_mean_;
  Matrix<Scalar> running_var_;
  Matrix<Scalar> xhat_;
  Matrix<Scalar> inv_std_;
  bool training_ = true;
};

template <class Scalar>
Matrix<Scalar> leaky_relu(const Matrix<Scalar>& x, Scalar slope) {
  return (x.array() > Scalar(0)).select(x, slope * x);
}

template <class Scalar>
Matrix<Scalar> leaky_relu_backward(const Matrix<Scalar>& dy, const Matrix<Scalar>& x, Scalar slope) {
  return (x.array() > Scalar(0)).select(dy, slope * dy);
}

}  // namespace normgen::nn
