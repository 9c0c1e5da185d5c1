#pragma once

// Dense/convolutional layer arithmetic with hand-written reverse-mode
// gradients and an Adam optimizer. Tensors are single images (C x H x W);
// batching happens one level up by accumulating gradients over samples.

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sidewalk/errors.hpp"
#include "sidewalk/tensor.hpp"

namespace sidewalk::nn {

enum class LayerKind { conv, conv_transpose, linear, relu };

inline const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "Conv2d";
    case LayerKind::conv_transpose: return "ConvTranspose2d";
    case LayerKind::linear: return "Linear";
    case LayerKind::relu: return "ReLU";
  }
  return "?";
}

// floor((in + 2p - k)/s) + 1
inline std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride,
                                    std::size_t padding) {
  if (stride == 0) throw ConfigError("conv stride must be positive");
  if (in + 2 * padding < kernel) {
    throw DimensionError("conv kernel " + std::to_string(kernel) + " larger than padded input " +
                         std::to_string(in + 2 * padding));
  }
  return (in + 2 * padding - kernel) / stride + 1;
}

// (in - 1)s - 2p + k
inline std::size_t conv_transpose_output_size(std::size_t in, std::size_t kernel,
                                              std::size_t stride, std::size_t padding) {
  if (in == 0) throw DimensionError("conv-transpose input has zero extent");
  const std::size_t full = (in - 1) * stride + kernel;
  if (full <= 2 * padding) throw DimensionError("conv-transpose padding consumes the whole output");
  return full - 2 * padding;
}

// One row of an architecture table. For linear layers `in`/`out` are feature
// counts; for convolutions they are channel counts.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static LayerSpec conv(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t s,
                        std::size_t p) {
    return {LayerKind::conv, in_ch, out_ch, k, s, p};
  }
  static LayerSpec conv_transpose(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                                  std::size_t s, std::size_t p) {
    return {LayerKind::conv_transpose, in_ch, out_ch, k, s, p};
  }
  static LayerSpec linear(std::size_t in_features, std::size_t out_features) {
    return {LayerKind::linear, in_features, out_features, 0, 1, 0};
  }
  static LayerSpec relu() { return {LayerKind::relu, 0, 0, 0, 1, 0}; }

  std::size_t parameter_count() const {
    switch (kind) {
      case LayerKind::conv:
      case LayerKind::conv_transpose: return out * in * kernel * kernel + out;
      case LayerKind::linear: return out * in + out;
      case LayerKind::relu: return 0;
    }
    return 0;
  }

  Shape weight_shape() const {
    switch (kind) {
      case LayerKind::conv: return {out, in, kernel, kernel};
      case LayerKind::conv_transpose: return {in, out, kernel, kernel};
      case LayerKind::linear: return {out, in};
      case LayerKind::relu: return {};
    }
    return {};
  }

  std::size_t fan_in() const {
    switch (kind) {
      case LayerKind::conv: return in * kernel * kernel;
      case LayerKind::conv_transpose: return out * kernel * kernel;
      case LayerKind::linear: return in;
      case LayerKind::relu: return 0;
    }
    return 0;
  }

  Shape output_shape(const Shape& input) const {
    switch (kind) {
      case LayerKind::conv:
      case LayerKind::conv_transpose: {
        if (input.size() != 3) throw DimensionError("convolution expects a C x H x W input");
        if (input[0] != in) {
          throw DimensionError("channel axis: input has " + std::to_string(input[0]) +
                               " channels, layer expects " + std::to_string(in));
        }
        if (kind == LayerKind::conv) {
          return {out, conv_output_size(input[1], kernel, stride, padding),
                  conv_output_size(input[2], kernel, stride, padding)};
        }
        return {out, conv_transpose_output_size(input[1], kernel, stride, padding),
                conv_transpose_output_size(input[2], kernel, stride, padding)};
      }
      case LayerKind::linear:
        if (shape_volume(input) != in) {
          throw DimensionError("feature axis: input length " + std::to_string(shape_volume(input)) +
                               " != in_features " + std::to_string(in));
        }
        return {out};
      case LayerKind::relu: return input;
    }
    return input;
  }
};

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

struct ConvGeometry {
  std::size_t channels, height, width;  // image side
  std::size_t kernel, stride, padding;
  std::size_t out_height, out_width;    // patch-grid side
};

// Unfold image patches into a (C*k*k) x (Ho*Wo) matrix.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
  const std::size_t patches = g.out_height * g.out_width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * patches;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          T* dst = row + oy * g.out_width;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) {
            std::fill(dst, dst + g.out_width, T{0});
            continue;
          }
          const T* src = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
                          ? T{0}
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back onto a zeroed image.
template <typename T>
void col2im(const T* col, const ConvGeometry& g, T* image) {
  std::fill(image, image + g.channels * g.height * g.width, T{0});
  const std::size_t patches = g.out_height * g.out_width;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const T* row = col + ((c * g.kernel + ki) * g.kernel + kj) * patches;
        for (std::size_t oy = 0; oy < g.out_height; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.padding);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height)) continue;
          T* dst = image + (c * g.height + static_cast<std::size_t>(iy)) * g.width;
          const T* src = row + oy * g.out_width;
          for (std::size_t ox = 0; ox < g.out_width; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.padding);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.width)) {
              dst[static_cast<std::size_t>(ix)] += src[ox];
            }
          }
        }
      }
    }
  }
}

inline void check_kernel(const Shape& w, const char* op) {
  if (w.size() != 4 || w[2] != w[3]) {
    throw DimensionError(std::string(op) + ": weights must be 4-D with a square kernel, got " +
                         shape_string(w));
  }
}

inline void check_image(const Shape& x, const char* op) {
  if (x.size() != 3) {
    throw DimensionError(std::string(op) + ": input must be C x H x W, got " + shape_string(x));
  }
}

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                           std::size_t stride, std::size_t padding) {
  check_image(input.shape(), "conv2d");
  check_kernel(weights.shape(), "conv2d");
  if (input.dim(0) != weights.dim(1)) {
    throw DimensionError("conv2d: channel axis mismatch, input has " +
                         std::to_string(input.dim(0)) + " channels, weights expect " +
                         std::to_string(weights.dim(1)));
  }
  if (bias.size() != weights.dim(0)) {
    throw DimensionError("conv2d: bias length " + std::to_string(bias.size()) +
                         " != out_channels " + std::to_string(weights.dim(0)));
  }
  const std::size_t k = weights.dim(2);
  return {input.dim(0),
          input.dim(1),
          input.dim(2),
          k,
          stride,
          padding,
          conv_output_size(input.dim(1), k, stride, padding),
          conv_output_size(input.dim(2), k, stride, padding)};
}

// Geometry of the forward conv whose adjoint a transposed conv computes: the
// "image" is the transposed conv's output.
template <typename T>
ConvGeometry conv_transpose_geometry(const Tensor<T>& input, const Tensor<T>& weights,
                                     const Tensor<T>& bias, std::size_t stride,
                                     std::size_t padding) {
  check_image(input.shape(), "conv_transpose2d");
  check_kernel(weights.shape(), "conv_transpose2d");
  if (input.dim(0) != weights.dim(0)) {
    throw DimensionError("conv_transpose2d: channel axis mismatch, input has " +
                         std::to_string(input.dim(0)) + " channels, weights expect " +
                         std::to_string(weights.dim(0)));
  }
  if (bias.size() != weights.dim(1)) {
    throw DimensionError("conv_transpose2d: bias length " + std::to_string(bias.size()) +
                         " != out_channels " + std::to_string(weights.dim(1)));
  }
  const std::size_t k = weights.dim(2);
  const std::size_t h = conv_transpose_output_size(input.dim(1), k, stride, padding);
  const std::size_t w = conv_transpose_output_size(input.dim(2), k, stride, padding);
  ConvGeometry g{weights.dim(1), h, w, k, stride, padding, input.dim(1), input.dim(2)};
  if (conv_output_size(h, k, stride, padding) != input.dim(1) ||
      conv_output_size(w, k, stride, padding) != input.dim(2)) {
    throw DimensionError("conv_transpose2d: geometry is not invertible for this stride/padding");
  }
  return g;
}

}  // namespace detail

// Cross-correlation (no kernel flip) plus per-channel bias.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  using namespace detail;
  const ConvGeometry g = conv_geometry(input, weights, bias, stride, padding);
  const std::size_t out_ch = weights.dim(0);
  const std::size_t rows = g.channels * g.kernel * g.kernel;
  const std::size_t patches = g.out_height * g.out_width;
  AlignedVector<T> col(rows * patches);
  im2col(input.data(), g, col.data());
  Tensor<T> out({out_ch, g.out_height, g.out_width});
  MatrixMap<T> y(out.data(), out_ch, patches);
  y.noalias() = ConstMatrixMap<T>(weights.data(), out_ch, rows) *
                ConstMatrixMap<T>(col.data(), rows, patches);
  for (std::size_t o = 0; o < out_ch; ++o) y.row(o).array() += bias[o];
  return out;
}

// Gradients of conv2d. Accumulates into grad_weights/grad_bias and returns
// the gradient with respect to the input.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                          const Tensor<T>& grad_output, std::size_t stride, std::size_t padding,
                          Tensor<T>& grad_weights, Tensor<T>& grad_bias) {
  using namespace detail;
  Tensor<T> bias_shape({weights.dim(0)});
  const ConvGeometry g = conv_geometry(input, weights, bias_shape, stride, padding);
  const std::size_t out_ch = weights.dim(0);
  const std::size_t rows = g.channels * g.kernel * g.kernel;
  const std::size_t patches = g.out_height * g.out_width;
  if (grad_output.size() != out_ch * patches) {
    throw DimensionError("conv2d backward: upstream gradient has shape " +
                         shape_string(grad_output.shape()));
  }
  AlignedVector<T> col(rows * patches);
  im2col(input.data(), g, col.data());
  ConstMatrixMap<T> gy(grad_output.data(), out_ch, patches);
  MatrixMap<T>(grad_weights.data(), out_ch, rows).noalias() +=
      gy * ConstMatrixMap<T>(col.data(), rows, patches).transpose();
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grad_bias.data(), out_ch) +=
      gy.rowwise().sum();
  MatrixMap<T>(col.data(), rows, patches).noalias() =
      ConstMatrixMap<T>(weights.data(), out_ch, rows).transpose() * gy;
  Tensor<T> grad_input(input.shape());
  col2im(col.data(), g, grad_input.data());
  return grad_input;
}

// Transposed convolution; weights are C_in x C_out x k x k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weights,
                           const Tensor<T>& bias, std::size_t stride, std::size_t padding) {
  using namespace detail;
  const ConvGeometry g = conv_transpose_geometry(input, weights, bias, stride, padding);
  const std::size_t in_ch = input.dim(0);
  const std::size_t rows = g.channels * g.kernel * g.kernel;
  const std::size_t pixels = input.dim(1) * input.dim(2);
  AlignedVector<T> col(rows * pixels);
  MatrixMap<T>(col.data(), rows, pixels).noalias() =
      ConstMatrixMap<T>(weights.data(), in_ch, rows).transpose() *
      ConstMatrixMap<T>(input.data(), in_ch, pixels);
  Tensor<T> out({g.channels, g.height, g.width});
  col2im(col.data(), g, out.data());
  MatrixMap<T> y(out.data(), g.channels, g.height * g.width);
  for (std::size_t o = 0; o < g.channels; ++o) y.row(o).array() += bias[o];
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d_backward(const Tensor<T>& input, const Tensor<T>& weights,
                                    const Tensor<T>& grad_output, std::size_t stride,
                                    std::size_t padding, Tensor<T>& grad_weights,
                                    Tensor<T>& grad_bias) {
  using namespace detail;
  Tensor<T> bias_shape({weights.dim(1)});
  const ConvGeometry g = conv_transpose_geometry(input, weights, bias_shape, stride, padding);
  const std::size_t in_ch = input.dim(0);
  const std::size_t rows = g.channels * g.kernel * g.kernel;
  const std::size_t pixels = input.dim(1) * input.dim(2);
  if (grad_output.size() != g.channels * g.height * g.width) {
    throw DimensionError("conv_transpose2d backward: upstream gradient has shape " +
                         shape_string(grad_output.shape()));
  }
  AlignedVector<T> col(rows * pixels);
  im2col(grad_output.data(), g, col.data());
  ConstMatrixMap<T> gcol(col.data(), rows, pixels);
  ConstMatrixMap<T> x(input.data(), in_ch, pixels);
  MatrixMap<T>(grad_weights.data(), in_ch, rows).noalias() += x * gcol.transpose();
  ConstMatrixMap<T> gy(grad_output.data(), g.channels, g.height * g.width);
  Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(grad_bias.data(), g.channels) +=
      gy.rowwise().sum();
  Tensor<T> grad_input(input.shape());
  MatrixMap<T>(grad_input.data(), in_ch, pixels).noalias() =
      ConstMatrixMap<T>(weights.data(), in_ch, rows) * gcol;
  return grad_input;
}

// out = W * flatten(input) + b, with W stored out x in.
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weights, const Tensor<T>& bias) {
  using namespace detail;
  if (weights.rank() != 2) throw DimensionError("linear: weights must be 2-D");
  const std::size_t out_f = weights.dim(0), in_f = weights.dim(1);
  if (input.size() != in_f) {
    throw DimensionError("linear: feature axis mismatch, input length " +
                         std::to_string(input.size()) + " != in_features " + std::to_string(in_f));
  }
  if (bias.size() != out_f) {
    throw DimensionError("linear: bias length " + std::to_string(bias.size()) +
                         " != out_features " + std::to_string(out_f));
  }
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Tensor<T> out({out_f});
  Eigen::Map<Vec> y(out.data(), out_f);
  y.noalias() = ConstMatrixMap<T>(weights.data(), out_f, in_f) *
                Eigen::Map<const Vec>(input.data(), in_f);
  y += Eigen::Map<const Vec>(bias.data(), out_f);
  return out;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weights,
                          const Tensor<T>& grad_output, Tensor<T>& grad_weights,
                          Tensor<T>& grad_bias) {
  using namespace detail;
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  const std::size_t out_f = weights.dim(0), in_f = weights.dim(1);
  if (grad_output.size() != out_f || input.size() != in_f) {
    throw DimensionError("linear backward: operand lengths do not match the weights");
  }
  Eigen::Map<const Vec> gy(grad_output.data(), out_f);
  Eigen::Map<const Vec> x(input.data(), in_f);
  MatrixMap<T>(grad_weights.data(), out_f, in_f).noalias() += gy * x.transpose();
  Eigen::Map<Vec>(grad_bias.data(), out_f) += gy;
  Tensor<T> grad_input(input.shape());
  Eigen::Map<Vec>(grad_input.data(), in_f).noalias() =
      ConstMatrixMap<T>(weights.data(), out_f, in_f).transpose() * gy;
  return grad_input;
}

template <typename T>
Tensor<T> relu(Tensor<T> input) {
  for (T& v : input.values()) v = v > T{0} ? v : T{0};
  return input;
}

// Gradient passes only where the pre-activation was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, Tensor<T> grad_output) {
  if (input.size() != grad_output.size()) throw DimensionError("relu backward: length mismatch");
  for (std::size_t i = 0; i < input.size(); ++i) {
    if (!(input[i] > T{0})) grad_output[i] = T{0};
  }
  return grad_output;
}

// Named parameter tensors in insertion order.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
  };

  std::size_t add(const std::string& name, Tensor<T> value) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    index_.emplace(name, entries_.size());
    entries_.push_back({name, std::move(value)});
    return entries_.size() - 1;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  Tensor<T>& operator[](std::size_t i) { return entries_[i].value; }
  const Tensor<T>& operator[](std::size_t i) const { return entries_[i].value; }
  const std::string& name(std::size_t i) const { return entries_[i].name; }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return it->second;
  }
  Tensor<T>& operator[](const std::string& name) { return entries_[index_of(name)].value; }
  const Tensor<T>& operator[](const std::string& name) const {
    return entries_[index_of(name)].value;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  // Same names and shapes, all zeros.
  ParamStore zeros_like() const {
    ParamStore out;
    for (const auto& e : entries_) out.add(e.name, Tensor<T>(e.value.shape()));
    return out;
  }

  void set_zero() {
    for (auto& e : entries_) e.value.fill(T{0});
  }

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Activations recorded by a forward pass, consumed by backward.
template <typename T>
struct Trace {
  std::vector<Tensor<T>> inputs;
  bool complete = false;
};

// A chain of layers whose parameters live in an external ParamStore.
template <typename T>
class Sequential {
 public:
  struct Layer {
    LayerSpec spec;
    std::size_t weight = 0;
    std::size_t bias = 0;
  };

  // Registers `<prefix>.weight` / `<prefix>.bias` for layers with parameters.
  void add(const LayerSpec& spec, ParamStore<T>& params, const std::string& prefix) {
    Layer layer{spec, 0, 0};
    if (spec.kind != LayerKind::relu) {
      layer.weight = params.add(prefix + ".weight", Tensor<T>(spec.weight_shape()));
      layer.bias = params.add(prefix + ".bias", Tensor<T>({spec.out}));
    }
    layers_.push_back(layer);
  }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  bool empty() const noexcept { return layers_.empty(); }

  Tensor<T> forward(const ParamStore<T>& params, Tensor<T> x, Trace<T>* trace = nullptr) const {
    if (trace) {
      trace->inputs.clear();
      trace->complete = false;
    }
    for (const Layer& layer : layers_) {
      if (trace) trace->inputs.push_back(x);
      x = apply(layer, params, std::move(x));
    }
    if (trace) trace->complete = true;
    return x;
  }

  // Gradient of the loss with respect to the chain's input; parameter
  // gradients are accumulated into `grads` (same layout as `params`).
  Tensor<T> backward(const ParamStore<T>& params, const Trace<T>& trace, Tensor<T> grad,
                     ParamStore<T>& grads) const {
    if (!trace.complete || trace.inputs.size() != layers_.size()) {
      throw StateError("backward called without a completed forward pass");
    }
    for (std::size_t i = layers_.size(); i-- > 0;) {
      const Layer& layer = layers_[i];
      const Tensor<T>& x = trace.inputs[i];
      const LayerSpec& s = layer.spec;
      switch (s.kind) {
        case LayerKind::conv:
          grad = conv2d_backward(x, params[layer.weight], grad, s.stride, s.padding,
                                 grads[layer.weight], grads[layer.bias]);
          break;
        case LayerKind::conv_transpose:
          grad = conv_transpose2d_backward(x, params[layer.weight], grad, s.stride, s.padding,
                                           grads[layer.weight], grads[layer.bias]);
          break;
        case LayerKind::linear:
          grad = linear_backward(x, params[layer.weight], grad, grads[layer.weight],
                                 grads[layer.bias])
                     .reshaped(x.shape());
          break;
        case LayerKind::relu: grad = relu_backward(x, std::move(grad)); break;
      }
    }
    return grad;
  }

  static Tensor<T> apply(const Layer& layer, const ParamStore<T>& params, Tensor<T> x) {
    const LayerSpec& s = layer.spec;
    switch (s.kind) {
      case LayerKind::conv:
        return conv2d(x, params[layer.weight], params[layer.bias], s.stride, s.padding);
      case LayerKind::conv_transpose:
        return conv_transpose2d(x, params[layer.weight], params[layer.bias], s.stride, s.padding);
      case LayerKind::linear: return linear(x, params[layer.weight], params[layer.bias]);
      case LayerKind::relu: return relu(std::move(x));
    }
    return x;
  }

 private:
  std::vector<Layer> layers_;
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
template <typename T, typename Rng>
void init_uniform(const Sequential<T>& net, ParamStore<T>& params, Rng& rng) {
  for (const auto& layer : net.layers()) {
    if (layer.spec.kind == LayerKind::relu) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.spec.fan_in()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (T& v : params[layer.weight].values()) v = static_cast<T>(dist(rng));
    for (T& v : params[layer.bias].values()) v = static_cast<T>(dist(rng));
  }
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  ParamStore<T> first_moment;
  ParamStore<T> second_moment;
  std::size_t step = 0;

  AdamState() = default;
  AdamState(const ParamStore<T>& params, AdamConfig cfg)
      : config(cfg), first_moment(params.zeros_like()), second_moment(params.zeros_like()) {}
};

// Bias-corrected Adam update. Every gradient is checked before any parameter
// is touched, so a failing step leaves params and state unchanged.
template <typename T>
void adam_step(ParamStore<T>& params, const ParamStore<T>& grads, AdamState<T>& state) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size()) {
    throw DimensionError("adam_step: gradient store does not match parameters");
  }
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (grads[p].size() != params[p].size()) {
      throw DimensionError("adam_step: gradient for '" + params.name(p) + "' has wrong size");
    }
    for (T g : grads[p].values()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw TrainingError("non-finite gradient for parameter '" + params.name(p) + "'");
      }
    }
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto w = params[p].values();
    auto g = grads[p].values();
    auto m = state.first_moment[p].values();
    auto v = state.second_moment[p].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = c.beta1 * m[i] + (1.0 - c.beta1) * gi;
      const double vi = c.beta2 * v[i] + (1.0 - c.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      w[i] = static_cast<T>(w[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
    }
  }
}

}  // namespace sidewalk::nn
