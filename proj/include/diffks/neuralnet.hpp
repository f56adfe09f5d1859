#pragma once

// Small smooth MLP with a flat parameter vector. Packing order: for each layer,
// the row-major (out x in) weight matrix followed by the bias vector.
// forward and vjp are templated on the scalar so dual inputs give
// forward-over-reverse second derivatives.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "diffks/autodiff.hpp"
#include "diffks/error.hpp"

namespace diffks {

enum class Activation { softplus, silu };

inline Activation parse_activation(const std::string &name) {
  if (name == "softplus") return Activation::softplus;
  if (name == "silu") return Activation::silu;
  if (name == "relu")
    throw InputError("activation 'relu' is rejected: XC potentials need a smooth network");
  throw InputError("unknown activation '" + name + "'");
}

inline std::string activation_name(Activation a) {
  return a == Activation::softplus ? "softplus" : "silu";
}

struct NeuralNet {
  std::vector<int> layer_sizes;
  Activation activation = Activation::softplus;
  std::vector<double> params;

  static std::size_t param_count(const std::vector<int> &sizes) {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l)
      n += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
    return n;
  }
  int input_dim() const { return layer_sizes.empty() ? 0 : layer_sizes.front(); }
  int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int max_width() const {
    int w = 0;
    for (int s : layer_sizes) w = std::max(w, s);
    return w;
  }

  void validate() const {
    if (layer_sizes.size() < 2) throw InputError("network needs at least an input and an output layer");
    for (int s : layer_sizes)
      if (s < 1) throw InputError("layer sizes must be positive");
    if (layer_sizes.back() != 1) throw InputError("network output dimension must be 1");
    if (params.size() != param_count(layer_sizes))
      throw InputError("parameter vector has length " + std::to_string(params.size()) +
                       ", expected " + std::to_string(param_count(layer_sizes)));
    for (double p : params)
      if (!std::isfinite(p)) throw NumericalError("non-finite network parameter");
  }
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0. Bits come from
// mt19937_64 (fully specified by the standard) mapped to [0,1) by hand, so the
// result does not depend on the library's distribution implementation.
inline NeuralNet init_network(const std::vector<int> &sizes, Activation act, std::uint64_t seed) {
  NeuralNet nn{sizes, act, std::vector<double>(NeuralNet::param_count(sizes), 0.0)};
  if (sizes.size() < 2 || sizes.back() != 1) nn.validate();  // throws
  std::mt19937_64 rng(seed);
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int in = sizes[l], out = sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (int k = 0; k < in * out; ++k) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      nn.params[off++] = bound * (2.0 * u - 1.0);
    }
    off += out;  // biases stay zero
  }
  nn.validate();
  return nn;
}

namespace detail {

template <class T>
T sigmoid(const T &z) {
  using std::exp;
  if (ad::primal(z) >= 0.0) return 1.0 / (1.0 + exp(-z));
  const T e = exp(z);
  return e / (1.0 + e);
}

template <class T>
T activate(Activation a, const T &z) {
  using std::exp;
  using std::log1p;
  if (a == Activation::silu) return z * sigmoid(z);
  if (ad::primal(z) > 0.0) return z + log1p(exp(-z));
  return log1p(exp(z));
}

template <class T>
T activate_deriv(Activation a, const T &z) {
  const T s = sigmoid(z);
  if (a == Activation::silu) return s + z * s * (1.0 - s);
  return s;
}

}  // namespace detail

// f(x) for one input vector x of length layer_sizes[0].
template <class T>
T forward(const NeuralNet &nn, const T *x) {
  const int L = nn.layer_count();
  std::vector<T> cur(x, x + nn.input_dim()), next;
  std::size_t off = 0;
  for (int l = 0; l < L; ++l) {
    const int in = nn.layer_sizes[l], out = nn.layer_sizes[l + 1];
    const double *W = nn.params.data() + off;
    const double *b = W + static_cast<std::size_t>(in) * out;
    next.assign(out, T(0.0));
    for (int o = 0; o < out; ++o) {
      T z(b[o]);
      for (int i = 0; i < in; ++i) z = z + W[o * in + i] * cur[i];
      next[o] = l + 1 < L ? detail::activate(nn.activation, z) : z;
    }
    off += static_cast<std::size_t>(in) * out + out;
    cur.swap(next);
  }
  return cur[0];
}

template <class T>
T forward(const NeuralNet &nn, const std::vector<T> &x) {
  if (static_cast<int>(x.size()) != nn.input_dim())
    throw InputError("feature dimension " + std::to_string(x.size()) + " does not match network input " +
                     std::to_string(nn.input_dim()));
  return forward(nn, x.data());
}

// Reverse pass for one input with output cotangent `cot`. Parameter gradients
// are accumulated into grad_params (length = params.size()); input gradients
// are written to grad_x (may be null).
template <class T>
void vjp(const NeuralNet &nn, const T *x, const T &cot, T *grad_params, T *grad_x) {
  const int L = nn.layer_count();
  std::vector<std::vector<T>> acts(L + 1), pre(L);
  acts[0].assign(x, x + nn.input_dim());
  std::vector<std::size_t> offs(L);
  std::size_t off = 0;
  for (int l = 0; l < L; ++l) {
    offs[l] = off;
    const int in = nn.layer_sizes[l], out = nn.layer_sizes[l + 1];
    const double *W = nn.params.data() + off;
    const double *b = W + static_cast<std::size_t>(in) * out;
    pre[l].assign(out, T(0.0));
    acts[l + 1].assign(out, T(0.0));
    for (int o = 0; o < out; ++o) {
      T z(b[o]);
      for (int i = 0; i < in; ++i) z = z + W[o * in + i] * acts[l][i];
      pre[l][o] = z;
      acts[l + 1][o] = l + 1 < L ? detail::activate(nn.activation, z) : z;
    }
    off += static_cast<std::size_t>(in) * out + out;
  }
  std::vector<T> delta{cot}, prev;
  for (int l = L - 1; l >= 0; --l) {
    const int in = nn.layer_sizes[l], out = nn.layer_sizes[l + 1];
    if (l + 1 < L)
      for (int o = 0; o < out; ++o) delta[o] = delta[o] * detail::activate_deriv(nn.activation, pre[l][o]);
    const double *W = nn.params.data() + offs[l];
    T *gW = grad_params + offs[l];
    T *gb = gW + static_cast<std::size_t>(in) * out;
    prev.assign(in, T(0.0));
    for (int o = 0; o < out; ++o) {
      gb[o] = gb[o] + delta[o];
      for (int i = 0; i < in; ++i) {
        gW[o * in + i] = gW[o * in + i] + delta[o] * acts[l][i];
        prev[i] = prev[i] + W[o * in + i] * delta[o];
      }
    }
    delta.swap(prev);
  }
  if (grad_x)
    for (int i = 0; i < nn.input_dim(); ++i) grad_x[i] = delta[i];
}

struct VjpResult {
  std::vector<double> grad_params;
  std::vector<std::vector<double>> grad_features;
};

inline std::vector<double> forward_batch(const NeuralNet &nn, const std::vector<std::vector<double>> &xs) {
  std::vector<double> out;
  out.reserve(xs.size());
  for (const auto &x : xs) out.push_back(forward(nn, x));
  return out;
}

inline VjpResult vjp_batch(const NeuralNet &nn, const std::vector<std::vector<double>> &xs,
                           const std::vector<double> &cots) {
  if (xs.size() != cots.size()) throw InputError("cotangent count does not match batch size");
  VjpResult r{std::vector<double>(nn.params.size(), 0.0), {}};
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (static_cast<int>(xs[k].size()) != nn.input_dim())
      throw InputError("feature dimension does not match network input");
    std::vector<double> gx(nn.input_dim());
    vjp(nn, xs[k].data(), cots[k], r.grad_params.data(), gx.data());
    r.grad_features.push_back(std::move(gx));
  }
  return r;
}

}  // namespace diffks
