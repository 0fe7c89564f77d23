#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "asymm/errors.hpp"
#include "asymm/rng.hpp"

namespace asymm {

// Dense feed-forward net: tanh hidden layers, sigmoid outputs. This is
// the only architecture either task function needs; layer_sizes {d, F}
// gives the no-hidden-layer ("single layer") variant.
struct mlp_spec {
  std::vector<int> layer_sizes;   // input, hidden..., output
  double output_bias_init = 0.0;

  int input_size() const { return layer_sizes.front(); }
  int output_size() const { return layer_sizes.back(); }
  int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }

  int param_count() const {
    int n = 0;
    for (int l = 0; l + 1 < static_cast<int>(layer_sizes.size()); ++l)
      n += (layer_sizes[l] + 1) * layer_sizes[l + 1];
    return n;
  }

  void validate() const {
    if (layer_sizes.size() < 2) throw invalid_config("mlp needs input and output layers");
    for (int s : layer_sizes)
      if (s < 1) throw invalid_config("mlp layer sizes must be >= 1");
  }
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Flat layout: per layer, the weight block (out x in, row-major by output
// unit) followed by the bias block. pack/unpack are exact inverses.
struct layer_offsets {
  std::size_t weights;
  std::size_t biases;
  int in;
  int out;
};

inline layer_offsets layer_layout(const mlp_spec& spec, int layer) {
  std::size_t off = 0;
  for (int l = 0; l < layer; ++l)
    off += static_cast<std::size_t>((spec.layer_sizes[l] + 1) * spec.layer_sizes[l + 1]);
  const int in = spec.layer_sizes[layer];
  const int out = spec.layer_sizes[layer + 1];
  return {off, off + static_cast<std::size_t>(in) * out, in, out};
}

inline std::vector<std::vector<double>> unpack_params(const mlp_spec& spec,
                                                      std::span<const double> params) {
  std::vector<std::vector<double>> blocks;
  for (int l = 0; l < spec.layer_count(); ++l) {
    auto lo = layer_layout(spec, l);
    blocks.emplace_back(params.begin() + lo.weights, params.begin() + lo.biases);
    blocks.emplace_back(params.begin() + lo.biases, params.begin() + lo.biases + lo.out);
  }
  return blocks;
}

inline std::vector<double> pack_params(const mlp_spec& spec,
                                       const std::vector<std::vector<double>>& blocks) {
  std::vector<double> params;
  params.reserve(spec.param_count());
  for (const auto& b : blocks) params.insert(params.end(), b.begin(), b.end());
  if (static_cast<int>(params.size()) != spec.param_count())
    throw dimension_mismatch("pack_params: block sizes do not match spec");
  return params;
}

// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases zero
// except the fixed initial output bias.
inline std::vector<double> init_params(const mlp_spec& spec, rng& r) {
  std::vector<double> params(spec.param_count(), 0.0);
  for (int l = 0; l < spec.layer_count(); ++l) {
    auto lo = layer_layout(spec, l);
    const double a = 1.0 / std::sqrt(static_cast<double>(lo.in));
    for (int k = 0; k < lo.in * lo.out; ++k) params[lo.weights + k] = r.next_uniform(-a, a);
    if (l == spec.layer_count() - 1)
      for (int k = 0; k < lo.out; ++k) params[lo.biases + k] = spec.output_bias_init;
  }
  return params;
}

namespace detail {

// Forward pass keeping per-layer activations (activations[0] = input).
inline void mlp_forward_cached(const mlp_spec& spec, std::span<const double> params,
                               std::span<const double> x,
                               std::vector<std::vector<double>>& activations) {
  if (static_cast<int>(x.size()) != spec.input_size())
    throw dimension_mismatch("mlp forward: input size mismatch");
  if (static_cast<int>(params.size()) != spec.param_count())
    throw dimension_mismatch("mlp forward: param size mismatch");
  activations.assign(1, std::vector<double>(x.begin(), x.end()));
  for (int l = 0; l < spec.layer_count(); ++l) {
    auto lo = layer_layout(spec, l);
    const auto& in = activations.back();
    std::vector<double> out(lo.out);
    const bool last = (l == spec.layer_count() - 1);
    for (int u = 0; u < lo.out; ++u) {
      double z = params[lo.biases + u];
      const double* w = params.data() + lo.weights + static_cast<std::size_t>(u) * lo.in;
      for (int k = 0; k < lo.in; ++k) z += w[k] * in[k];
      out[u] = last ? sigmoid(z) : std::tanh(z);
    }
    activations.push_back(std::move(out));
  }
}

// Reverse pass for upstream^T * forward. Accumulates into grad_params
// (size param_count, may be empty) and grad_input (size d, may be empty).
inline void mlp_backward(const mlp_spec& spec, std::span<const double> params,
                         const std::vector<std::vector<double>>& activations,
                         std::span<const double> upstream, std::span<double> grad_params,
                         std::span<double> grad_input) {
  if (static_cast<int>(upstream.size()) != spec.output_size())
    throw dimension_mismatch("mlp backward: upstream size mismatch");
  std::vector<double> delta(upstream.begin(), upstream.end());
  for (int l = spec.layer_count() - 1; l >= 0; --l) {
    auto lo = layer_layout(spec, l);
    const auto& in = activations[l];
    const auto& out = activations[l + 1];
    const bool last = (l == spec.layer_count() - 1);
    // d(activation)/d(pre-activation)
    for (int u = 0; u < lo.out; ++u) {
      const double a = out[u];
      delta[u] *= last ? a * (1.0 - a) : 1.0 - a * a;
    }
    std::vector<double> prev_delta(lo.in, 0.0);
    for (int u = 0; u < lo.out; ++u) {
      const double d = delta[u];
      const double* w = params.data() + lo.weights + static_cast<std::size_t>(u) * lo.in;
      if (!grad_params.empty()) {
        double* gw = grad_params.data() + lo.weights + static_cast<std::size_t>(u) * lo.in;
        for (int k = 0; k < lo.in; ++k) gw[k] += d * in[k];
        grad_params[lo.biases + u] += d;
      }
      for (int k = 0; k < lo.in; ++k) prev_delta[k] += d * w[k];
    }
    if (l == 0) {
      if (!grad_input.empty())
        for (int k = 0; k < lo.in; ++k) grad_input[k] += prev_delta[k];
    } else {
      delta = std::move(prev_delta);
    }
  }
}

}  // namespace detail

inline std::vector<double> mlp_forward(const mlp_spec& spec, std::span<const double> params,
                                       std::span<const double> x) {
  std::vector<std::vector<double>> acts;
  detail::mlp_forward_cached(spec, params, x, acts);
  return acts.back();
}

inline std::vector<double> mlp_grad_params(const mlp_spec& spec, std::span<const double> params,
                                           std::span<const double> x,
                                           std::span<const double> upstream) {
  std::vector<std::vector<double>> acts;
  detail::mlp_forward_cached(spec, params, x, acts);
  std::vector<double> grad(spec.param_count(), 0.0);
  detail::mlp_backward(spec, params, acts, upstream, grad, {});
  return grad;
}

inline std::vector<double> mlp_grad_input(const mlp_spec& spec, std::span<const double> params,
                                          std::span<const double> x,
                                          std::span<const double> upstream) {
  std::vector<std::vector<double>> acts;
  detail::mlp_forward_cached(spec, params, x, acts);
  std::vector<double> grad(spec.input_size(), 0.0);
  detail::mlp_backward(spec, params, acts, upstream, {}, grad);
  return grad;
}

}  // namespace asymm
