#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iad/matrix.hpp"
#include "iad/rng.hpp"

namespace iad {

enum class Activation { Tanh, Relu };

std::string to_string(Activation a);

// Fully-connected net: layer_widths = {input, hidden..., output}. Hidden
// layers use `activation`, the output layer is affine (identity). The final
// layer optionally drops its bias (Deep-SVDD encoders require this).
struct MlpSpec {
  std::vector<std::size_t> layer_widths;
  Activation activation = Activation::Tanh;
  bool final_bias = true;

  std::size_t input_dim() const { return layer_widths.front(); }
  std::size_t output_dim() const { return layer_widths.back(); }
  std::size_t num_layers() const { return layer_widths.size() - 1; }

  void validate() const;  // throws ConfigError on malformed specs
  std::string describe() const;

  bool operator==(const MlpSpec&) const = default;
};

// Where each weight matrix / bias vector lives inside a flat vector.
struct ParamSegment {
  std::size_t layer = 0;   // 0-based layer index within its spec
  bool is_bias = false;
  std::size_t rows = 0;    // weights: out x in; biases: out x 1
  std::size_t cols = 0;
  std::size_t offset = 0;  // into the flat value vector

  bool operator==(const ParamSegment&) const = default;
};

class ParamLayout {
 public:
  ParamLayout() = default;
  static ParamLayout for_spec(const MlpSpec& spec);
  // Concatenation (e.g. encoder params followed by decoder params).
  static ParamLayout concat(const ParamLayout& a, const ParamLayout& b);

  const std::vector<ParamSegment>& segments() const { return segments_; }
  std::size_t total_size() const { return total_; }

  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<ParamSegment> segments_;
  std::size_t total_ = 0;
};

// Flattened parameter vector tied to its layout. Unflattening is just a
// span view into the right segment, so flatten-unflatten is the identity
// by construction.
struct FlatParams {
  ParamLayout layout;
  Vector values;

  std::span<double> segment(std::size_t i);
  std::span<const double> segment(std::size_t i) const;

  FlatParams zeros_like() const { return {layout, Vector(values.size(), 0.0)}; }
};

// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases.
FlatParams init_params(const MlpSpec& spec, Rng& rng);

// Pre-activations and activations per layer, kept for backprop.
struct ForwardTrace {
  std::vector<Matrix> pre;   // pre[k]: batch x width[k+1]
  std::vector<Matrix> post;  // post[k]: activations after layer k
  const Matrix* input = nullptr;
};

// Plain forward pass; throws ShapeError naming both dims on mismatch.
Matrix mlp_forward(const MlpSpec& spec, const FlatParams& params, const Matrix& batch);

Matrix mlp_forward_traced(const MlpSpec& spec, const FlatParams& params,
                          const Matrix& batch, ForwardTrace& trace);

// Reverse pass. `d_out` is dLoss/d(output) per row. `param_offset` places
// this net's gradients inside a larger flat gradient (VAE packs encoder
// then decoder). Returns dLoss/d(input) when `d_input` is non-null.
void mlp_backward(const MlpSpec& spec, const FlatParams& params, const ForwardTrace& trace,
                  const Matrix& d_out, std::span<double> grad_out, Matrix* d_input);

// Euclidean inner product over full flattened vectors; layouts must match.
double grad_dot(const FlatParams& a, const FlatParams& b);

}  // namespace iad
