#include "iad/mlp.hpp"

#include <cmath>
#include <sstream>

namespace iad {

std::string to_string(Activation a) {
  return a == Activation::Tanh ? "tanh" : "relu";
}

void MlpSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw ConfigError("mlp spec needs at least 2 widths, got " +
                      std::to_string(layer_widths.size()));
  }
  for (std::size_t w : layer_widths) {
    if (w < 1) throw ConfigError("mlp spec: all layer widths must be >= 1");
  }
}

std::string MlpSpec::describe() const {
  std::ostringstream os;
  os << "mlp:";
  for (std::size_t i = 0; i < layer_widths.size(); ++i) {
    if (i) os << ",";
    os << layer_widths[i];
  }
  os << ";act=" << to_string(activation) << ";final_bias=" << (final_bias ? 1 : 0);
  return os.str();
}

ParamLayout ParamLayout::for_spec(const MlpSpec& spec) {
  spec.validate();
  ParamLayout layout;
  std::size_t offset = 0;
  for (std::size_t k = 0; k + 1 < spec.layer_widths.size(); ++k) {
    const std::size_t in = spec.layer_widths[k];
    const std::size_t out = spec.layer_widths[k + 1];
    layout.segments_.push_back({k, false, out, in, offset});
    offset += out * in;
    const bool is_last = (k + 2 == spec.layer_widths.size());
    if (!is_last || spec.final_bias) {
      layout.segments_.push_back({k, true, out, 1, offset});
      offset += out;
    }
  }
  layout.total_ = offset;
  return layout;
}

ParamLayout ParamLayout::concat(const ParamLayout& a, const ParamLayout& b) {
  ParamLayout layout;
  layout.segments_ = a.segments_;
  for (ParamSegment seg : b.segments_) {
    seg.offset += a.total_;
    layout.segments_.push_back(seg);
  }
  layout.total_ = a.total_ + b.total_;
  return layout;
}

std::span<double> FlatParams::segment(std::size_t i) {
  const ParamSegment& seg = layout.segments()[i];
  return {values.data() + seg.offset, seg.rows * seg.cols};
}

std::span<const double> FlatParams::segment(std::size_t i) const {
  const ParamSegment& seg = layout.segments()[i];
  return {values.data() + seg.offset, seg.rows * seg.cols};
}

FlatParams init_params(const MlpSpec& spec, Rng& rng) {
  const ParamLayout layout = ParamLayout::for_spec(spec);
  FlatParams params{layout, Vector(layout.total_size(), 0.0)};
  for (std::size_t i = 0; i < layout.segments().size(); ++i) {
    const ParamSegment& seg = layout.segments()[i];
    if (seg.is_bias) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(seg.rows + seg.cols));
    for (double& w : params.segment(i)) {
      w = (2.0 * rng.uniform01() - 1.0) * bound;
    }
  }
  return params;
}

namespace {

inline double activate(Activation a, double z) {
  return a == Activation::Tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

// Derivative in terms of the activation output (both tanh and relu allow it).
inline double activate_grad(Activation a, double post) {
  return a == Activation::Tanh ? 1.0 - post * post : (post > 0.0 ? 1.0 : 0.0);
}

struct LayerView {
  const double* weights;  // out x in, row-major
  const double* bias;     // nullptr when absent
  std::size_t in, out;
};

std::vector<LayerView> layer_views(const MlpSpec& spec, const FlatParams& params) {
  std::vector<LayerView> views;
  const auto& segs = params.layout.segments();
  for (std::size_t k = 0; k + 1 < spec.layer_widths.size(); ++k) {
    LayerView v{nullptr, nullptr, spec.layer_widths[k], spec.layer_widths[k + 1]};
    for (const ParamSegment& seg : segs) {
      if (seg.layer != k) continue;
      const double* base = params.values.data() + seg.offset;
      if (seg.is_bias) {
        v.bias = base;
      } else {
        v.weights = base;
      }
    }
    if (!v.weights) {
      throw ShapeError("params layout is missing weights for layer " + std::to_string(k));
    }
    views.push_back(v);
  }
  return views;
}

void check_input(const MlpSpec& spec, const Matrix& batch) {
  if (batch.cols() != spec.input_dim()) {
    throw ShapeError("mlp input has " + std::to_string(batch.cols()) +
                     " columns but the spec expects " + std::to_string(spec.input_dim()));
  }
}

}  // namespace

Matrix mlp_forward_traced(const MlpSpec& spec, const FlatParams& params,
                          const Matrix& batch, ForwardTrace& trace) {
  spec.validate();
  check_input(spec, batch);
  if (params.values.size() != params.layout.total_size()) {
    throw ShapeError("params size " + std::to_string(params.values.size()) +
                     " does not match layout size " +
                     std::to_string(params.layout.total_size()));
  }

  const auto views = layer_views(spec, params);
  const std::size_t n = batch.rows();
  const std::size_t layers = views.size();
  trace.pre.assign(layers, Matrix());
  trace.post.assign(layers, Matrix());
  trace.input = &batch;

  const Matrix* current = &batch;
  for (std::size_t k = 0; k < layers; ++k) {
    const LayerView& v = views[k];
    Matrix z(n, v.out);
    for (std::size_t r = 0; r < n; ++r) {
      const double* x = current->row(r).data();
      double* zr = z.row(r).data();
      for (std::size_t o = 0; o < v.out; ++o) {
        const double* w = v.weights + o * v.in;
        double acc = v.bias ? v.bias[o] : 0.0;
        for (std::size_t i = 0; i < v.in; ++i) acc += w[i] * x[i];
        zr[o] = acc;
      }
    }
    const bool is_last = (k + 1 == layers);
    Matrix a = z;
    if (!is_last) {
      for (double& val : a.values()) val = activate(spec.activation, val);
    }
    trace.pre[k] = std::move(z);
    trace.post[k] = std::move(a);
    current = &trace.post[k];
  }
  return trace.post.back();
}

Matrix mlp_forward(const MlpSpec& spec, const FlatParams& params, const Matrix& batch) {
  ForwardTrace trace;
  return mlp_forward_traced(spec, params, batch, trace);
}

void mlp_backward(const MlpSpec& spec, const FlatParams& params, const ForwardTrace& trace,
                  const Matrix& d_out, std::span<double> grad_out, Matrix* d_input) {
  const auto views = layer_views(spec, params);
  const std::size_t layers = views.size();
  const std::size_t n = d_out.rows();
  if (d_out.cols() != spec.output_dim()) {
    throw ShapeError("backward d_out has " + std::to_string(d_out.cols()) +
                     " columns but the spec output dim is " +
                     std::to_string(spec.output_dim()));
  }
  if (grad_out.size() != params.layout.total_size()) {
    throw ShapeError("gradient span size " + std::to_string(grad_out.size()) +
                     " does not match layout size " +
                     std::to_string(params.layout.total_size()));
  }

  // Resolve gradient segment offsets once.
  std::vector<double*> grad_w(layers, nullptr);
  std::vector<double*> grad_b(layers, nullptr);
  for (const ParamSegment& seg : params.layout.segments()) {
    if (seg.is_bias) {
      grad_b[seg.layer] = grad_out.data() + seg.offset;
    } else {
      grad_w[seg.layer] = grad_out.data() + seg.offset;
    }
  }

  Matrix delta = d_out;  // dLoss/dZ for the layer being processed
  for (std::size_t k = layers; k-- > 0;) {
    const LayerView& v = views[k];
    const bool is_last = (k + 1 == layers);
    if (!is_last) {
      // delta currently holds dLoss/dA; fold in the activation derivative.
      const Matrix& post = trace.post[k];
      for (std::size_t r = 0; r < n; ++r) {
        double* dr = delta.row(r).data();
        const double* ar = post.row(r).data();
        for (std::size_t o = 0; o < v.out; ++o) {
          dr[o] *= activate_grad(spec.activation, ar[o]);
        }
      }
    }

    const Matrix& a_prev = (k == 0) ? *trace.input : trace.post[k - 1];
    double* gw = grad_w[k];
    double* gb = grad_b[k];
    for (std::size_t r = 0; r < n; ++r) {
      const double* dr = delta.row(r).data();
      const double* ar = a_prev.row(r).data();
      for (std::size_t o = 0; o < v.out; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        double* gwo = gw + o * v.in;
        for (std::size_t i = 0; i < v.in; ++i) gwo[i] += d * ar[i];
        if (gb) gb[o] += d;
      }
    }

    if (k == 0 && !d_input) break;
    Matrix prev_delta(n, v.in);
    for (std::size_t r = 0; r < n; ++r) {
      const double* dr = delta.row(r).data();
      double* pr = prev_delta.row(r).data();
      for (std::size_t o = 0; o < v.out; ++o) {
        const double d = dr[o];
        if (d == 0.0) continue;
        const double* w = v.weights + o * v.in;
        for (std::size_t i = 0; i < v.in; ++i) pr[i] += d * w[i];
      }
    }
    if (k == 0) {
      *d_input = std::move(prev_delta);
      return;
    }
    delta = std::move(prev_delta);
  }
}

double grad_dot(const FlatParams& a, const FlatParams& b) {
  if (!(a.layout == b.layout)) {
    throw ShapeError("grad_dot: parameter layouts differ (" +
                     std::to_string(a.layout.total_size()) + " vs " +
                     std::to_string(b.layout.total_size()) + " values)");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) acc += a.values[i] * b.values[i];
  return acc;
}

}  // namespace iad
