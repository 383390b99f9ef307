#include "fedaa/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fedaa/errors.hpp"

namespace fedaa {

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

void check_batch(const ArchSpec& arch, const Matrix& batch) {
  if (batch.cols != arch.input_dim) {
    throw ConfigError("batch width " + std::to_string(batch.cols) + " does not match input_dim " +
                      std::to_string(arch.input_dim));
  }
}

// out = in * W^T + b
void affine(const Matrix& in, const double* w, const double* b, std::size_t fan_out, Matrix& out) {
  const std::size_t fan_in = in.cols;
  out = Matrix(in.rows, fan_out);
  for (std::size_t r = 0; r < in.rows; ++r) {
    const double* x = in.data.data() + r * fan_in;
    double* y = out.data.data() + r * fan_out;
    for (std::size_t o = 0; o < fan_out; ++o) {
      const double* wo = w + o * fan_in;
      double acc = b[o];
      for (std::size_t i = 0; i < fan_in; ++i) acc += wo[i] * x[i];
      y[o] = acc;
    }
  }
}

}  // namespace

std::size_t ArchSpec::fan_in(std::size_t layer) const {
  return layer == 0 ? input_dim : hidden_dims[layer - 1];
}

std::size_t ArchSpec::fan_out(std::size_t layer) const {
  return layer < hidden_dims.size() ? hidden_dims[layer] : output_dim;
}

void ArchSpec::validate() const {
  if (input_dim == 0) throw ConfigError("input_dim must be positive");
  if (output_dim == 0) throw ConfigError("output_dim must be positive");
  for (std::size_t i = 0; i < hidden_dims.size(); ++i) {
    if (hidden_dims[i] == 0) throw ConfigError("hidden layer " + std::to_string(i) + " has width 0");
  }
  if (output_head == OutputHead::kScalar && output_dim != 1) {
    throw ConfigError("scalar head requires output_dim = 1");
  }
}

std::size_t param_count(const ArchSpec& arch) {
  std::size_t n = 0;
  for (std::size_t l = 0; l < arch.num_layers(); ++l) n += arch.fan_in(l) * arch.fan_out(l) + arch.fan_out(l);
  return n;
}

LayerSlice layer_slice(const ArchSpec& arch, std::size_t layer) {
  if (layer >= arch.num_layers()) throw ConfigError("layer index out of range");
  std::size_t offset = 0;
  for (std::size_t l = 0; l < layer; ++l) offset += arch.fan_in(l) * arch.fan_out(l) + arch.fan_out(l);
  LayerSlice s;
  s.fan_in = arch.fan_in(layer);
  s.fan_out = arch.fan_out(layer);
  s.weight_offset = offset;
  s.bias_offset = offset + s.fan_in * s.fan_out;
  return s;
}

std::vector<LayerParams> unflatten(const FlatParams& params) {
  if (params.values.size() != param_count(params.arch)) {
    throw ConfigError("parameter vector length does not match architecture");
  }
  std::vector<LayerParams> layers;
  layers.reserve(params.arch.num_layers());
  for (std::size_t l = 0; l < params.arch.num_layers(); ++l) {
    const LayerSlice s = layer_slice(params.arch, l);
    LayerParams lp;
    lp.weight = Matrix(s.fan_out, s.fan_in);
    std::copy_n(params.values.begin() + static_cast<std::ptrdiff_t>(s.weight_offset),
                s.fan_in * s.fan_out, lp.weight.data.begin());
    lp.bias.assign(params.values.begin() + static_cast<std::ptrdiff_t>(s.bias_offset),
                   params.values.begin() + static_cast<std::ptrdiff_t>(s.end()));
    layers.push_back(std::move(lp));
  }
  return layers;
}

FlatParams flatten(const ArchSpec& arch, std::span<const LayerParams> layers) {
  if (layers.size() != arch.num_layers()) throw ConfigError("layer count does not match architecture");
  FlatParams out;
  out.arch = arch;
  out.values.reserve(param_count(arch));
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& lp = layers[l];
    if (lp.weight.rows != arch.fan_out(l) || lp.weight.cols != arch.fan_in(l) ||
        lp.bias.size() != arch.fan_out(l)) {
      throw ConfigError("layer " + std::to_string(l) + " has the wrong shape");
    }
    out.values.insert(out.values.end(), lp.weight.data.begin(), lp.weight.data.end());
    out.values.insert(out.values.end(), lp.bias.begin(), lp.bias.end());
  }
  return out;
}

void SgdConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be non-negative");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0) throw ConfigError("epochs must be positive");
}

MlpModel MlpModel::zeros(const ArchSpec& arch) {
  arch.validate();
  return MlpModel{FlatParams{std::vector<double>(param_count(arch), 0.0), arch}};
}

MlpModel MlpModel::glorot(const ArchSpec& arch, Rng& rng) {
  MlpModel m = zeros(arch);
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const LayerSlice s = layer_slice(arch, l);
    const double limit = std::sqrt(6.0 / static_cast<double>(s.fan_in + s.fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = s.weight_offset; i < s.bias_offset; ++i) m.params.values[i] = dist(rng);
  }
  return m;
}

MlpModel MlpModel::from_params(FlatParams params) {
  params.arch.validate();
  if (params.values.size() != param_count(params.arch)) {
    throw ConfigError("parameter vector has " + std::to_string(params.values.size()) +
                      " entries, architecture needs " + std::to_string(param_count(params.arch)));
  }
  return MlpModel{std::move(params)};
}

void softmax_inplace(std::span<double> row) {
  const double mx = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (double& v : row) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : row) v /= sum;
}

ForwardTrace forward_trace(const MlpModel& model, const Matrix& batch) {
  const ArchSpec& arch = model.arch();
  check_batch(arch, batch);
  if (model.params.values.size() != param_count(arch)) throw ConfigError("model parameter length mismatch");

  ForwardTrace t;
  t.input = batch;
  const std::size_t L = arch.num_layers();
  t.pre.resize(L);
  t.post.resize(L);
  const Matrix* in = &t.input;
  for (std::size_t l = 0; l < L; ++l) {
    const LayerSlice s = layer_slice(arch, l);
    affine(*in, model.params.values.data() + s.weight_offset, model.params.values.data() + s.bias_offset,
           s.fan_out, t.pre[l]);
    if (!all_finite(t.pre[l].data)) throw NumericError("non-finite activation", static_cast<int>(l));
    t.post[l] = t.pre[l];
    if (l + 1 < L) {
      for (double& v : t.post[l].data) v = std::max(0.0, v);
    }
    in = &t.post[l];
  }
  t.output = t.post.back();
  if (arch.output_head == OutputHead::kSoftmaxSimplex) {
    for (std::size_t r = 0; r < t.output.rows; ++r) softmax_inplace(t.output.row(r));
  }
  return t;
}

Matrix forward(const MlpModel& model, const Matrix& batch) { return forward_trace(model, batch).output; }

Backprop backward_from_logits(const MlpModel& model, const ForwardTrace& trace, const Matrix& logit_grad) {
  const ArchSpec& arch = model.arch();
  const std::size_t L = arch.num_layers();
  Backprop bp;
  bp.param_grad.assign(model.params.values.size(), 0.0);

  Matrix delta = logit_grad;  // dL/d pre[l]
  for (std::size_t li = L; li-- > 0;) {
    const LayerSlice s = layer_slice(arch, li);
    const Matrix& in = li == 0 ? trace.input : trace.post[li - 1];
    double* gw = bp.param_grad.data() + s.weight_offset;
    double* gb = bp.param_grad.data() + s.bias_offset;
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const double* d = delta.data.data() + r * s.fan_out;
      const double* x = in.data.data() + r * s.fan_in;
      for (std::size_t o = 0; o < s.fan_out; ++o) {
        const double dv = d[o];
        gb[o] += dv;
        if (dv == 0.0) continue;
        double* gwo = gw + o * s.fan_in;
        for (std::size_t i = 0; i < s.fan_in; ++i) gwo[i] += dv * x[i];
      }
    }
    // Propagate to the layer input.
    const double* w = model.params.values.data() + s.weight_offset;
    Matrix dx(delta.rows, s.fan_in);
    for (std::size_t r = 0; r < delta.rows; ++r) {
      const double* d = delta.data.data() + r * s.fan_out;
      double* g = dx.data.data() + r * s.fan_in;
      for (std::size_t o = 0; o < s.fan_out; ++o) {
        const double dv = d[o];
        if (dv == 0.0) continue;
        const double* wo = w + o * s.fan_in;
        for (std::size_t i = 0; i < s.fan_in; ++i) g[i] += dv * wo[i];
      }
    }
    if (li > 0) {
      const Matrix& pre = trace.pre[li - 1];
      for (std::size_t k = 0; k < dx.data.size(); ++k) {
        if (pre.data[k] <= 0.0) dx.data[k] = 0.0;
      }
      delta = std::move(dx);
    } else {
      bp.input_grad = std::move(dx);
    }
  }
  return bp;
}

Backprop backward(const MlpModel& model, const ForwardTrace& trace, const Matrix& output_grad) {
  if (output_grad.rows != trace.output.rows || output_grad.cols != trace.output.cols) {
    throw ConfigError("output gradient shape mismatch");
  }
  if (model.arch().output_head != OutputHead::kSoftmaxSimplex) {
    return backward_from_logits(model, trace, output_grad);
  }
  // Softmax Jacobian-vector product: dz = p * (g - <g, p>).
  Matrix logit_grad(output_grad.rows, output_grad.cols);
  for (std::size_t r = 0; r < output_grad.rows; ++r) {
    const auto p = trace.output.row(r);
    const auto g = output_grad.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < p.size(); ++c) dot += g[c] * p[c];
    for (std::size_t c = 0; c < p.size(); ++c) logit_grad(r, c) = p[c] * (g[c] - dot);
  }
  return backward_from_logits(model, trace, logit_grad);
}

namespace {

void check_labels(const ArchSpec& arch, const Matrix& batch, std::span<const int> labels) {
  if (arch.output_head == OutputHead::kScalar) throw ConfigError("cross-entropy needs a classification head");
  if (labels.size() != batch.rows) throw ConfigError("label count does not match batch rows");
  if (batch.rows == 0) throw ConfigError("empty batch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= arch.output_dim) {
      throw ConfigError("label " + std::to_string(y) + " out of range");
    }
  }
}

// Returns mean CE and fills probs (softmax of the last pre-activation).
double ce_from_trace(const ForwardTrace& t, std::span<const int> labels, Matrix& probs) {
  const Matrix& logits = t.pre.back();
  probs = logits;
  double loss = 0.0;
  for (std::size_t r = 0; r < logits.rows; ++r) {
    auto z = logits.row(r);
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - mx);
    const double log_sum = mx + std::log(sum);
    loss += log_sum - z[static_cast<std::size_t>(labels[r])];
    auto p = probs.row(r);
    for (std::size_t c = 0; c < p.size(); ++c) p[c] = std::exp(z[c] - log_sum);
  }
  loss /= static_cast<double>(logits.rows);
  if (!std::isfinite(loss)) {
    throw NumericError("non-finite cross-entropy loss", static_cast<int>(t.pre.size() - 1));
  }
  return loss;
}

}  // namespace

LossAndGrad backward_ce(const MlpModel& model, const Matrix& batch, std::span<const int> labels) {
  check_labels(model.arch(), batch, labels);
  const ForwardTrace t = forward_trace(model, batch);
  Matrix probs;
  LossAndGrad out;
  out.loss = ce_from_trace(t, labels, probs);
  const double inv_n = 1.0 / static_cast<double>(batch.rows);
  for (std::size_t r = 0; r < probs.rows; ++r) {
    probs(r, static_cast<std::size_t>(labels[r])) -= 1.0;
    for (double& v : probs.row(r)) v *= inv_n;
  }
  out.grad.arch = model.arch();
  out.grad.values = backward_from_logits(model, t, probs).param_grad;
  return out;
}

double cross_entropy(const MlpModel& model, const Matrix& batch, std::span<const int> labels) {
  check_labels(model.arch(), batch, labels);
  Matrix probs;
  return ce_from_trace(forward_trace(model, batch), labels, probs);
}

std::vector<int> predict(const MlpModel& model, const Matrix& batch) {
  const ForwardTrace t = forward_trace(model, batch);
  const Matrix& z = t.pre.back();
  std::vector<int> out(z.rows);
  for (std::size_t r = 0; r < z.rows; ++r) {
    auto row = z.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    std::copy_n(m.data.begin() + static_cast<std::ptrdiff_t>(indices[i] * m.cols), m.cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
  }
  return out;
}

void sgd_train(MlpModel& model, const Matrix& features, std::span<const int> labels, const SgdConfig& cfg,
               Rng& rng) {
  cfg.validate();
  if (features.rows == 0) throw ConfigError("cannot train on an empty dataset");
  if (labels.size() != features.rows) throw ConfigError("label count does not match feature rows");

  std::vector<std::size_t> order(features.rows);
  std::vector<int> batch_labels;
  auto& theta = model.params.values;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      const Matrix xb = gather_rows(features, idx);
      batch_labels.resize(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) batch_labels[i] = labels[idx[i]];
      const LossAndGrad lg = backward_ce(model, xb, batch_labels);
      for (std::size_t k = 0; k < theta.size(); ++k) {
        theta[k] -= cfg.learning_rate * (lg.grad.values[k] + cfg.weight_decay * theta[k]);
      }
    }
  }
}

}  // namespace fedaa
