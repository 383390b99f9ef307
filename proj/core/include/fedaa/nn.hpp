#pragma once

// Dense feed-forward networks with analytic backpropagation.
//
// Parameter layout (FlatParams::values), for layers l = 0..L-1:
//   [W_0 (fan_out x fan_in, row-major)][b_0][W_1][b_1]...[W_{L-1}][b_{L-1}]
// Hidden layers use ReLU. The final layer is affine and is followed by the
// output head (identity for logits/scalar, softmax for softmax_simplex).

#include <cstddef>
#include <span>
#include <vector>

#include "fedaa/rng.hpp"

namespace fedaa {

/// Row-major dense matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

enum class Activation { kRelu };

enum class OutputHead {
  kLogits,          ///< raw affine outputs
  kSoftmaxSimplex,  ///< rows on the probability simplex
  kScalar,          ///< single real output (output_dim must be 1)
};

struct ArchSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_dims;  // empty: single affine layer
  std::size_t output_dim = 1;
  Activation hidden_activation = Activation::kRelu;
  OutputHead output_head = OutputHead::kLogits;

  std::size_t num_layers() const { return hidden_dims.size() + 1; }
  std::size_t fan_in(std::size_t layer) const;
  std::size_t fan_out(std::size_t layer) const;

  /// Throws ConfigError on zero widths or a non-scalar kScalar head.
  void validate() const;

  bool operator==(const ArchSpec&) const = default;
};

/// Exact parameter count: sum over layers of fan_in * fan_out + fan_out.
std::size_t param_count(const ArchSpec& arch);

/// Offsets of one layer inside the flat vector.
struct LayerSlice {
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;

  std::size_t begin() const { return weight_offset; }
  std::size_t end() const { return bias_offset + fan_out; }
};

LayerSlice layer_slice(const ArchSpec& arch, std::size_t layer);

/// Flat parameter vector tagged with the architecture that produced it.
struct FlatParams {
  std::vector<double> values;
  ArchSpec arch;

  std::size_t size() const { return values.size(); }
  bool operator==(const FlatParams&) const = default;
};

struct LayerParams {
  Matrix weight;  // fan_out x fan_in
  std::vector<double> bias;

  bool operator==(const LayerParams&) const = default;
};

std::vector<LayerParams> unflatten(const FlatParams& params);
FlatParams flatten(const ArchSpec& arch, std::span<const LayerParams> layers);

struct SgdConfig {
  double learning_rate = 0.1;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
  std::size_t epochs = 20;

  void validate() const;
  bool operator==(const SgdConfig&) const = default;
};

struct MlpModel {
  FlatParams params;

  const ArchSpec& arch() const { return params.arch; }

  /// All weights and biases zero.
  static MlpModel zeros(const ArchSpec& arch);
  /// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
  static MlpModel glorot(const ArchSpec& arch, Rng& rng);
  /// Wraps existing parameters; throws ConfigError if the length is wrong.
  static MlpModel from_params(FlatParams params);
};

/// Intermediate values kept for backpropagation.
struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre;   // affine output of each layer
  std::vector<Matrix> post;  // ReLU(pre) for hidden layers, pre for the last
  Matrix output;             // after the output head
};

ForwardTrace forward_trace(const MlpModel& model, const Matrix& batch);
Matrix forward(const MlpModel& model, const Matrix& batch);

struct Backprop {
  std::vector<double> param_grad;
  Matrix input_grad;
};

/// Gradients given dL/d(output) where output is taken after the head.
Backprop backward(const MlpModel& model, const ForwardTrace& trace, const Matrix& output_grad);

/// Gradients given dL/d(final affine output), bypassing the head.
Backprop backward_from_logits(const MlpModel& model, const ForwardTrace& trace,
                              const Matrix& logit_grad);

struct LossAndGrad {
  double loss = 0.0;
  FlatParams grad;
};

/// Mean softmax cross-entropy over the batch, computed on the final affine
/// outputs. Throws NumericError naming the first layer that went non-finite.
LossAndGrad backward_ce(const MlpModel& model, const Matrix& batch, std::span<const int> labels);

double cross_entropy(const MlpModel& model, const Matrix& batch, std::span<const int> labels);

/// Row-wise argmax of the final affine outputs.
std::vector<int> predict(const MlpModel& model, const Matrix& batch);

/// In-place softmax with max subtraction.
void softmax_inplace(std::span<double> row);

/// Mini-batch SGD for cfg.epochs passes over (features, labels). Each epoch
/// reshuffles; the final short batch is kept. Weight decay adds
/// weight_decay * theta to the gradient.
void sgd_train(MlpModel& model, const Matrix& features, std::span<const int> labels,
               const SgdConfig& cfg, Rng& rng);

/// Rows `indices` of `m`.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

}  // namespace fedaa
