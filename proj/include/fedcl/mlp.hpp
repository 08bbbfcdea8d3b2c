#pragma once

#include <cstddef>
#include <vector>

#include "fedcl/matrix.hpp"
#include "fedcl/rng.hpp"

namespace fedcl {

enum class Activation { Relu, Tanh };

/// Layer widths of a fully connected net: input dim, hidden dims..., class
/// count. Hidden layers use `activation`; the output layer is softmax.
struct MlpShape {
  std::vector<int> layer_sizes;
  Activation activation = Activation::Relu;
};

/// Flat, ordered view of all model weights; the common currency of
/// gradients, knowledge entries, and aggregation slices.
///
/// Layout, fixed because knowledge entries index into it: for each layer l
/// (0-based, mapping layer_sizes[l] -> layer_sizes[l+1]), the weight matrix
/// row-major with one row per output unit, followed by that layer's biases.
/// Blocks are concatenated in layer order.
using ParamVector = std::vector<double>;

struct Batch {
  Matrix inputs;            // n x input_dim
  std::vector<int> labels;  // n entries, each in [0, class count)
};

/// Row-stochastic predictions: one probability row per input row.
struct LogitTargets {
  Matrix probabilities;
};

void validate_shape(const MlpShape& shape);

std::size_t param_count(const MlpShape& shape);

/// Offset of layer l's block in the flat vector.
std::size_t layer_offset(const MlpShape& shape, int layer);

/// Glorot-uniform weights (+-sqrt(6/(fan_in+fan_out))) drawn in layout
/// order from `rng`; biases start at zero.
ParamVector init_params(const MlpShape& shape, Rng& rng);

LogitTargets forward(const MlpShape& shape, const ParamVector& params,
                     const Matrix& inputs);

/// Mean negative log-likelihood of the true labels. Probabilities are
/// clamped at 1e-12 before the log so confident mistakes stay finite.
double loss_hard(const MlpShape& shape, const ParamVector& params,
                 const Batch& batch);

/// Mean cross-entropy -sum q log p against fixed target distributions q.
double loss_soft(const MlpShape& shape, const ParamVector& params,
                 const Matrix& inputs, const LogitTargets& targets);

ParamVector grad_hard(const MlpShape& shape, const ParamVector& params,
                      const Batch& batch);

/// Gradient of loss_soft with the targets held constant.
ParamVector grad_soft(const MlpShape& shape, const ParamVector& params,
                      const Matrix& inputs, const LogitTargets& targets);

/// Top-1 accuracy; argmax ties resolve to the lowest class index.
double accuracy(const MlpShape& shape, const ParamVector& params,
                const Batch& batch);

}  // namespace fedcl
