#include "fedcl/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "fedcl/errors.hpp"

namespace fedcl {

namespace {

constexpr double kLogClamp = 1e-12;

double activate(double z, Activation act) {
  return act == Activation::Relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

// Derivative expressed through the activated value where possible; for relu
// the pre-activation sign decides (zero at the kink).
double activate_deriv(double z, double a, Activation act) {
  return act == Activation::Relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - a * a;
}

struct ForwardCache {
  // acts[0] is the input batch; acts[l+1] the activated output of layer l
  // (softmax for the last layer). pre[l] holds layer l's pre-activations.
  std::vector<Matrix> acts;
  std::vector<Matrix> pre;
};

ForwardCache run_forward(const MlpShape& shape, const ParamVector& params,
                         const Matrix& inputs) {
  validate_shape(shape);
  if (inputs.cols != shape.layer_sizes.front()) {
    throw DimensionError("forward: input column count does not match input dim");
  }
  if (params.size() != param_count(shape)) {
    throw DimensionError("forward: parameter vector length mismatch");
  }

  const int n = inputs.rows;
  const int layers = static_cast<int>(shape.layer_sizes.size()) - 1;
  ForwardCache cache;
  cache.acts.reserve(layers + 1);
  cache.pre.reserve(layers);
  cache.acts.push_back(inputs);

  std::size_t offset = 0;
  for (int l = 0; l < layers; ++l) {
    const int n_in = shape.layer_sizes[l];
    const int n_out = shape.layer_sizes[l + 1];
    const double* w = params.data() + offset;
    const double* b = w + static_cast<std::size_t>(n_in) * n_out;
    const Matrix& prev = cache.acts.back();

    Matrix z(n, n_out);
    for (int r = 0; r < n; ++r) {
      const double* x = prev.row(r);
      double* zr = z.row(r);
      for (int j = 0; j < n_out; ++j) {
        const double* wj = w + static_cast<std::size_t>(j) * n_in;
        double s = b[j];
        for (int i = 0; i < n_in; ++i) s += wj[i] * x[i];
        zr[j] = s;
      }
    }

    Matrix a(n, n_out);
    if (l == layers - 1) {
      // Softmax with per-row max subtraction.
      for (int r = 0; r < n; ++r) {
        const double* zr = z.row(r);
        double* ar = a.row(r);
        double zmax = zr[0];
        for (int j = 1; j < n_out; ++j) zmax = std::max(zmax, zr[j]);
        double sum = 0.0;
        for (int j = 0; j < n_out; ++j) {
          ar[j] = std::exp(zr[j] - zmax);
          sum += ar[j];
        }
        for (int j = 0; j < n_out; ++j) ar[j] /= sum;
      }
    } else {
      for (int r = 0; r < n; ++r) {
        const double* zr = z.row(r);
        double* ar = a.row(r);
        for (int j = 0; j < n_out; ++j) ar[j] = activate(zr[j], shape.activation);
      }
    }

    cache.pre.push_back(std::move(z));
    cache.acts.push_back(std::move(a));
    offset += static_cast<std::size_t>(n_in) * n_out + n_out;
  }
  return cache;
}

// Backprop from output deltas (already divided by batch size).
ParamVector run_backward(const MlpShape& shape, const ParamVector& params,
                         const ForwardCache& cache, Matrix delta) {
  const int n = delta.rows;
  const int layers = static_cast<int>(shape.layer_sizes.size()) - 1;
  ParamVector grad(params.size(), 0.0);

  for (int l = layers - 1; l >= 0; --l) {
    const int n_in = shape.layer_sizes[l];
    const int n_out = shape.layer_sizes[l + 1];
    const std::size_t offset = layer_offset(shape, l);
    double* gw = grad.data() + offset;
    double* gb = gw + static_cast<std::size_t>(n_in) * n_out;
    const Matrix& prev = cache.acts[l];

    for (int r = 0; r < n; ++r) {
      const double* dr = delta.row(r);
      const double* x = prev.row(r);
      for (int j = 0; j < n_out; ++j) {
        const double dj = dr[j];
        if (dj == 0.0) continue;
        double* gwj = gw + static_cast<std::size_t>(j) * n_in;
        for (int i = 0; i < n_in; ++i) gwj[i] += dj * x[i];
        gb[j] += dj;
      }
    }

    if (l > 0) {
      const double* w = params.data() + offset;
      const Matrix& z_prev = cache.pre[l - 1];
      Matrix next(n, n_in);
      for (int r = 0; r < n; ++r) {
        const double* dr = delta.row(r);
        double* nr = next.row(r);
        for (int i = 0; i < n_in; ++i) {
          double s = 0.0;
          for (int j = 0; j < n_out; ++j) {
            s += w[static_cast<std::size_t>(j) * n_in + i] * dr[j];
          }
          const double zi = z_prev.at(r, i);
          const double ai = cache.acts[l].at(r, i);
          nr[i] = s * activate_deriv(zi, ai, shape.activation);
        }
      }
      delta = std::move(next);
    }
  }
  return grad;
}

void check_labels(const MlpShape& shape, const Batch& batch) {
  if (batch.inputs.rows != static_cast<int>(batch.labels.size())) {
    throw DimensionError("batch: label count does not match input rows");
  }
  const int classes = shape.layer_sizes.back();
  for (int y : batch.labels) {
    if (y < 0 || y >= classes) throw DimensionError("batch: label out of range");
  }
}

void check_targets(const Matrix& inputs, const LogitTargets& targets, int classes) {
  if (targets.probabilities.rows != inputs.rows ||
      targets.probabilities.cols != classes) {
    throw DimensionError("targets: shape does not match batch/classes");
  }
}

}  // namespace

void validate_shape(const MlpShape& shape) {
  if (shape.layer_sizes.size() < 2) {
    throw ConfigError("MlpShape: needs at least input and output layer");
  }
  for (int s : shape.layer_sizes) {
    if (s < 1) throw ConfigError("MlpShape: layer sizes must be >= 1");
  }
}

std::size_t param_count(const MlpShape& shape) {
  validate_shape(shape);
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < shape.layer_sizes.size(); ++l) {
    const std::size_t n_in = shape.layer_sizes[l];
    const std::size_t n_out = shape.layer_sizes[l + 1];
    total += n_in * n_out + n_out;
  }
  return total;
}

std::size_t layer_offset(const MlpShape& shape, int layer) {
  std::size_t offset = 0;
  for (int l = 0; l < layer; ++l) {
    const std::size_t n_in = shape.layer_sizes[l];
    const std::size_t n_out = shape.layer_sizes[l + 1];
    offset += n_in * n_out + n_out;
  }
  return offset;
}

ParamVector init_params(const MlpShape& shape, Rng& rng) {
  validate_shape(shape);
  ParamVector params(param_count(shape), 0.0);
  std::size_t offset = 0;
  for (std::size_t l = 0; l + 1 < shape.layer_sizes.size(); ++l) {
    const std::size_t n_in = shape.layer_sizes[l];
    const std::size_t n_out = shape.layer_sizes[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(n_in + n_out));
    for (std::size_t i = 0; i < n_in * n_out; ++i) {
      params[offset + i] = rng.uniform(-limit, limit);
    }
    offset += n_in * n_out + n_out;  // biases stay zero
  }
  return params;
}

LogitTargets forward(const MlpShape& shape, const ParamVector& params,
                     const Matrix& inputs) {
  ForwardCache cache = run_forward(shape, params, inputs);
  return LogitTargets{std::move(cache.acts.back())};
}

double loss_hard(const MlpShape& shape, const ParamVector& params,
                 const Batch& batch) {
  check_labels(shape, batch);
  const LogitTargets out = forward(shape, params, batch.inputs);
  const int n = batch.inputs.rows;
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    total -= std::log(std::max(out.probabilities.at(r, batch.labels[r]), kLogClamp));
  }
  return total / n;
}

double loss_soft(const MlpShape& shape, const ParamVector& params,
                 const Matrix& inputs, const LogitTargets& targets) {
  const int classes = shape.layer_sizes.back();
  check_targets(inputs, targets, classes);
  const LogitTargets out = forward(shape, params, inputs);
  const int n = inputs.rows;
  double total = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < classes; ++c) {
      const double q = targets.probabilities.at(r, c);
      if (q != 0.0) {
        total -= q * std::log(std::max(out.probabilities.at(r, c), kLogClamp));
      }
    }
  }
  return total / n;
}

ParamVector grad_hard(const MlpShape& shape, const ParamVector& params,
                      const Batch& batch) {
  check_labels(shape, batch);
  ForwardCache cache = run_forward(shape, params, batch.inputs);
  const Matrix& probs = cache.acts.back();
  const int n = batch.inputs.rows;
  const int classes = shape.layer_sizes.back();

  Matrix delta(n, classes);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < classes; ++c) {
      const double q = (c == batch.labels[r]) ? 1.0 : 0.0;
      delta.at(r, c) = (probs.at(r, c) - q) / n;
    }
  }
  return run_backward(shape, params, cache, std::move(delta));
}

ParamVector grad_soft(const MlpShape& shape, const ParamVector& params,
                      const Matrix& inputs, const LogitTargets& targets) {
  const int classes = shape.layer_sizes.back();
  check_targets(inputs, targets, classes);
  ForwardCache cache = run_forward(shape, params, inputs);
  const Matrix& probs = cache.acts.back();
  const int n = inputs.rows;

  Matrix delta(n, classes);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < classes; ++c) {
      delta.at(r, c) = (probs.at(r, c) - targets.probabilities.at(r, c)) / n;
    }
  }
  return run_backward(shape, params, cache, std::move(delta));
}

double accuracy(const MlpShape& shape, const ParamVector& params,
                const Batch& batch) {
  check_labels(shape, batch);
  const LogitTargets out = forward(shape, params, batch.inputs);
  const int n = batch.inputs.rows;
  const int classes = shape.layer_sizes.back();
  int hits = 0;
  for (int r = 0; r < n; ++r) {
    int best = 0;
    for (int c = 1; c < classes; ++c) {
      if (out.probabilities.at(r, c) > out.probabilities.at(r, best)) best = c;
    }
    if (best == batch.labels[r]) ++hits;
  }
  return static_cast<double>(hits) / n;
}

}  // namespace fedcl
