#include "fomo/model.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "fomo/errors.hpp"
#include "fomo/rng.hpp"

namespace fomo {

std::string_view to_string(ArchKind kind) {
  return kind == ArchKind::kSoftmaxLinear ? "softmax_linear" : "mlp_one_hidden";
}

ArchKind parse_arch(std::string_view name) {
  if (name == "softmax_linear") return ArchKind::kSoftmaxLinear;
  if (name == "mlp_one_hidden") return ArchKind::kMlpOneHidden;
  throw ValidationError(fmt::format("unknown architecture '{}'", name));
}

std::vector<LayerShape> Architecture::layers() const {
  std::vector<LayerShape> out;
  std::size_t offset = 0;
  auto add = [&](std::size_t in, std::size_t outs) {
    LayerShape l;
    l.fan_in = in;
    l.fan_out = outs;
    l.weight_offset = offset;
    offset += in * outs;
    l.bias_offset = offset;
    offset += outs;
    out.push_back(l);
  };
  if (kind == ArchKind::kSoftmaxLinear) {
    add(n_features, n_classes);
  } else {
    add(n_features, hidden_units);
    add(hidden_units, n_classes);
  }
  return out;
}

std::size_t Architecture::param_count() const {
  if (kind == ArchKind::kSoftmaxLinear) return (n_features + 1) * n_classes;
  return (n_features + 1) * hidden_units + (hidden_units + 1) * n_classes;
}

void Architecture::validate() const {
  if (n_features == 0 || n_classes == 0) {
    throw ValidationError("architecture dimensions must be positive");
  }
  if (kind == ArchKind::kMlpOneHidden && hidden_units == 0) {
    throw ValidationError("mlp_one_hidden needs hidden_units > 0");
  }
}

ParamVector init_params(const Architecture& arch, std::uint64_t seed) {
  arch.validate();
  Rng rng = make_rng(seed, "init_params");
  std::vector<double> values(arch.param_count(), 0.0);
  for (const auto& layer : arch.layers()) {
    const double limit = std::sqrt(
        6.0 / static_cast<double>(layer.fan_in + layer.fan_out));
    for (std::size_t i = 0; i < layer.fan_in * layer.fan_out; ++i) {
      values[layer.weight_offset + i] = limit * (2.0 * uniform01(rng) - 1.0);
    }
  }
  return ParamVector(std::move(values));
}

namespace {

void dense(std::span<const double> params, const LayerShape& l,
           std::span<const double> in, std::vector<double>& out) {
  out.resize(l.fan_out);
  const double* w = params.data() + l.weight_offset;
  const double* b = params.data() + l.bias_offset;
  for (std::size_t o = 0; o < l.fan_out; ++o) {
    double acc = b[o];
    const double* row = w + o * l.fan_in;
    for (std::size_t i = 0; i < l.fan_in; ++i) acc += row[i] * in[i];
    out[o] = acc;
  }
}

void require_finite(const std::vector<double>& v, const char* layer) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(
          fmt::format("non-finite activations in layer '{}'", layer));
    }
  }
}

/// Forward pass; leaves logits in ws.logits and returns the log-sum-exp.
double forward(std::span<const double> params, const Architecture& arch,
               std::span<const double> x, Workspace& ws) {
  const auto layers = arch.layers();
  if (arch.kind == ArchKind::kSoftmaxLinear) {
    dense(params, layers[0], x, ws.logits);
  } else {
    dense(params, layers[0], x, ws.hidden);
    for (auto& h : ws.hidden) h = std::tanh(h);
    require_finite(ws.hidden, "hidden");
    dense(params, layers[1], ws.hidden, ws.logits);
  }
  require_finite(ws.logits, "output");
  const double peak = *std::max_element(ws.logits.begin(), ws.logits.end());
  double sum = 0.0;
  for (double z : ws.logits) sum += std::exp(z - peak);
  return peak + std::log(sum);
}

void check_sample(const Architecture& arch, std::span<const double> x,
                  int label) {
  if (x.size() != arch.n_features) {
    throw StructuralError(fmt::format("sample has {} features, model expects {}",
                                      x.size(), arch.n_features));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= arch.n_classes) {
    throw StructuralError(fmt::format("label {} outside model's {} classes",
                                      label, arch.n_classes));
  }
}

}  // namespace

double example_loss(std::span<const double> params, const Architecture& arch,
                    std::span<const double> features, int label,
                    Workspace& ws, int* predicted) {
  check_sample(arch, features, label);
  const double lse = forward(params, arch, features, ws);
  if (predicted) {
    *predicted = static_cast<int>(
        std::max_element(ws.logits.begin(), ws.logits.end()) -
        ws.logits.begin());
  }
  return lse - ws.logits[static_cast<std::size_t>(label)];
}

double example_loss_grad(std::span<const double> params,
                         const Architecture& arch,
                         std::span<const double> features, int label,
                         std::span<double> grad, Workspace& ws) {
  check_sample(arch, features, label);
  const double lse = forward(params, arch, features, ws);
  const auto y = static_cast<std::size_t>(label);
  const double loss = lse - ws.logits[y];

  // d loss / d logits = softmax - onehot
  ws.delta_out.resize(arch.n_classes);
  for (std::size_t c = 0; c < arch.n_classes; ++c) {
    ws.delta_out[c] = std::exp(ws.logits[c] - lse) - (c == y ? 1.0 : 0.0);
  }

  const auto layers = arch.layers();
  const LayerShape& top = layers.back();
  std::span<const double> top_input =
      arch.kind == ArchKind::kSoftmaxLinear
          ? features
          : std::span<const double>(ws.hidden);
  for (std::size_t o = 0; o < top.fan_out; ++o) {
    const double d = ws.delta_out[o];
    double* row = grad.data() + top.weight_offset + o * top.fan_in;
    for (std::size_t i = 0; i < top.fan_in; ++i) row[i] = d * top_input[i];
    grad[top.bias_offset + o] = d;
  }

  if (arch.kind == ArchKind::kMlpOneHidden) {
    const LayerShape& bottom = layers.front();
    ws.delta_hidden.assign(bottom.fan_out, 0.0);
    const double* w2 = params.data() + top.weight_offset;
    for (std::size_t o = 0; o < top.fan_out; ++o) {
      const double d = ws.delta_out[o];
      const double* row = w2 + o * top.fan_in;
      for (std::size_t h = 0; h < top.fan_in; ++h) {
        ws.delta_hidden[h] += row[h] * d;
      }
    }
    for (std::size_t h = 0; h < bottom.fan_out; ++h) {
      const double a = ws.hidden[h];
      const double d = ws.delta_hidden[h] * (1.0 - a * a);
      double* row = grad.data() + bottom.weight_offset + h * bottom.fan_in;
      for (std::size_t i = 0; i < bottom.fan_in; ++i) row[i] = d * features[i];
      grad[bottom.bias_offset + h] = d;
    }
  }
  return loss;
}

LossAndGrad loss_and_grad(const ParamVector& params, const Architecture& arch,
                          const Dataset& data,
                          std::span<const std::size_t> batch) {
  if (batch.empty()) throw ValidationError("loss_and_grad: empty batch");
  if (params.dim() != arch.param_count()) {
    throw StructuralError(fmt::format(
        "loss_and_grad: {} parameters for an architecture of {}",
        params.dim(), arch.param_count()));
  }
  Workspace ws;
  std::vector<double> sum(params.dim(), 0.0);
  std::vector<double> g(params.dim());
  double loss = 0.0;
  for (std::size_t idx : batch) {
    loss += example_loss_grad(params.values(), arch, data.row(idx),
                              data.labels[idx], g, ws);
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += g[j];
  }
  const auto n = static_cast<double>(batch.size());
  for (auto& v : sum) v /= n;
  LossAndGrad out;
  out.loss = loss / n;
  out.gradient = ParamVector(std::move(sum));
  return out;
}

EvalResult evaluate(const ParamVector& params, const Architecture& arch,
                    const Dataset& data, std::span<const std::size_t> split) {
  if (split.empty()) throw ValidationError("evaluate: empty split");
  if (params.dim() != arch.param_count()) {
    throw StructuralError(fmt::format(
        "evaluate: {} parameters for an architecture of {}", params.dim(),
        arch.param_count()));
  }
  Workspace ws;
  EvalResult r;
  double loss = 0.0;
  for (std::size_t idx : split) {
    int predicted = -1;
    loss += example_loss(params.values(), arch, data.row(idx), data.labels[idx],
                         ws, &predicted);
    if (predicted == data.labels[idx]) ++r.correct;
  }
  r.n_samples = split.size();
  r.loss = loss / static_cast<double>(split.size());
  r.accuracy =
      static_cast<double>(r.correct) / static_cast<double>(r.n_samples);
  return r;
}

}  // namespace fomo
