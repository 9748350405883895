#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "protodiag/errors.hpp"
#include "protodiag/rng.hpp"

namespace protodiag {

// Shape of the state encoder: affine+ReLU hidden layers, affine output. The
// output is the embedding space shared by Q-heads and prototypes.
struct EncoderConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims{128};
  int output_dim = 64;

  std::vector<int> layer_dims() const {
    std::vector<int> dims{input_dim};
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(output_dim);
    return dims;
  }
  bool operator==(const EncoderConfig&) const = default;
};

// One affine layer, weights row-major (out x in).
struct DenseLayer {
  int in = 0;
  int out = 0;
  std::vector<double> w;
  std::vector<double> b;

  bool operator==(const DenseLayer&) const = default;
};

struct EncoderParams {
  EncoderConfig config;
  std::vector<DenseLayer> layers;

  bool operator==(const EncoderParams&) const = default;
};

// Same layout as EncoderParams, holding dL/dtheta.
struct GradBundle {
  std::vector<DenseLayer> layers;
};

struct OptConfig {
  double learning_rate = 1e-3;
  double momentum = 0.0;
};

inline void check_dims(const EncoderConfig& cfg) {
  if (cfg.input_dim < 1 || cfg.output_dim < 1)
    throw RuntimeError("encoder: all dims must be >= 1");
  for (int h : cfg.hidden_dims)
    if (h < 1) throw RuntimeError("encoder: all dims must be >= 1");
}

// Glorot-uniform weights, zero biases; deterministic in the seed.
inline EncoderParams init_params(const EncoderConfig& cfg, std::uint64_t seed) {
  check_dims(cfg);
  EncoderParams p;
  p.config = cfg;
  Rng rng = make_rng(seed);
  const auto dims = cfg.layer_dims();
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.in = dims[l];
    layer.out = dims[l + 1];
    const double limit = std::sqrt(6.0 / (layer.in + layer.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.w.resize(static_cast<std::size_t>(layer.in) *
                   static_cast<std::size_t>(layer.out));
    for (auto& v : layer.w) v = dist(rng);
    layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline GradBundle zero_grads(const EncoderParams& p) {
  GradBundle g;
  for (const auto& layer : p.layers) {
    DenseLayer z;
    z.in = layer.in;
    z.out = layer.out;
    z.w.assign(layer.w.size(), 0.0);
    z.b.assign(layer.b.size(), 0.0);
    g.layers.push_back(std::move(z));
  }
  return g;
}

inline void accumulate(GradBundle& acc, const GradBundle& g, double scale = 1.0) {
  for (std::size_t l = 0; l < acc.layers.size(); ++l) {
    for (std::size_t i = 0; i < acc.layers[l].w.size(); ++i)
      acc.layers[l].w[i] += scale * g.layers[l].w[i];
    for (std::size_t i = 0; i < acc.layers[l].b.size(); ++i)
      acc.layers[l].b[i] += scale * g.layers[l].b[i];
  }
}

// Pre-activations and layer inputs from one forward pass; consumed by
// backward().
struct ForwardCache {
  std::vector<std::vector<double>> inputs;   // input to each layer
  std::vector<std::vector<double>> preacts;  // z = W x + b per layer
};

namespace detail {

inline std::vector<double> affine(const DenseLayer& layer,
                                  std::span<const double> x) {
  std::vector<double> z(static_cast<std::size_t>(layer.out));
  for (int o = 0; o < layer.out; ++o) {
    double acc = layer.b[static_cast<std::size_t>(o)];
    const double* row = layer.w.data() +
                        static_cast<std::size_t>(o) * static_cast<std::size_t>(layer.in);
    for (int i = 0; i < layer.in; ++i) acc += row[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(i)];
    z[static_cast<std::size_t>(o)] = acc;
  }
  return z;
}

}  // namespace detail

// Embedding of x, plus the cache backward() needs. Pure in (params, x).
inline std::vector<double> forward(const EncoderParams& params,
                                   std::span<const double> x,
                                   ForwardCache* cache = nullptr) {
  if (static_cast<int>(x.size()) != params.config.input_dim)
    throw RuntimeError("forward: input dim mismatch");
  std::vector<double> act(x.begin(), x.end());
  if (cache) {
    cache->inputs.clear();
    cache->preacts.clear();
  }
  const std::size_t n_layers = params.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    if (cache) cache->inputs.push_back(act);
    std::vector<double> z = detail::affine(params.layers[l], act);
    if (cache) cache->preacts.push_back(z);
    if (l + 1 < n_layers)
      for (auto& v : z) v = v > 0.0 ? v : 0.0;  // ReLU; identity on output
    act = std::move(z);
  }
  return act;
}

// Exact reverse-mode gradients. ReLU subgradient at 0 is defined as 0.
// Returns the parameter gradients and dL/dx.
inline std::pair<GradBundle, std::vector<double>> backward(
    const EncoderParams& params, const ForwardCache& cache,
    std::span<const double> grad_embedding) {
  if (cache.inputs.size() != params.layers.size())
    throw RuntimeError("backward: cache does not match params");
  GradBundle grads = zero_grads(params);
  std::vector<double> delta(grad_embedding.begin(), grad_embedding.end());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    const DenseLayer& layer = params.layers[l];
    if (static_cast<int>(delta.size()) != layer.out)
      throw RuntimeError("backward: gradient dim mismatch");
    // Hidden layers saw ReLU after the affine step.
    if (l + 1 < params.layers.size())
      for (int o = 0; o < layer.out; ++o)
        if (cache.preacts[l][static_cast<std::size_t>(o)] <= 0.0)
          delta[static_cast<std::size_t>(o)] = 0.0;
    const auto& input = cache.inputs[l];
    DenseLayer& g = grads.layers[l];
    std::vector<double> prev(static_cast<std::size_t>(layer.in), 0.0);
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      g.b[static_cast<std::size_t>(o)] += d;
      const std::size_t row = static_cast<std::size_t>(o) * static_cast<std::size_t>(layer.in);
      for (int i = 0; i < layer.in; ++i) {
        g.w[row + static_cast<std::size_t>(i)] += d * input[static_cast<std::size_t>(i)];
        prev[static_cast<std::size_t>(i)] += d * layer.w[row + static_cast<std::size_t>(i)];
      }
    }
    delta = std::move(prev);
  }
  return {std::move(grads), std::move(delta)};
}

namespace detail {

inline bool all_finite(const GradBundle& g) {
  for (const auto& layer : g.layers) {
    for (double v : layer.w)
      if (!std::isfinite(v)) return false;
    for (double v : layer.b)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace detail

// Plain SGD step: theta <- theta - lr * grad. Rejects non-finite gradients.
inline EncoderParams sgd_step(EncoderParams params, const GradBundle& grads,
                              const OptConfig& opt) {
  if (grads.layers.size() != params.layers.size())
    throw RuntimeError("sgd_step: shape mismatch");
  if (!detail::all_finite(grads))
    throw RuntimeError("sgd_step: non-finite gradient");
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    if (grads.layers[l].w.size() != params.layers[l].w.size() ||
        grads.layers[l].b.size() != params.layers[l].b.size())
      throw RuntimeError("sgd_step: shape mismatch");
    for (std::size_t i = 0; i < params.layers[l].w.size(); ++i)
      params.layers[l].w[i] -= opt.learning_rate * grads.layers[l].w[i];
    for (std::size_t i = 0; i < params.layers[l].b.size(); ++i)
      params.layers[l].b[i] -= opt.learning_rate * grads.layers[l].b[i];
  }
  return params;
}

// SGD with classical momentum, velocity kept across steps. With momentum 0
// each step equals sgd_step.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(OptConfig cfg) : cfg_(cfg) {
    if (cfg.learning_rate <= 0.0)
      throw RuntimeError("sgd: learning rate must be positive");
    if (cfg.momentum < 0.0 || cfg.momentum >= 1.0)
      throw RuntimeError("sgd: momentum must be in [0, 1)");
  }

  void step(EncoderParams& params, const GradBundle& grads) {
    if (!detail::all_finite(grads))
      throw RuntimeError("sgd: non-finite gradient");
    if (velocity_.layers.empty()) velocity_ = zero_grads(params);
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
      auto& vl = velocity_.layers[l];
      for (std::size_t i = 0; i < params.layers[l].w.size(); ++i) {
        vl.w[i] = cfg_.momentum * vl.w[i] + grads.layers[l].w[i];
        params.layers[l].w[i] -= cfg_.learning_rate * vl.w[i];
      }
      for (std::size_t i = 0; i < params.layers[l].b.size(); ++i) {
        vl.b[i] = cfg_.momentum * vl.b[i] + grads.layers[l].b[i];
        params.layers[l].b[i] -= cfg_.learning_rate * vl.b[i];
      }
    }
  }

  // Flat parameter blocks (Q-head rows, fallback embeddings) share the same
  // update rule; blocks are identified by a caller-chosen slot id.
  void step_block(std::size_t slot, std::vector<double>& param,
                  const std::vector<double>& grad) {
    for (double v : grad)
      if (!std::isfinite(v)) throw RuntimeError("sgd: non-finite gradient");
    if (blocks_.size() <= slot) blocks_.resize(slot + 1);
    auto& vel = blocks_[slot];
    if (vel.size() != param.size()) vel.assign(param.size(), 0.0);
    for (std::size_t i = 0; i < param.size(); ++i) {
      vel[i] = cfg_.momentum * vel[i] + grad[i];
      param[i] -= cfg_.learning_rate * vel[i];
    }
  }

  const OptConfig& config() const { return cfg_; }

 private:
  OptConfig cfg_;
  GradBundle velocity_;
  std::vector<std::vector<double>> blocks_;
};

// Deep copy used for target networks; later updates to the source never
// touch the snapshot.
inline EncoderParams snapshot(const EncoderParams& params) { return params; }

// Checks analytic gradients of loss_fn(f_enc(x)) against central finite
// differences over every parameter. loss_fn returns the loss and its gradient
// with respect to the embedding, and must be deterministic.
using EmbeddingLoss =
    std::function<std::pair<double, std::vector<double>>(const std::vector<double>&)>;

inline double finite_diff_check(const EncoderParams& params,
                                std::span<const double> x,
                                const EmbeddingLoss& loss_fn,
                                double h = 1e-4) {
  ForwardCache cache;
  std::vector<double> emb = forward(params, x, &cache);
  auto [loss, grad_emb] = loss_fn(emb);
  (void)loss;
  GradBundle analytic = backward(params, cache, grad_emb).first;

  EncoderParams probe = params;
  double max_rel = 0.0;
  auto eval = [&]() { return loss_fn(forward(probe, x)).first; };
  for (std::size_t l = 0; l < probe.layers.size(); ++l) {
    auto check_entry = [&](double& slot, double analytic_g) {
      const double saved = slot;
      slot = saved + h;
      const double up = eval();
      slot = saved - h;
      const double down = eval();
      slot = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double rel = std::abs(analytic_g - numeric) /
                         std::max(1e-8, std::abs(numeric));
      if (rel > max_rel) max_rel = rel;
    };
    for (std::size_t i = 0; i < probe.layers[l].w.size(); ++i)
      check_entry(probe.layers[l].w[i], analytic.layers[l].w[i]);
    for (std::size_t i = 0; i < probe.layers[l].b.size(); ++i)
      check_entry(probe.layers[l].b[i], analytic.layers[l].b[i]);
  }
  return max_rel;
}

// ---------------------------------------------------------------------------
// Parameter checkpointing. JSON with full-precision doubles; load(save(p))
// reproduces p exactly.
// ---------------------------------------------------------------------------

inline nlohmann::json encoder_to_json(const EncoderParams& p) {
  nlohmann::json j;
  j["config"] = {{"input_dim", p.config.input_dim},
                 {"hidden_dims", p.config.hidden_dims},
                 {"output_dim", p.config.output_dim}};
  j["layers"] = nlohmann::json::array();
  for (const auto& layer : p.layers)
    j["layers"].push_back(
        {{"in", layer.in}, {"out", layer.out}, {"w", layer.w}, {"b", layer.b}});
  return j;
}

inline EncoderParams encoder_from_json(const nlohmann::json& j) {
  EncoderParams p;
  try {
    p.config.input_dim = j.at("config").at("input_dim").get<int>();
    p.config.hidden_dims =
        j.at("config").at("hidden_dims").get<std::vector<int>>();
    p.config.output_dim = j.at("config").at("output_dim").get<int>();
    for (const auto& jl : j.at("layers")) {
      DenseLayer layer;
      layer.in = jl.at("in").get<int>();
      layer.out = jl.at("out").get<int>();
      layer.w = jl.at("w").get<std::vector<double>>();
      layer.b = jl.at("b").get<std::vector<double>>();
      p.layers.push_back(std::move(layer));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("encoder checkpoint: ") + e.what());
  }
  const auto dims = p.config.layer_dims();
  if (p.layers.size() + 1 != dims.size())
    throw DataError("encoder checkpoint: layer count mismatch");
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    if (layer.in != dims[l] || layer.out != dims[l + 1] ||
        layer.w.size() != static_cast<std::size_t>(layer.in) *
                              static_cast<std::size_t>(layer.out) ||
        layer.b.size() != static_cast<std::size_t>(layer.out))
      throw DataError("encoder checkpoint: layer shape mismatch");
    for (double v : layer.w)
      if (!std::isfinite(v)) throw DataError("encoder checkpoint: non-finite weight");
    for (double v : layer.b)
      if (!std::isfinite(v)) throw DataError("encoder checkpoint: non-finite bias");
  }
  return p;
}

}  // namespace protodiag
