#include "kgf/model.hpp"

#include <cmath>
#include <numeric>

#include "kgf/errors.hpp"

namespace kgf {

std::string to_string(KernelMode m) {
  return m == KernelMode::kApproximate ? "approximate" : "full_exponential";
}

std::string to_string(NoiseMode m) {
  switch (m) {
    case NoiseMode::kPerForward:
      return "per_forward";
    case NoiseMode::kFixedSeed:
      return "fixed_seed";
    case NoiseMode::kDisabled:
      return "disabled";
  }
  return "?";
}

KernelMode parse_kernel_mode(const std::string& s) {
  if (s == "approximate") return KernelMode::kApproximate;
  if (s == "full_exponential") return KernelMode::kFullExponential;
  throw ConfigError("unknown kernel mode '" + s + "' (approximate | full_exponential)");
}

NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "per_forward") return NoiseMode::kPerForward;
  if (s == "fixed_seed") return NoiseMode::kFixedSeed;
  if (s == "disabled") return NoiseMode::kDisabled;
  throw ConfigError("unknown noise mode '" + s + "' (per_forward | fixed_seed | disabled)");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be at least 1");
  };
  positive(hidden_dim, "hidden_dim");
  positive(attention_layers, "attention_layers");
  positive(query_layers, "query_layers");
  positive(value_layers, "value_layers");
  positive(mlp_depth, "mlp_depth");
  positive(ffn_depth, "ffn_depth");
  positive(ffn_expansion, "ffn_expansion");
  positive(scorer_depth, "scorer_depth");
  positive(heads, "heads");
}

// ---------------------------------------------------------------------------
// Parameters

ModelParams::ModelParams(const ModelConfig& config, std::size_t num_relations, Rng& rng)
    : config_(config), num_relations_(num_relations) {
  config_.validate();
  if (num_relations == 0) throw ConfigError("model needs at least one relation");
  const std::size_t d = config_.hidden_dim;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  relations = make("relations", normal_tensor(num_relations, d, rng, stddev));
  for (std::size_t l = 0; l < config_.attention_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    LayerParams layer;
    layer.query_net = make_rmpnn(p + "query", config_.query_layers, rng);
    layer.value_net = make_rmpnn(p + "value", config_.value_layers, rng);
    for (std::size_t h = 0; h < config_.heads; ++h) {
      const std::string hp = p + "attn.head" + std::to_string(h) + ".";
      layer.heads.push_back({make_linear(hp + "query", d, d, rng), make_linear(hp + "key", d, d, rng)});
    }
    if (config_.heads > 1) layer.head_merge = make_linear(p + "attn.merge", config_.heads * d, d, rng);
    layer.norm1_gain = make(p + "norm1.gain", Tensor::ones(1, d));
    layer.norm1_bias = make(p + "norm1.bias", Tensor::zeros(1, d));
    std::vector<std::size_t> widths{d};
    for (std::size_t k = 1; k < config_.ffn_depth; ++k) widths.push_back(config_.ffn_expansion * d);
    widths.push_back(d);
    layer.ffn = make_mlp(p + "ffn", widths, rng);
    layer.norm2_gain = make(p + "norm2.gain", Tensor::ones(1, d));
    layer.norm2_bias = make(p + "norm2.bias", Tensor::zeros(1, d));
    layers.push_back(std::move(layer));
  }
  std::vector<std::size_t> widths(config_.scorer_depth, d);
  widths.push_back(1);
  scorer = make_mlp("scorer", widths, rng);
}

Parameter* ModelParams::make(const std::string& name, Tensor value) {
  store_.push_back(std::make_unique<Parameter>(name, std::move(value)));
  registry_.push_back(store_.back().get());
  return registry_.back();
}

Linear ModelParams::make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(config_.hidden_dim));
  Linear lin;
  lin.weight = make(name + ".weight", normal_tensor(in, out, rng, stddev));
  lin.bias = make(name + ".bias", Tensor::zeros(1, out));
  return lin;
}

Mlp ModelParams::make_mlp(const std::string& name, std::vector<std::size_t> widths, Rng& rng) {
  Mlp mlp;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    mlp.layers.push_back(make_linear(name + "." + std::to_string(k), widths[k], widths[k + 1], rng));
  }
  return mlp;
}

RmpnnParams ModelParams::make_rmpnn(const std::string& name, std::size_t depth, Rng& rng) {
  const std::size_t d = config_.hidden_dim;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(d));
  RmpnnParams p;
  p.input = make_linear(name + ".input", 2 * d, d, rng);
  p.relation_weight = make(name + ".relation_weight", normal_tensor(d, num_relations_ * d, rng, stddev));
  p.relation_bias = make(name + ".relation_bias", Tensor::zeros(num_relations_, d));
  for (std::size_t l = 0; l < depth; ++l) {
    const std::string lp = name + ".layer" + std::to_string(l);
    p.retain.push_back(make(lp + ".retain", Tensor::ones(1, d)));
    p.update.push_back(make_mlp(lp + ".update", std::vector<std::size_t>(config_.mlp_depth + 1, d), rng));
  }
  return p;
}

Parameter& ModelParams::find(const std::string& name) const {
  for (Parameter* p : registry_) {
    if (p->name == name) return *p;
  }
  throw ContractError("no parameter named '" + name + "'");
}

std::size_t ModelParams::count() const {
  std::size_t n = 0;
  for (const Parameter* p : registry_) n += p->value.size();
  return n;
}

void ModelParams::zero_grad() const {
  for (Parameter* p : registry_) p->zero_grad();
}

void ModelParams::randomize_all(Rng& rng, double stddev) const {
  for (Parameter* p : registry_) p->value = normal_tensor(p->value.rows(), p->value.cols(), rng, stddev);
}

// ---------------------------------------------------------------------------
// Blocks

Var apply_linear(Tape& tape, const Linear& lin, Var x) {
  return add(matmul(x, tape.param(*lin.weight)), tape.param(*lin.bias));
}

Var apply_mlp(Tape& tape, const Mlp& mlp, Var x) {
  for (std::size_t k = 0; k < mlp.layers.size(); ++k) {
    x = apply_linear(tape, mlp.layers[k], x);
    if (k + 1 < mlp.layers.size()) x = relu(x);
  }
  return x;
}

Var relation_vectors(Tape& tape, const RmpnnParams& p, Var relations, RelationId query_relation) {
  const std::size_t num_rel = relations.rows();
  const std::size_t d = relations.cols();
  if (query_relation < 0 || static_cast<std::size_t>(query_relation) >= num_rel) {
    throw GraphError("query relation " + std::to_string(query_relation) + " out of range");
  }
  Var rq = gather_rows(relations, {static_cast<std::size_t>(query_relation)});
  Var flat = matmul(rq, tape.param(*p.relation_weight));
  return add(reshape(flat, num_rel, d), tape.param(*p.relation_bias));
}

Var relational_message(Var z, Var relation_vector) { return mul(z, relation_vector); }

Var rmpnn_forward(Tape& tape, const RmpnnParams& p, Var x, const Tensor& init_feature,
                  Var relations, RelationId query_relation,
                  const std::shared_ptr<const EdgeArrays>& edges) {
  Var z = apply_linear(tape, p.input, concat_columns(x, tape.constant(init_feature)));
  Var rhat = relation_vectors(tape, p, relations, query_relation);
  for (std::size_t l = 0; l < p.update.size(); ++l) {
    Var agg = relational_aggregate(z, rhat, edges);
    z = apply_mlp(tape, p.update[l], add(mul(z, tape.param(*p.retain[l])), agg));
  }
  return z;
}

Var qrmpnn_forward(Tape& tape, const RmpnnParams& p, Var x, const Tensor* noise, Var relations,
                   RelationId query_relation, const std::shared_ptr<const EdgeArrays>& edges) {
  if (noise != nullptr) {
    if (noise->shape() != x.shape()) {
      throw DimensionError("qrmpnn_forward: noise " + to_string(noise->shape()) + " vs features " +
                           to_string(x.shape()));
    }
    return rmpnn_forward(tape, p, x, *noise, relations, query_relation, edges);
  }
  return rmpnn_forward(tape, p, x, Tensor(x.rows(), x.cols()), relations, query_relation, edges);
}

Var vrmpnn_forward(Tape& tape, const RmpnnParams& p, Var x, EntityId head, Var relations,
                   RelationId query_relation, const std::shared_ptr<const EdgeArrays>& edges) {
  if (head < 0 || static_cast<std::size_t>(head) >= x.rows()) {
    throw GraphError("head entity " + std::to_string(head) + " out of range");
  }
  Tensor label(x.rows(), x.cols());
  for (double& v : label.row(static_cast<std::size_t>(head))) v = 1.0;
  return rmpnn_forward(tape, p, x, label, relations, query_relation, edges);
}

double approximate_kernel(std::span<const double> q, std::span<const double> k) {
  return 1.0 + std::inner_product(q.begin(), q.end(), k.begin(), 0.0);
}

double exponential_kernel(std::span<const double> q, std::span<const double> k) {
  return std::exp(std::inner_product(q.begin(), q.end(), k.begin(), 0.0));
}

Var linear_attention(Tape& tape, Var query_repr, Var value_repr, const AttentionHead& head) {
  const std::size_t n = query_repr.rows();
  if (value_repr.rows() != n) {
    throw DimensionError("linear_attention: query " + to_string(query_repr.shape()) + " vs value " +
                         to_string(value_repr.shape()));
  }
  if (n == 0) return tape.constant(Tensor(0, value_repr.cols()));
  const double inv_n = 1.0 / static_cast<double>(n);
  Var q = row_l2_normalize(apply_linear(tape, head.query, query_repr));
  Var k = row_l2_normalize(apply_linear(tape, head.key, query_repr));
  Var k_sum = sum_rows(k);                                         // 1 x d
  Var qk = matmul(q, transpose(k_sum));                            // n x 1
  Var denom = add_scalar(scale(qk, inv_n), 2.0);                   // 1 + (qk + n)/n
  Var kv = matmul(transpose(k), value_repr);                       // d x d
  Var mixed = add(matmul(q, kv), sum_rows(value_repr));            // Q(K^T V) + 1^T V
  Var numer = add(value_repr, scale(mixed, inv_n));
  return div_rows(numer, denom);
}

Var dense_attention(Tape& tape, Var query_repr, Var value_repr, const AttentionHead& head,
                    KernelMode kernel) {
  const std::size_t n = query_repr.rows();
  if (n > kDenseAttentionLimit) {
    throw OracleScopeError("dense attention refuses " + std::to_string(n) + " entities (limit " +
                           std::to_string(kDenseAttentionLimit) + ")");
  }
  if (n == 0) return tape.constant(Tensor(0, value_repr.cols()));
  Var q = row_l2_normalize(apply_linear(tape, head.query, query_repr));
  Var k = row_l2_normalize(apply_linear(tape, head.key, query_repr));
  Var s = matmul(q, transpose(k));
  Var kern = kernel == KernelMode::kApproximate ? add_scalar(s, 1.0) : exp(s);
  const double nn = static_cast<double>(n);
  Var numer = add(matmul(kern, value_repr), scale(value_repr, nn));
  Var denom = add_scalar(sum_cols(kern), nn);
  return div_rows(numer, denom);
}

DenseAttentionResult dense_attention_oracle(const Tensor& query_repr, const Tensor& value_repr,
                                            const AttentionHead& head, KernelMode kernel) {
  const std::size_t n = query_repr.rows();
  if (n > kDenseAttentionLimit) {
    throw OracleScopeError("dense_attention_oracle refuses " + std::to_string(n) +
                           " entities (limit " + std::to_string(kDenseAttentionLimit) + ")");
  }
  if (value_repr.rows() != n) {
    throw DimensionError("dense_attention_oracle: query " + to_string(query_repr.shape()) +
                         " vs value " + to_string(value_repr.shape()));
  }
  const std::size_t d_in = query_repr.cols();
  auto project = [&](const Linear& lin) {
    const Tensor& w = lin.weight->value;
    const Tensor& b = lin.bias->value;
    const std::size_t d_out = w.cols();
    Tensor out(n, d_out);
    for (std::size_t u = 0; u < n; ++u) {
      double norm2 = 0.0;
      for (std::size_t c = 0; c < d_out; ++c) {
        double acc = b[c];
        for (std::size_t k = 0; k < d_in; ++k) acc += query_repr(u, k) * w(k, c);
        out(u, c) = acc;
        norm2 += acc * acc;
      }
      const double inv = 1.0 / std::sqrt(norm2 + 1e-12);
      for (std::size_t c = 0; c < d_out; ++c) out(u, c) *= inv;
    }
    return out;
  };
  const Tensor q = project(head.query);
  const Tensor k = project(head.key);

  DenseAttentionResult res{Tensor(n, value_repr.cols()), Tensor(n, n)};
  const double self_weight = static_cast<double>(n);
  for (std::size_t u = 0; u < n; ++u) {
    double total = 0.0;
    for (std::size_t v = 0; v < n; ++v) {
      double w = kernel == KernelMode::kApproximate ? approximate_kernel(q.row(u), k.row(v))
                                                    : exponential_kernel(q.row(u), k.row(v));
      if (u == v) w += self_weight;
      res.attention(u, v) = w;
      total += w;
    }
    for (std::size_t v = 0; v < n; ++v) res.attention(u, v) /= total;
    for (std::size_t v = 0; v < n; ++v) {
      const double a = res.attention(u, v);
      for (std::size_t c = 0; c < value_repr.cols(); ++c) res.output(u, c) += a * value_repr(v, c);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Stack

LayerOutput transformer_layer(Tape& tape, const ModelParams& params, std::size_t layer, Var x,
                              Var relations, const ForwardInputs& in) {
  const ModelConfig& cfg = params.config();
  const LayerParams& lp = params.layers.at(layer);
  const Tensor* noise = in.noise.empty() ? nullptr : &in.noise[layer];

  LayerOutput out;
  out.query_repr = qrmpnn_forward(tape, lp.query_net, x, noise, relations, in.relation, in.edges);
  out.value_repr = vrmpnn_forward(tape, lp.value_net, x, in.head, relations, in.relation, in.edges);

  auto attend = [&](const AttentionHead& h) {
    return cfg.kernel == KernelMode::kApproximate
               ? linear_attention(tape, out.query_repr, out.value_repr, h)
               : dense_attention(tape, out.query_repr, out.value_repr, h, cfg.kernel);
  };
  if (lp.heads.size() == 1) {
    out.attention_out = attend(lp.heads.front());
  } else {
    Var merged = attend(lp.heads.front());
    for (std::size_t h = 1; h < lp.heads.size(); ++h) merged = concat_columns(merged, attend(lp.heads[h]));
    out.attention_out = apply_linear(tape, *lp.head_merge, merged);
  }

  Var a = layer_norm(add(x, out.attention_out), tape.param(*lp.norm1_gain), tape.param(*lp.norm1_bias));
  out.x = layer_norm(add(a, apply_mlp(tape, lp.ffn, a)), tape.param(*lp.norm2_gain),
                     tape.param(*lp.norm2_bias));
  return out;
}

ForwardState forward(Tape& tape, const ModelParams& params, const ForwardInputs& in) {
  const ModelConfig& cfg = params.config();
  const std::size_t n = in.num_entities;
  const std::size_t d = cfg.hidden_dim;
  if (!in.edges) throw ContractError("forward: missing edge arrays");
  if (!in.noise.empty() && in.noise.size() != cfg.attention_layers) {
    throw ContractError("forward: expected " + std::to_string(cfg.attention_layers) +
                        " noise matrices, got " + std::to_string(in.noise.size()));
  }
  if (cfg.kernel == KernelMode::kFullExponential && n > kDenseAttentionLimit) {
    throw OracleScopeError("full_exponential kernel refuses " + std::to_string(n) + " entities");
  }

  ForwardState st;
  if (in.features != nullptr) {
    if (in.features->shape() != Shape{n, d}) {
      throw DimensionError("forward: features " + to_string(in.features->shape()) + " expected " +
                           to_string(Shape{n, d}));
    }
    st.x.push_back(tape.constant(*in.features));
  } else {
    st.x.push_back(tape.constant(Tensor(n, d)));
  }
  Var relations = tape.param(*params.relations);
  for (std::size_t l = 0; l < cfg.attention_layers; ++l) {
    LayerOutput lo = transformer_layer(tape, params, l, st.x.back(), relations, in);
    st.query_repr.push_back(lo.query_repr);
    st.value_repr.push_back(lo.value_repr);
    st.attention_out.push_back(lo.attention_out);
    st.x.push_back(lo.x);
  }
  st.logits = apply_mlp(tape, params.scorer, st.x.back());
  st.scores = sigmoid(st.logits);
  return st;
}

std::vector<Tensor> draw_noise(const ModelConfig& config, std::size_t num_entities, Rng& rng) {
  std::vector<Tensor> out;
  if (config.noise == NoiseMode::kDisabled) return out;
  for (std::size_t l = 0; l < config.attention_layers; ++l) {
    out.push_back(normal_tensor(num_entities, config.hidden_dim, rng));
  }
  return out;
}

std::vector<double> score_all(const ModelParams& params, const ForwardInputs& in) {
  Tape tape(false);
  ForwardState st = forward(tape, params, in);
  const Tensor& s = st.scores.value();
  return {s.values().begin(), s.values().end()};
}

}  // namespace kgf
