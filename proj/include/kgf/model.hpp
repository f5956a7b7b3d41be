#pragma once
// The knowledge-graph transformer: query/value relational message passing,
// kernelized linear attention, the transformer stack and the tail scorer.
//
// Shapes: n = number of entities, d = hidden_dim, |R| = number of
// (inverse-augmented) relations. Every entity matrix is n x d.

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgf/autodiff.hpp"
#include "kgf/kg.hpp"
#include "kgf/rng.hpp"

namespace kgf {

enum class KernelMode { kApproximate, kFullExponential };
enum class NoiseMode { kPerForward, kFixedSeed, kDisabled };

std::string to_string(KernelMode m);
std::string to_string(NoiseMode m);
KernelMode parse_kernel_mode(const std::string& s);
NoiseMode parse_noise_mode(const std::string& s);

struct ModelConfig {
  std::size_t hidden_dim = 32;
  std::size_t attention_layers = 2;  // transformer layers L
  std::size_t query_layers = 2;      // Q-RMPNN depth
  std::size_t value_layers = 2;      // V-RMPNN depth
  std::size_t mlp_depth = 3;         // update networks inside each RMPNN layer
  std::size_t ffn_depth = 2;
  std::size_t ffn_expansion = 4;     // FFN hidden width = ffn_expansion * d
  std::size_t scorer_depth = 2;
  std::size_t heads = 1;             // > 1 is experimental
  KernelMode kernel = KernelMode::kApproximate;
  NoiseMode noise = NoiseMode::kPerForward;

  /// Throws ConfigError on zero depths/dims.
  void validate() const;
};

/// Largest graph the dense attention path accepts.
inline constexpr std::size_t kDenseAttentionLimit = 4096;

struct Linear {
  Parameter* weight = nullptr;  // in x out
  Parameter* bias = nullptr;    // 1 x out
};

/// Stack of Linear layers with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;
};

struct RmpnnParams {
  Linear input;                     // 2d -> d on [x_u, init feature]
  Parameter* relation_weight = nullptr;  // d x (|R| * d): W_r for every r, side by side
  Parameter* relation_bias = nullptr;    // |R| x d
  std::vector<Parameter*> retain;   // per layer, 1 x d (alpha / beta)
  std::vector<Mlp> update;          // per layer (Phi / Psi)
};

struct AttentionHead {
  Linear query;  // W1, b1
  Linear key;    // W2, b2
};

struct LayerParams {
  RmpnnParams query_net;
  RmpnnParams value_net;
  std::vector<AttentionHead> heads;
  std::optional<Linear> head_merge;  // heads*d -> d, only when heads > 1
  Parameter* norm1_gain = nullptr;
  Parameter* norm1_bias = nullptr;
  Parameter* norm2_gain = nullptr;
  Parameter* norm2_bias = nullptr;
  Mlp ffn;
};

/// Every learnable tensor of the model, each under a unique dotted name.
class ModelParams {
 public:
  /// Weights and relation embeddings ~ N(0, 1/sqrt(d)); biases 0; retain
  /// vectors and LayerNorm gains 1.
  ModelParams(const ModelConfig& config, std::size_t num_relations, Rng& init_rng);

  ModelParams(const ModelParams&) = delete;
  ModelParams& operator=(const ModelParams&) = delete;
  ModelParams(ModelParams&&) noexcept = default;
  ModelParams& operator=(ModelParams&&) noexcept = default;

  [[nodiscard]] const ModelConfig& config() const { return config_; }
  [[nodiscard]] std::size_t num_relations() const { return num_relations_; }

  [[nodiscard]] std::span<Parameter* const> all() const { return registry_; }
  [[nodiscard]] Parameter& find(const std::string& name) const;
  /// Total number of scalars.
  [[nodiscard]] std::size_t count() const;
  void zero_grad() const;

  /// Redraws every tensor, biases and gains included, from N(0, stddev).
  /// Used by the expressivity probe, which needs generic parameters.
  void randomize_all(Rng& rng, double stddev) const;

  Parameter* relations = nullptr;  // |R| x d
  std::vector<LayerParams> layers;
  Mlp scorer;                      // d -> ... -> 1

 private:
  Parameter* make(const std::string& name, Tensor value);
  Linear make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Mlp make_mlp(const std::string& name, std::vector<std::size_t> widths, Rng& rng);
  RmpnnParams make_rmpnn(const std::string& name, std::size_t depth, Rng& rng);

  ModelConfig config_;
  std::size_t num_relations_ = 0;
  std::vector<std::unique_ptr<Parameter>> store_;
  std::vector<Parameter*> registry_;
};

// ---------------------------------------------------------------------------
// Building blocks

Var apply_linear(Tape& tape, const Linear& lin, Var x);
Var apply_mlp(Tape& tape, const Mlp& mlp, Var x);

/// Rows r-hat_r = R[r_q] W_r + b_r for every relation r, as an |R| x d Var.
Var relation_vectors(Tape& tape, const RmpnnParams& p, Var relations, RelationId query_relation);

/// DistMult-style message z_v * r-hat (r-hat broadcast as a 1 x d row).
Var relational_message(Var z, Var relation_vector);

/// Generic relational message passing shared by both networks:
///   z0 = input([x, init])
///   z_l = update_l(retain_l * z_{l-1} + sum_{r(v,u)} z_{l-1,v} * r-hat_r)
Var rmpnn_forward(Tape& tape, const RmpnnParams& p, Var x, const Tensor& init_feature,
                  Var relations, RelationId query_relation,
                  const std::shared_ptr<const EdgeArrays>& edges);

/// Query network: init feature is Gaussian noise (zeros when noise is null).
Var qrmpnn_forward(Tape& tape, const RmpnnParams& p, Var x, const Tensor* noise, Var relations,
                   RelationId query_relation, const std::shared_ptr<const EdgeArrays>& edges);

/// Value network: init feature is the all-ones row at `head`, zeros elsewhere.
Var vrmpnn_forward(Tape& tape, const RmpnnParams& p, Var x, EntityId head, Var relations,
                   RelationId query_relation, const std::shared_ptr<const EdgeArrays>& edges);

/// 1 + <q, k>. Inputs are expected to be unit vectors.
double approximate_kernel(std::span<const double> q, std::span<const double> k);
/// exp(<q, k>).
double exponential_kernel(std::span<const double> q, std::span<const double> k);

/// Q = rownorm(Zq W1 + b1), K = rownorm(Zq W2 + b2), V = Zv, then
///   D    = 1 + (Q (K^T 1) + n) / n
///   out  = (V + (1^T V + Q (K^T V)) / n) / D
/// evaluated in O(n d^2).
Var linear_attention(Tape& tape, Var query_repr, Var value_repr, const AttentionHead& head);

/// Same attention through an explicit n x n score matrix with kernel
/// k(u,v) + n * [u == v]. Differentiable; used for the full-exponential
/// ablation. Throws OracleScopeError above kDenseAttentionLimit.
Var dense_attention(Tape& tape, Var query_repr, Var value_repr, const AttentionHead& head,
                    KernelMode kernel);

struct DenseAttentionResult {
  Tensor output;     // n x d
  Tensor attention;  // n x n, rows sum to 1
};

/// Reference attention computed entry by entry with plain loops, independent
/// of the tape ops. Throws OracleScopeError above kDenseAttentionLimit.
DenseAttentionResult dense_attention_oracle(const Tensor& query_repr, const Tensor& value_repr,
                                            const AttentionHead& head, KernelMode kernel);

/// Per-query inputs of a forward pass.
struct ForwardInputs {
  std::shared_ptr<const EdgeArrays> edges;
  std::size_t num_entities = 0;
  EntityId head = 0;
  RelationId relation = 0;
  /// One n x d noise matrix per transformer layer; empty means no noise.
  std::span<const Tensor> noise;
  /// Input features X^(0); null means all zeros.
  const Tensor* features = nullptr;
};

/// Intermediate values of one pass.
struct ForwardState {
  std::vector<Var> x;             // X^(0..L)
  std::vector<Var> query_repr;    // per layer, Z-tilde
  std::vector<Var> value_repr;    // per layer, Z-hat
  std::vector<Var> attention_out; // per layer, Z-bar
  Var logits;                     // n x 1
  Var scores;                     // n x 1, sigmoid(logits)
};

struct LayerOutput {
  Var x;
  Var query_repr;
  Var value_repr;
  Var attention_out;
};

/// A = LN1(X + Attn(X, R)); X' = LN2(A + FFN(A)).
LayerOutput transformer_layer(Tape& tape, const ModelParams& params, std::size_t layer, Var x,
                              Var relations, const ForwardInputs& in);

/// X^(0) = 0 (or in.features), L layers, then sigmoid(scorer(X^(L))).
ForwardState forward(Tape& tape, const ModelParams& params, const ForwardInputs& in);

/// Noise matrices for one pass according to config.noise. kDisabled yields
/// an empty vector; the other modes draw attention_layers n x d matrices.
std::vector<Tensor> draw_noise(const ModelConfig& config, std::size_t num_entities, Rng& rng);

/// Scores of all entities for one query as plain numbers (no gradient).
std::vector<double> score_all(const ModelParams& params, const ForwardInputs& in);

}  // namespace kgf
