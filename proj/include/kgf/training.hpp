#pragma once
// Negative-sampling training with Adam, and the checkpoint container.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgf/eval.hpp"
#include "kgf/kg.hpp"
#include "kgf/model.hpp"
#include "kgf/rng.hpp"

namespace kgf {

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 0.0;
  std::size_t num_negatives = 64;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;  // queries per optimizer step
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t eval_interval = 1;  // epochs between validation passes
  std::size_t patience = 5;       // validation passes without improvement
  std::size_t threads = 1;
  /// Stop as soon as validation MRR reaches this value.
  std::optional<double> target_valid_mrr;
  /// When false every record carries wall_ms = 0 so logs are byte-stable.
  bool record_wall_time = true;

  void validate() const;
};

/// Hyperparameter values searched in the reference setup. Values outside
/// these sets are allowed but reported by grid_warnings().
struct SearchGrid {
  static constexpr double kLearningRates[] = {1e-4, 5e-4, 1e-3, 5e-3};
  static constexpr double kWeightDecays[] = {0.0, 1e-6, 1e-5, 1e-4};
  static constexpr std::size_t kHiddenDims[] = {16, 32, 64};
  static constexpr std::size_t kNegatives[] = {64, 256, 1024, 4096, 16384, 65536};
  static constexpr std::size_t kLayers[] = {1, 2, 3};
};

std::vector<std::string> grid_warnings(const ModelConfig& model, const TrainConfig& train);

// ---------------------------------------------------------------------------

/// k distinct entities drawn uniformly from V \ {gold} (Floyd's algorithm).
/// Throws SamplingError when k >= num_entities.
std::vector<EntityId> sample_negatives(EntityId gold, std::size_t k, Rng& rng, std::size_t num_entities);

/// Probabilities are clamped to [kScoreClamp, 1 - kScoreClamp] before the log.
inline constexpr double kScoreClamp = 1e-7;

/// -log(s_gold) - sum_{t'} log(1 - s_t') for an n x 1 score column.
Var negative_sampling_loss(Var scores, EntityId gold, std::span<const EntityId> negatives);

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  /// Zero moments shaped like params.
  static AdamState for_params(std::span<Parameter* const> params);
};

/// One Adam update with bias correction; weight decay is added to the
/// gradient as an L2 term before the moment updates.
void adam_step(std::span<Parameter* const> params, AdamState& state, const TrainConfig& config);

// ---------------------------------------------------------------------------

/// Everything needed to continue a run exactly where it stopped.
struct TrainProgress {
  std::size_t epochs_done = 0;
  double best_valid_mrr = -1.0;
  std::size_t best_epoch = 0;
  std::size_t stale_evals = 0;
  bool finished = false;
  Rng shuffle_rng;
  Rng negative_rng;
  Rng noise_rng;

  static TrainProgress start(std::uint64_t seed);
};

/// One line of the metrics stream.
struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;  // "train" | "valid" | "test"
  std::optional<double> loss;
  std::optional<MetricsReport> metrics;
  double wall_ms = 0.0;
};

/// JSON object with keys epoch, split, loss, mrr, hits1, hits3, hits10,
/// wall_ms (absent values are null). No trailing newline.
std::string to_json_line(const MetricsRecord& record);

struct TrainHooks {
  std::function<void(const MetricsRecord&)> on_record;
  /// Called after every epoch; is_best marks a new best validation MRR.
  std::function<void(const ModelParams&, const AdamState&, const TrainProgress&, bool is_best)>
      on_epoch_end;
};

struct TrainResult {
  std::vector<MetricsRecord> records;
  double best_valid_mrr = -1.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool reached_target = false;
};

/// Training data derived from a dataset: the message-passing graph, the
/// filter sets and the query lists.
struct TrainingData {
  KnowledgeGraph graph;
  FilterSets filters;
  std::vector<Triplet> train_facts;
  std::vector<Query> valid_queries;
};

TrainingData prepare_training_data(const DatasetSplit& dataset);

/// Runs epochs progress.epochs_done + 1 .. config.epochs. Each epoch shuffles
/// the tail and inverse-tail queries of every training fact, hides the
/// query's own fact from its forward pass, accumulates gradients over each
/// batch and takes one Adam step per batch.
TrainResult train(const TrainingData& data, ModelParams& params, const TrainConfig& config,
                  AdamState& adam, TrainProgress& progress, const TrainHooks& hooks = {});

// ---------------------------------------------------------------------------
// Checkpoint container
//
//   magic "KGFCKPT\0" | u32 version | u64 config digest | str config text
//   | vocab entities | vocab relations | u64 num_relations
//   | u64 tensor count | { str name | u8 dtype(8 = f64) | u64 rows | u64 cols | payload }
//   | u64 adam step | adam moments (same order, f64 payloads)
//   | progress { u64 epochs_done | f64 best | u64 best_epoch | u64 stale | u8 finished
//                | str rng x3 }
// Integers and floats little-endian; str = u64 length + bytes.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model_config;
  TrainConfig train_config;
  std::size_t num_relations = 0;
  Vocabulary entities;
  Vocabulary relations;
  std::vector<std::pair<std::string, Tensor>> tensors;
  AdamState adam;
  TrainProgress progress;
};

Checkpoint make_checkpoint(const ModelParams& params, const TrainConfig& train_config,
                           const AdamState& adam, const TrainProgress& progress,
                           const Vocabulary& entities, const Vocabulary& relations);

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Rebuilds ModelParams from a checkpoint (names and shapes must match).
ModelParams restore_params(const Checkpoint& ckpt);

/// Digest of the config text stored in a checkpoint header.
std::uint64_t config_digest(const std::string& text);

}  // namespace kgf
