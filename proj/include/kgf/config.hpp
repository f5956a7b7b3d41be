#pragma once
// Flat `key = value` run configuration with [section] headers:
//
//   [dataset]  path, mode (transductive | inductive)
//   [model]    hidden_dim, attention_layers, query_layers, value_layers,
//              mlp_depth, ffn_depth, ffn_expansion, scorer_depth, heads,
//              kernel, noise
//   [train]    learning_rate, weight_decay, num_negatives, epochs,
//              batch_size, seed, eval_interval, patience, threads,
//              target_valid_mrr, record_wall_time
//   [output]   dir, verbosity
//
// '#' starts a comment. Unknown sections or keys are rejected.

#include <filesystem>
#include <string>

#include "kgf/kg.hpp"
#include "kgf/model.hpp"
#include "kgf/training.hpp"

namespace kgf {

struct RunConfig {
  std::filesystem::path dataset;
  SplitMode mode = SplitMode::kTransductive;
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path output_dir = "out";
  std::string verbosity = "info";
};

/// Applies one setting; throws ConfigError for unknown keys or bad values.
void apply_setting(RunConfig& cfg, const std::string& section, const std::string& key,
                   const std::string& value);

RunConfig parse_config_text(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::filesystem::path& path, RunConfig base = {});

/// Full effective config, every key written, doubles in shortest round-trip form.
std::string format_config(const RunConfig& cfg);
/// Only the [model] and [train] sections (the part stored in checkpoints).
std::string format_model_train(const ModelConfig& model, const TrainConfig& train);

std::string format_double(double v);

}  // namespace kgf
