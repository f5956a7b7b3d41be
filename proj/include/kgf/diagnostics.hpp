#pragma once
// Sweeps and audits shared by the command-line tool and the acceptance run.

#include <cstdint>
#include <vector>

#include "kgf/autodiff.hpp"
#include "kgf/kg.hpp"
#include "kgf/model.hpp"

namespace kgf {

struct KernelSweepReport {
  std::size_t samples = 0;
  double max_gap = 0.0;      // max |(1 + <q,k>) - exp(<q,k>)|
  double max_gap_cos = 0.0;  // <q,k> at the maximum
  double bound = 0.0;        // e / 2
  double supremum = 0.0;     // e - 2, reached at <q,k> = 1
};

/// Random unit-vector pairs in `dim` dimensions. With near_parallel, every
/// fourth pair perturbs q by a tiny amount instead of drawing k freshly.
KernelSweepReport kernel_error_sweep(std::size_t samples, std::size_t dim, std::uint64_t seed,
                                     bool near_parallel = true);

/// The six-entity, three-relation graph used by the gradient audit.
KnowledgeGraph gradcheck_toy_graph();

/// Finite-difference audit of the full model on gradcheck_toy_graph(): loss
/// is the negative-sampling loss of one query with fixed negatives and
/// fixed noise. Grouped per parameter tensor.
GradCheckReport model_gradcheck(std::uint64_t seed, const GradCheckOptions& options = {},
                                std::size_t hidden_dim = 4);

/// Path graph 0 -> 1 -> ... -> n-1 with relations cycling over num_relations.
KnowledgeGraph chain_graph(std::size_t n, std::size_t num_relations = 3);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

struct ScalingReport {
  std::vector<std::size_t> sizes;
  std::vector<double> seconds;  // best of `reps` forward passes
  LinearFit fit;                // seconds against |V|
  LinearFit quadratic_fit;      // seconds against |V|^2
};

/// Times no-gradient forward passes on chain graphs.
ScalingReport scaling_benchmark(const std::vector<std::size_t>& sizes, const ModelConfig& config,
                                std::size_t reps, std::uint64_t seed);

}  // namespace kgf
