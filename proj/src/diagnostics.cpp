#include "kgf/diagnostics.hpp"

#include <chrono>
#include <cmath>
#include <numbers>

#include "kgf/errors.hpp"
#include "kgf/training.hpp"

namespace kgf {

KernelSweepReport kernel_error_sweep(std::size_t samples, std::size_t dim, std::uint64_t seed, bool near_parallel) {
  Rng rng = make_stream(seed, "kernel-sweep");
  std::normal_distribution<double> nd;
  std::vector<double> q(dim), k(dim);
  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    s = std::sqrt(s);
    for (double& x : v) x /= s;
  };
  KernelSweepReport rep;
  rep.samples = samples;
  rep.bound = std::numbers::e / 2.0;
  rep.supremum = std::numbers::e - 2.0;
  for (std::size_t i = 0; i < samples; ++i) {
    for (double& x : q) x = nd(rng);
    normalize(q);
    if (near_parallel && i % 4 == 0) {
      const double eps = std::pow(10.0, -1.0 - static_cast<double>(i % 7));
      for (std::size_t c = 0; c < dim; ++c) k[c] = q[c] + eps * nd(rng);
    } else {
      for (double& x : k) x = nd(rng);
    }
    normalize(k);
    const double gap = std::abs(approximate_kernel(q, k) - exponential_kernel(q, k));
    if (gap > rep.max_gap) {
      rep.max_gap = gap;
      rep.max_gap_cos = approximate_kernel(q, k) - 1.0;
    }
  }
  return rep;
}

KnowledgeGraph gradcheck_toy_graph() {
  const std::vector<Triplet> t = {{0, 0, 1}, {1, 0, 2}, {2, 1, 3}, {3, 2, 0}, {1, 1, 4}, {4, 2, 5}, {5, 0, 3}, {2, 2, 5}};
  return KnowledgeGraph::build(t, 6, 3, true);
}

GradCheckReport model_gradcheck(std::uint64_t seed, const GradCheckOptions& options, std::size_t hidden_dim) {
  const KnowledgeGraph g = gradcheck_toy_graph();
  ModelConfig cfg;
  cfg.hidden_dim = hidden_dim;
  Rng init = make_stream(seed, "init");
  ModelParams params(cfg, g.num_relations(), init);
  // Non-trivial biases, gains and retain vectors so every group gets a
  // generic gradient.
  Rng perturb = make_stream(seed, "perturb");
  for (Parameter* p : params.all()) {
    const Tensor delta = normal_tensor(p->value.rows(), p->value.cols(), perturb, 0.1);
    p->value.add_inplace(delta);
  }
  Rng noise_rng = make_stream(seed, "noise");
  const std::vector<Tensor> noise = draw_noise(cfg, g.num_entities(), noise_rng);
  const Triplet fact{1, 0, 2};
  const std::vector<EntityId> negatives{0, 3, 5};
  const auto edges = g.edge_arrays_without(fact);

  auto closure = [&](bool with_grad) {
    Tape tape(with_grad);
    ForwardInputs in;
    in.edges = edges;
    in.num_entities = g.num_entities();
    in.head = fact.head;
    in.relation = fact.relation;
    in.noise = noise;
    ForwardState st = forward(tape, params, in);
    Var loss = negative_sampling_loss(st.scores, fact.tail, negatives);
    if (with_grad) tape.backward(loss);
    return loss.value()[0];
  };
  return grad_check(closure, params.all(), options);
}

KnowledgeGraph chain_graph(std::size_t n, std::size_t num_relations) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    t.push_back({static_cast<EntityId>(i), static_cast<RelationId>(i % num_relations), static_cast<EntityId>(i + 1)});
  }
  return KnowledgeGraph::build(t, n, num_relations, true);
}

LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  double ss_res = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    ss_res += e * e;
  }
  f.r2 = syy > 0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

ScalingReport scaling_benchmark(const std::vector<std::size_t>& sizes, const ModelConfig& config,
                                std::size_t reps, std::uint64_t seed) {
  ScalingReport rep;
  rep.sizes = sizes;
  std::vector<double> xs, xs2;
  for (std::size_t n : sizes) {
    const KnowledgeGraph g = chain_graph(n);
    Rng init = make_stream(seed, "init");
    ModelParams params(config, g.num_relations(), init);
    Rng noise_rng = make_stream(seed, "noise");
    const std::vector<Tensor> noise = draw_noise(config, n, noise_rng);
    ForwardInputs in;
    in.edges = g.edge_arrays();
    in.num_entities = n;
    in.head = 0;
    in.relation = 0;
    in.noise = noise;
    double best = 1e300;
    for (std::size_t r = 0; r < reps; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const auto s = score_all(params, in);
      const auto t1 = std::chrono::steady_clock::now();
      if (s.size() != n) throw ContractError("scaling_benchmark: wrong score count");
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    rep.seconds.push_back(best);
    xs.push_back(static_cast<double>(n));
    xs2.push_back(static_cast<double>(n) * static_cast<double>(n));
  }
  rep.fit = fit_line(xs, rep.seconds);
  rep.quadratic_fit = fit_line(xs2, rep.seconds);
  return rep;
}

}  // namespace kgf
