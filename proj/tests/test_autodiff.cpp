#include <doctest.h>

#include <cmath>

#include "kgf/autodiff.hpp"
#include "kgf/errors.hpp"
#include "support.hpp"

using namespace kgf;
using kgf::testing::max_rel_error;
using kgf::testing::numeric_gradient;

namespace {

using Builder = std::function<Var(Tape&, std::vector<Var>&)>;

// Contracts the op output with a fixed random weighting so every output
// entry contributes, then compares tape gradients with central differences.
double op_gradient_error(std::vector<Tensor> inputs, const Builder& build, std::uint64_t seed = 12345) {
  Rng rng(seed);
  Tensor weight;
  auto loss_of = [&](Tape& tape) {
    std::vector<Var> vars;
    for (auto& t : inputs) vars.push_back(tape.constant(t));
    Var out = build(tape, vars);
    if (weight.empty()) weight = normal_tensor(out.rows(), out.cols(), rng);
    return std::pair{sum(mul(out, tape.constant(weight))), vars};
  };
  Tape tape;
  auto [loss, vars] = loss_of(tape);
  tape.compute_gradients(loss);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = tape.grad(vars[i]);
    const Tensor numeric = numeric_gradient(
        [&] {
          Tape t(false);
          return loss_of(t).first.value()[0];
        },
        inputs[i]);
    worst = std::max(worst, max_rel_error(analytic, numeric));
  }
  return worst;
}

Tensor rnd(std::size_t r, std::size_t c, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  Tensor t = normal_tensor(r, c, rng);
  for (double& v : t.values()) v += shift;
  return t;
}

constexpr double kTol = 1e-6;

}  // namespace

TEST_CASE("matmul matches a triple loop") {
  const Tensor a = rnd(5, 7, 1), b = rnd(7, 3, 2);
  Tape tape(false);
  const Tensor c = matmul(tape.constant(a), tape.constant(b)).value();
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 7; ++k) acc += a(i, k) * b(k, j);
      CHECK(c(i, j) == doctest::Approx(acc).epsilon(1e-14));
    }
  }
}

TEST_CASE("primitive gradients agree with central differences") {
  SUBCASE("matmul") {
    CHECK(op_gradient_error({rnd(4, 3, 1), rnd(3, 5, 2)}, [](Tape&, auto& v) { return matmul(v[0], v[1]); }) < kTol);
  }
  SUBCASE("transpose") {
    CHECK(op_gradient_error({rnd(4, 3, 1)}, [](Tape&, auto& v) { return transpose(v[0]); }) < kTol);
  }
  SUBCASE("add / sub with broadcasting") {
    CHECK(op_gradient_error({rnd(4, 3, 1), rnd(4, 3, 2)}, [](Tape&, auto& v) { return add(v[0], v[1]); }) < kTol);
    CHECK(op_gradient_error({rnd(4, 3, 1), rnd(1, 3, 2)}, [](Tape&, auto& v) { return add(v[0], v[1]); }) < kTol);
    CHECK(op_gradient_error({rnd(4, 3, 1), rnd(1, 1, 2)}, [](Tape&, auto& v) { return sub(v[0], v[1]); }) < kTol);
  }
  SUBCASE("mul and div_rows") {
    CHECK(op_gradient_error({rnd(4, 3, 1), rnd(1, 3, 2)}, [](Tape&, auto& v) { return mul(v[0], v[1]); }) < kTol);
    CHECK(op_gradient_error({rnd(4, 3, 1), rnd(4, 1, 2, 3.0)}, [](Tape&, auto& v) { return div_rows(v[0], v[1]); }) < kTol);
  }
  SUBCASE("concat_columns") {
    CHECK(op_gradient_error({rnd(4, 3, 1), rnd(4, 2, 2)}, [](Tape&, auto& v) { return concat_columns(v[0], v[1]); }) < kTol);
  }
  SUBCASE("pointwise nonlinearities") {
    CHECK(op_gradient_error({rnd(5, 4, 1)}, [](Tape&, auto& v) { return relu(v[0]); }) < kTol);
    CHECK(op_gradient_error({rnd(5, 4, 1)}, [](Tape&, auto& v) { return sigmoid(v[0]); }) < kTol);
    CHECK(op_gradient_error({rnd(5, 4, 1)}, [](Tape&, auto& v) { return exp(v[0]); }) < kTol);
    CHECK(op_gradient_error({rnd(5, 4, 1, 6.0)}, [](Tape&, auto& v) { return log(v[0]); }) < kTol);
    CHECK(op_gradient_error({rnd(5, 4, 1)}, [](Tape&, auto& v) { return clamp(v[0], -0.5, 0.7); }) < kTol);
  }
  SUBCASE("reductions") {
    CHECK(op_gradient_error({rnd(5, 4, 1)}, [](Tape&, auto& v) { return sum(v[0]); }) < kTol);
    CHECK(op_gradient_error({rnd(5, 4, 1)}, [](Tape&, auto& v) { return sum_rows(v[0]); }) < kTol);
    CHECK(op_gradient_error({rnd(5, 4, 1)}, [](Tape&, auto& v) { return mean_rows(v[0]); }) < kTol);
    CHECK(op_gradient_error({rnd(5, 4, 1)}, [](Tape&, auto& v) { return sum_cols(v[0]); }) < kTol);
  }
  SUBCASE("normalizations") {
    CHECK(op_gradient_error({rnd(5, 6, 1), rnd(1, 6, 2), rnd(1, 6, 3)},
                            [](Tape&, auto& v) { return layer_norm(v[0], v[1], v[2]); }) < kTol);
    CHECK(op_gradient_error({rnd(5, 6, 1)}, [](Tape&, auto& v) { return row_l2_normalize(v[0]); }) < kTol);
  }
  SUBCASE("index ops") {
    CHECK(op_gradient_error({rnd(5, 3, 1)}, [](Tape&, auto& v) { return gather_rows(v[0], {4, 0, 0, 2}); }) < kTol);
    CHECK(op_gradient_error({rnd(4, 3, 1)}, [](Tape&, auto& v) { return scatter_add_rows(6, {5, 0, 5, 2}, v[0]); }) < kTol);
  }
  SUBCASE("scalar ops and reshape") {
    CHECK(op_gradient_error({rnd(3, 4, 1)}, [](Tape&, auto& v) { return scale(v[0], -2.5); }) < kTol);
    CHECK(op_gradient_error({rnd(3, 4, 1)}, [](Tape&, auto& v) { return add_scalar(v[0], 0.3); }) < kTol);
    CHECK(op_gradient_error({rnd(3, 4, 1)}, [](Tape&, auto& v) { return reshape(v[0], 6, 2); }) < kTol);
  }
  SUBCASE("relational_aggregate") {
    auto edges = std::make_shared<EdgeArrays>(EdgeArrays{{0, 1, 2, 2, 4}, {0, 1, 1, 2, 0}, {1, 1, 0, 3, 1}});
    CHECK(op_gradient_error({rnd(5, 3, 1), rnd(3, 3, 2)},
                            [edges](Tape&, auto& v) { return relational_aggregate(v[0], v[1], edges); }) < kTol);
  }
}

TEST_CASE("relational_aggregate equals the gather/mul/scatter composition") {
  Rng rng(7);
  const std::size_t n = 9, nr = 4, d = 5;
  auto triplets = kgf::testing::random_triplets(n, nr, 30, rng);
  auto edges = std::make_shared<EdgeArrays>();
  std::vector<std::size_t> src, rel, dst;
  for (const auto& t : triplets) {
    edges->src.push_back(t.head);
    edges->rel.push_back(t.relation);
    edges->dst.push_back(t.tail);
    src.push_back(t.head);
    rel.push_back(t.relation);
    dst.push_back(t.tail);
  }
  Parameter z("z", normal_tensor(n, d, rng)), r("r", normal_tensor(nr, d, rng));
  const Tensor w = normal_tensor(n, d, rng);

  z.grad = Tensor(n, d);
  r.grad = Tensor(nr, d);
  Tape fused;
  Var a = relational_aggregate(fused.param(z), fused.param(r), edges);
  fused.backward(sum(mul(a, fused.constant(w))));
  const Tensor gz = z.grad, gr = r.grad;
  z.zero_grad();
  r.zero_grad();

  Tape composed;
  Var zc = composed.param(z), rc = composed.param(r);
  Var b = scatter_add_rows(n, dst, mul(gather_rows(zc, src), gather_rows(rc, rel)));
  composed.backward(sum(mul(b, composed.constant(w))));

  CHECK(max_abs_diff(a.value(), b.value()) < 1e-13);
  CHECK(max_abs_diff(gz, z.grad) < 1e-13);
  CHECK(max_abs_diff(gr, r.grad) < 1e-13);

  // Scalar-loop oracle for the forward value.
  Tensor expect(n, d);
  for (const auto& t : triplets) {
    for (std::size_t c = 0; c < d; ++c) expect(t.tail, c) += z.value(t.head, c) * r.value(t.relation, c);
  }
  CHECK(max_abs_diff(a.value(), expect) < 1e-13);
}

TEST_CASE("layer_norm and row_l2_normalize values") {
  const Tensor x{{1.0, 2.0, 4.0}, {-3.0, 0.0, 3.0}};
  Tape tape(false);
  Var ln = layer_norm(tape.constant(x), tape.constant(Tensor::ones(1, 3)), tape.constant(Tensor::zeros(1, 3)));
  // row 1: mean 7/3, var = ((4/3)^2 + (1/3)^2 + (5/3)^2)/3 = 42/27
  const double mean = 7.0 / 3.0, var = 42.0 / 27.0;
  CHECK(ln.value()(0, 2) == doctest::Approx((4.0 - mean) / std::sqrt(var + 1e-5)).epsilon(1e-12));
  Var nrm = row_l2_normalize(tape.constant(x));
  CHECK(nrm.value()(1, 0) == doctest::Approx(-3.0 / std::sqrt(18.0)).epsilon(1e-12));
}

TEST_CASE("parameter gradients accumulate across tapes") {
  Parameter p("p", Tensor{{1.0, -2.0}});
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(scale(tape.param(p), 3.0)));
  }
  CHECK(p.grad[0] == 6.0);
  CHECK(p.grad[1] == 6.0);
}

TEST_CASE("shape and contract errors") {
  Tape tape;
  Var a = tape.constant(Tensor(2, 3)), b = tape.constant(Tensor(2, 3));
  CHECK_THROWS_AS(matmul(a, b), DimensionError);
  CHECK_THROWS_AS(add(a, tape.constant(Tensor(3, 3))), DimensionError);
  CHECK_THROWS_AS(tape.backward(a), ContractError);
  Tape other;
  CHECK_THROWS_AS(add(a, other.constant(Tensor(2, 3))), ContractError);
  Tape frozen(false);
  CHECK_THROWS_AS(frozen.backward(sum(frozen.constant(Tensor(1, 1)))), ContractError);
  auto edges = std::make_shared<EdgeArrays>(EdgeArrays{{0}, {5}, {1}});
  CHECK_THROWS_AS(relational_aggregate(a, tape.constant(Tensor(2, 3)), edges), DimensionError);
}

TEST_CASE("grad_check passes a correct closure and flags nondeterminism") {
  Parameter w("w", Tensor{{0.3, -0.7}, {1.1, 0.2}});
  Parameter* params[] = {&w};
  auto closure = [&](bool with_grad) {
    Tape tape(with_grad);
    Var x = tape.constant(Tensor{{1.0, 2.0}});
    Var loss = sum(sigmoid(matmul(x, tape.param(w))));
    if (with_grad) tape.backward(loss);
    return loss.value()[0];
  };
  const GradCheckReport rep = grad_check(closure, params);
  CHECK(rep.passed);
  CHECK(rep.worst_rel_error < 1e-6);

  int calls = 0;
  auto flaky = [&](bool) { return static_cast<double>(++calls); };
  CHECK_THROWS_AS(grad_check(flaky, params), DeterminismError);
}
