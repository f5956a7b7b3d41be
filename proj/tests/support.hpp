#pragma once
// Shared fixtures for the unit tests: small graphs, temp directories and a
// central-difference oracle that does not go through grad_check().

#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "kgf/autodiff.hpp"
#include "kgf/kg.hpp"
#include "kgf/rng.hpp"

namespace kgf::testing {

inline std::filesystem::path temp_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("kgf_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

inline Tensor random_tensor(std::size_t r, std::size_t c, Rng& rng, double stddev = 1.0) {
  return normal_tensor(r, c, rng, stddev);
}

/// 6 entities, 3 base relations, a handful of facts with a cycle and a fork.
inline std::vector<Triplet> toy_triplets() {
  return {{0, 0, 1}, {1, 0, 2}, {2, 1, 3}, {3, 2, 0}, {1, 1, 4}, {4, 2, 5}, {5, 0, 3}, {2, 2, 5}};
}

/// Random multigraph with n entities and nr base relations.
inline std::vector<Triplet> random_triplets(std::size_t n, std::size_t nr, std::size_t m, Rng& rng) {
  std::uniform_int_distribution<std::int32_t> ent(0, static_cast<std::int32_t>(n) - 1);
  std::uniform_int_distribution<std::int32_t> rel(0, static_cast<std::int32_t>(nr) - 1);
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back({ent(rng), rel(rng), ent(rng)});
  return out;
}

/// Writes a tiny transductive dataset whose tails follow simple rules so a
/// model can learn something in a few epochs.
inline std::filesystem::path write_rule_dataset(const std::string& tag, std::size_t n = 24) {
  auto dir = temp_dir(tag);
  std::vector<std::string> lines;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string a = "e" + std::to_string(i);
    lines.push_back(a + "\tnext\te" + std::to_string((i + 1) % n));
    lines.push_back(a + "\tskip\te" + std::to_string((i + 2) % n));
    if (i % 3 == 0) lines.push_back(a + "\tmark\te" + std::to_string((i + 3) % n));
  }
  std::string train, valid, test;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string& dst = i % 10 == 7 ? valid : i % 10 == 9 ? test : train;
    dst += lines[i] + "\n";
  }
  write_file(dir / "train.txt", train);
  write_file(dir / "valid.txt", valid);
  write_file(dir / "test.txt", test);
  return dir;
}

/// d loss / d x for every entry of x by central differences.
inline Tensor numeric_gradient(const std::function<double()>& f, Tensor& x, double h = 1e-6) {
  Tensor g(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double plus = f();
    x[i] = saved - h;
    const double minus = f();
    x[i] = saved;
    g[i] = (plus - minus) / (2.0 * h);
  }
  return g;
}

/// max |a - b| / max(|a|, |b|, floor) over all entries.
inline double max_rel_error(const Tensor& a, const Tensor& b, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(a[i] - b[i]);
    worst = std::max(worst, d / std::max({std::abs(a[i]), std::abs(b[i]), floor}));
  }
  return worst;
}

}  // namespace kgf::testing
