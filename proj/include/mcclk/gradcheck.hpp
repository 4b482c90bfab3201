#pragma once

#include <string>
#include <vector>

#include "mcclk/model.hpp"

namespace mcclk {

enum class LossComponent { bpr, local, global, combined };
std::string to_string(LossComponent c);

struct BlockReport {
  std::string block;
  double analytic_norm = 0, numeric_norm = 0, rel_err = 0;
  bool pass = false;
};

struct GradientReport {
  LossComponent component;
  std::vector<BlockReport> blocks;
  bool pass = false;
};

// Built-in toy instance: 4 users, 5 items, 6 entities, 3 relations, d=8.
struct ToyInstance {
  Dataset data;
  ModelConfig cfg;
  std::vector<BatchTriple> batch;
};
ToyInstance make_toy_instance();

// Central differences against the analytic reverse pass, per parameter block,
// with the semantic graph and batch held fixed.
// rel err = |g_a - g_n| / max(|g_a|, |g_n|, 1e-12)
GradientReport grad_check(const ModelConfig& cfg, const Dataset& data,
                          const std::vector<BatchTriple>& batch,
                          LossComponent component, double eps = 1e-5,
                          double tol = 1e-4);

// All four components on the built-in toy; throws GradCheckFailure naming
// offending blocks when any fails.
std::vector<GradientReport> grad_check_toy(bool throw_on_failure = true);

}  // namespace mcclk
