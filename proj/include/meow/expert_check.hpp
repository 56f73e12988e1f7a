#pragma once

#include <cstdint>

#include "meow/expert.hpp"

namespace meow {

struct GradCheckOptions {
  int trials = 10;
  double epsilon = 1e-5;       // central difference step
  int coords_per_tensor = 16;  // sampled coordinates per parameter tensor (<=0: all)
  std::uint64_t seed = 0x9ec4;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  long coords_checked = 0;
  int trials = 0;
};

// Random relation-typed graph for numeric checks; roughly a quarter of the
// relations come out empty, and one is forced empty on every third trial.
HeteroGraph random_check_graph(const ModelConfig& config, Rng& rng, bool force_empty_relation);

// Central finite differences against the analytic backward pass, with the
// dropout mask held fixed per evaluation point. Relative error uses
// |a - b| / max(|a|, |b|, 1e-6).
GradCheckReport grad_check(const ModelConfig& config, const GradCheckOptions& options = {});

}  // namespace meow
