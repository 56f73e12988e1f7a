#include "meow/expert_check.hpp"

#include <algorithm>
#include <cmath>

namespace meow {

HeteroGraph random_check_graph(const ModelConfig& config, Rng& rng, bool force_empty_relation) {
  HeteroGraph graph;
  graph.num_nodes = config.num_seats;
  graph.spy_seat = static_cast<int>(rng.below(static_cast<std::uint64_t>(config.num_seats)));

  while (true) {
    graph.edges.clear();
    std::size_t total = 0;
    for (std::size_t r = 0; r < config.relation_keys.size(); ++r) {
      auto& list = graph.edges[config.relation_keys[r]];
      const bool empty = (force_empty_relation && r == 0) || rng.bernoulli(0.25);
      if (empty) continue;
      for (int src = 0; src < config.num_seats; ++src) {
        for (int dst = 0; dst < config.num_seats; ++dst) {
          if (src != dst && rng.bernoulli(0.4)) {
            list.emplace_back(src, dst);
            ++total;
          }
        }
      }
    }
    if (total > 0) return graph;
  }
}

GradCheckReport grad_check(const ModelConfig& config, const GradCheckOptions& options) {
  config.validate();
  GradCheckReport report;
  report.trials = options.trials;
  Rng rng(options.seed);

  for (int trial = 0; trial < options.trials; ++trial) {
    const HeteroGraph graph = random_check_graph(config, rng, trial % 3 == 0);
    Parameters params = Parameters::glorot(config, rng.next_u64());
    const std::uint64_t mask_seed = rng.next_u64();

    auto loss_at = [&](const Parameters& p) {
      Rng mask_rng(mask_seed);
      const ForwardTrace trace = model_forward(graph, p, config, RunMode::Train, &mask_rng);
      return cross_entropy(trace.probs, graph.spy_seat);
    };

    Rng trace_rng(mask_seed);
    const ForwardTrace trace = model_forward(graph, params, config, RunMode::Train, &trace_rng);
    const Parameters analytic = backward(graph, params, config, trace, graph.spy_seat);

    for (const Parameters::Entry& entry : params.entries()) {
      const long count = static_cast<long>(entry.rows) * entry.cols;
      std::vector<long> coords;
      if (options.coords_per_tensor <= 0 || count <= options.coords_per_tensor) {
        coords.resize(static_cast<std::size_t>(count));
        for (long i = 0; i < count; ++i) coords[static_cast<std::size_t>(i)] = i;
      } else {
        coords.push_back(0);
        coords.push_back(count - 1);
        for (int k = 2; k < options.coords_per_tensor; ++k)
          coords.push_back(static_cast<long>(rng.below(static_cast<std::uint64_t>(count))));
      }

      for (long coord : coords) {
        double* slot = params.data() + entry.offset + coord;
        const double saved = *slot;
        *slot = saved + options.epsilon;
        const double up = loss_at(params);
        *slot = saved - options.epsilon;
        const double down = loss_at(params);
        *slot = saved;

        const double numeric = (up - down) / (2.0 * options.epsilon);
        const double exact = analytic.data()[entry.offset + coord];
        const double scale = std::max({std::abs(numeric), std::abs(exact), 1e-6});
        report.max_rel_err = std::max(report.max_rel_err, std::abs(numeric - exact) / scale);
        report.coords_checked += 1;
      }
    }
  }
  return report;
}

}  // namespace meow
