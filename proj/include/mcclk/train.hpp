#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mcclk/data.hpp"
#include "mcclk/metrics.hpp"
#include "mcclk/model.hpp"

namespace mcclk {

struct EpochMetrics {
  idx epoch = 0;
  double l_bpr = 0, l_local = 0, l_global = 0, l_total = 0;
  double eval_auc = 0, eval_f1 = 0;
  double wall_time = 0;  // seconds; the only nondeterministic field
};

std::string metrics_line(const EpochMetrics& m);

struct TrainResult {
  idx best_epoch = 0;
  double best_eval_auc = 0.0;
  std::vector<EpochMetrics> history;
  std::string checkpoint_path;
  idx epochs_run = 0;
};

// Full training run: per epoch rebuild the semantic graph per schedule,
// resample BPR negatives, sweep shuffled batches, evaluate on the eval split
// and keep the best checkpoint. Deterministic for a fixed seed; bit-exact
// across runs at threads=1.
TrainResult train(const ModelConfig& cfg, const Dataset& data, Ablation abl,
                  const std::string& out_dir, int threads,
                  std::ostream* progress);

// CTR metrics of a state on a labeled record set.
CtrResult evaluate_ctr(const ModelState& state, const ModelGraphs& graphs,
                       const ModelConfig& cfg,
                       const std::vector<LabeledRecord>& records, int threads);

ModelGraphs build_graphs(const ModelState& state, const Dataset& data,
                         const ModelConfig& cfg, int threads, idx epoch = 0);

}  // namespace mcclk
