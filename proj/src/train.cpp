#include "mcclk/train.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "mcclk/checkpoint.hpp"

namespace mcclk {

std::string metrics_line(const EpochMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "epoch=%lld l_bpr=%.10g l_local=%.10g l_global=%.10g "
                "l_total=%.10g eval_auc=%.10g eval_f1=%.10g wall_time=%.3f",
                (long long)m.epoch, m.l_bpr, m.l_local, m.l_global, m.l_total,
                m.eval_auc, m.eval_f1, m.wall_time);
  return buf;
}

ModelGraphs build_graphs(const ModelState& state, const Dataset& data,
                         const ModelConfig& cfg, int threads, idx epoch) {
  ModelGraphs g;
  std::vector<std::pair<idx, idx>> train_pos;
  for (const LabeledRecord& r : data.splits.train)
    if (r.label == 1) train_pos.emplace_back(r.user, r.item);
  g.bipartite =
      BipartiteGraph::build(train_pos, state.n_users, state.n_items);
  g.kg_adj = KgAdjacency::build(data.kg, state.n_items);
  g.semantic = build_semantic_graph(g.kg_adj, state.item, state.entity,
                                    state.relation, cfg.k, cfg.K_prime,
                                    threads, epoch);
  return g;
}

CtrResult evaluate_ctr(const ModelState& state, const ModelGraphs& graphs,
                       const ModelConfig& cfg,
                       const std::vector<LabeledRecord>& records,
                       int threads) {
  EncodeWorkspace ws;
  encode_all(state, graphs, cfg, threads, ws);
  const idx n = idx(records.size());
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  parallel_for(n, threads, [&](idx b, idx e) {
    for (idx t = b; t < e; ++t) {
      scores[t] = score_pair(ws, records[t].user, records[t].item);
      labels[t] = records[t].label;
    }
  });
  CtrResult out;
  out.auc = auc(labels, scores);
  out.f1 = f1(labels, scores);
  out.n_evaluated = n;
  return out;
}

namespace {

struct NegativeSampler {
  // per-user sorted positives over the whole labeled set
  std::vector<std::vector<idx>> pos;
  idx n_items = 0;

  static NegativeSampler build(const InteractionGraph& graph) {
    NegativeSampler s;
    s.n_items = graph.n_items;
    s.pos.resize(graph.n_users);
    for (const auto& [u, i] : graph.positives) s.pos[u].push_back(i);
    for (auto& v : s.pos) std::sort(v.begin(), v.end());
    return s;
  }

  idx sample(idx user, Rng& rng) const {
    const auto& p = pos[user];
    if (idx(p.size()) >= n_items) return rng.next_below(n_items);  // no room
    for (;;) {
      const idx cand = idx(rng.next_below(std::uint64_t(n_items)));
      if (!std::binary_search(p.begin(), p.end(), cand)) return cand;
    }
  }
};

}  // namespace

TrainResult train(const ModelConfig& cfg, const Dataset& data, Ablation abl,
                  const std::string& out_dir, int threads,
                  std::ostream* progress) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string checkpoint_path =
      (fs::path(out_dir) / "checkpoint.bin").string();
  const std::string metrics_path =
      (fs::path(out_dir) / "metrics.log").string();

  Rng rng(cfg.seed);
  Rng init_rng = rng.sub(0x1717);
  ModelState state =
      ModelState::init(data.graph.n_users, data.graph.n_items,
                       data.kg.n_entities, data.kg.n_relations, cfg.d,
                       init_rng);
  ModelState grads = ModelState::zeros_like(state);
  AdamState adam;
  const LossWeights weights = loss_weights(cfg, abl);

  ModelGraphs graphs = build_graphs(state, data, cfg, threads, 0);

  std::vector<std::pair<idx, idx>> train_pos;
  for (const LabeledRecord& r : data.splits.train)
    if (r.label == 1) train_pos.emplace_back(r.user, r.item);
  NegativeSampler sampler = NegativeSampler::build(data.graph);

  std::ofstream metrics_out(metrics_path, std::ios::trunc);
  if (!metrics_out) throw DiskWriteError("cannot write " + metrics_path);

  TrainResult result;
  result.checkpoint_path = checkpoint_path;
  const std::uint64_t cfg_hash = cfg.hash();

  double best_auc = -1.0;
  idx best_epoch = 0;
  idx since_best = 0;
  idx global_step = 0;

  idx rebuild_every = 0;
  if (cfg.semantic_rebuild.rfind("every:", 0) == 0)
    rebuild_every = std::atoll(cfg.semantic_rebuild.c_str() + 6);

  if (cfg.epochs == 0) save_checkpoint(checkpoint_path, state, cfg_hash);

  EncodeWorkspace ws;
  for (idx epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.semantic_rebuild == "epoch" && epoch > 1)
      graphs.semantic = build_semantic_graph(
          graphs.kg_adj, state.item, state.entity, state.relation, cfg.k,
          cfg.K_prime, threads, epoch);

    Rng erng = rng.sub(0xE000 + std::uint64_t(epoch));
    std::vector<idx> order(train_pos.size());
    for (std::size_t t = 0; t < order.size(); ++t) order[t] = idx(t);
    erng.shuffle(order);

    double sum_bpr = 0, sum_local = 0, sum_global = 0, sum_total = 0;
    idx n_batches = 0;
    std::vector<BatchTriple> batch;
    for (std::size_t start = 0; start < order.size();
         start += std::size_t(cfg.batch_size)) {
      if (rebuild_every > 0 && global_step % rebuild_every == 0 &&
          global_step > 0)
        graphs.semantic = build_semantic_graph(
            graphs.kg_adj, state.item, state.entity, state.relation, cfg.k,
            cfg.K_prime, threads, epoch);
      const std::size_t end =
          std::min(order.size(), start + std::size_t(cfg.batch_size));
      batch.clear();
      for (std::size_t t = start; t < end; ++t) {
        const auto& [u, i] = train_pos[order[t]];
        batch.push_back({u, i, sampler.sample(u, erng)});
      }
      grads.zero_values();
      const LossBreakdown losses = compute_batch(state, graphs, cfg, weights,
                                                 batch, threads, ws, &grads);
      adam_step(state, grads, adam, cfg.learning_rate);
      ++global_step;
      sum_bpr += losses.bpr;
      sum_local += losses.local;
      sum_global += losses.global;
      sum_total += losses.total;
      ++n_batches;
    }
    if (!state.all_finite())
      throw NonFiniteLoss("parameters became non-finite at epoch " +
                          std::to_string(epoch));

    const CtrResult eval =
        evaluate_ctr(state, graphs, cfg, data.splits.eval, threads);

    EpochMetrics m;
    m.epoch = epoch;
    const double nb = std::max<idx>(1, n_batches);
    m.l_bpr = sum_bpr / nb;
    m.l_local = weights.local == 0.0 ? 0.0 : sum_local / nb;
    m.l_global = weights.global == 0.0 ? 0.0 : sum_global / nb;
    m.l_total = sum_total / nb;
    m.eval_auc = eval.auc;
    m.eval_f1 = eval.f1;
    m.wall_time = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    metrics_out << metrics_line(m) << "\n";
    metrics_out.flush();
    if (progress != nullptr) *progress << metrics_line(m) << std::endl;
    result.history.push_back(m);
    result.epochs_run = epoch;

    if (eval.auc > best_auc) {
      best_auc = eval.auc;
      best_epoch = epoch;
      since_best = 0;
      save_checkpoint(checkpoint_path, state, cfg_hash);
    } else if (++since_best >= cfg.patience) {
      if (progress != nullptr)
        *progress << "early stop: no eval AUC improvement for "
                  << cfg.patience << " epochs" << std::endl;
      break;
    }
  }

  result.best_epoch = best_epoch;
  result.best_eval_auc = std::max(best_auc, 0.0);
  if (cfg.epochs == 0) {
    result.best_epoch = 0;
    result.best_eval_auc = 0.0;
  }
  return result;
}

}  // namespace mcclk
