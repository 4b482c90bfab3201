#include "mcclk/gradcheck.hpp"

#include <cmath>

#include "mcclk/train.hpp"

namespace mcclk {

std::string to_string(LossComponent c) {
  switch (c) {
    case LossComponent::bpr: return "bpr";
    case LossComponent::local: return "local";
    case LossComponent::global: return "global";
    case LossComponent::combined: return "combined";
  }
  return "?";
}

ToyInstance make_toy_instance() {
  ToyInstance toy;
  toy.cfg.d = 8;
  toy.cfg.alpha = 0.2;
  toy.cfg.beta = 0.1;
  toy.cfg.lambda = 1e-4;
  toy.cfg.tau = 0.8;
  toy.cfg.k = 3;
  toy.cfg.K = 2;
  toy.cfg.K_prime = 2;
  toy.cfg.L = 2;
  toy.cfg.L_prime = 2;
  toy.cfg.seed = 7;
  toy.cfg.epochs = 50;
  toy.cfg.batch_size = 8;
  toy.cfg.learning_rate = 0.01;

  // 4 users x 5 items; items are KG nodes 0..4, entities 5..10
  InteractionGraph g;
  g.n_users = 4;
  g.n_items = 5;
  g.positives = {{0, 0}, {0, 1}, {0, 4}, {1, 1}, {1, 2},
                 {2, 2}, {2, 3}, {3, 3}, {3, 4}};
  g.negatives = {{0, 2}, {0, 3}, {1, 0}, {1, 3}, {2, 0},
                 {2, 4}, {3, 0}, {3, 1}, {3, 2}};
  toy.data.graph = g;

  KnowledgeGraph kg;
  kg.n_entities = 11;
  kg.n_relations = 3;
  kg.triples = {{0, 0, 5}, {1, 0, 5}, {1, 1, 6}, {2, 1, 7}, {3, 2, 8},
                {4, 0, 9}, {2, 2, 10}, {5, 1, 10}, {6, 2, 9}};
  kg.alignment = {0, 1, 2, 3, 4};
  toy.data.kg = kg;

  toy.data.splits = split(g, {0.6, 0.2, 0.2}, toy.cfg.seed);
  toy.data.manifest.seed = toy.cfg.seed;
  toy.data.manifest.ratios = {0.6, 0.2, 0.2};
  toy.data.manifest.n_users = g.n_users;
  toy.data.manifest.n_items = g.n_items;
  toy.data.manifest.n_train = idx(toy.data.splits.train.size());
  toy.data.manifest.n_eval = idx(toy.data.splits.eval.size());
  toy.data.manifest.n_test = idx(toy.data.splits.test.size());

  // fixed BPR batch; every j avoids the user's positives
  toy.batch = {{0, 0, 2}, {1, 1, 3}, {2, 2, 0}, {3, 4, 1}, {0, 4, 3}};
  return toy;
}

namespace {

LossWeights component_weights(const ModelConfig& cfg, LossComponent c) {
  LossWeights w;
  switch (c) {
    case LossComponent::bpr:
      w = {1.0, 0.0, 0.0, 0.0};
      break;
    case LossComponent::local:
      w = {0.0, 1.0, 0.0, 0.0};
      break;
    case LossComponent::global:
      w = {0.0, 0.0, 1.0, 0.0};
      break;
    case LossComponent::combined:
      w.bpr = 1.0;
      w.local = cfg.beta * cfg.alpha;
      w.global = cfg.beta * (1.0 - cfg.alpha);
      w.lambda = cfg.lambda;
      break;
  }
  return w;
}

}  // namespace

GradientReport grad_check(const ModelConfig& cfg, const Dataset& data,
                          const std::vector<BatchTriple>& batch,
                          LossComponent component, double eps, double tol) {
  const int threads = 1;
  Rng init_rng = Rng(cfg.seed).sub(0x1717);
  ModelState state = ModelState::init(data.graph.n_users, data.graph.n_items,
                                      data.kg.n_entities, data.kg.n_relations,
                                      cfg.d, init_rng);
  idx n_params = 0;
  for (const auto& b : param_blocks(state)) n_params += b.size();
  if (n_params > 1000)
    throw Error("grad_check instance too large: " + std::to_string(n_params) +
                " parameters (limit 1000)");

  // The semantic graph is held fixed: its weights are propagation constants,
  // so finite differences must not see the (non-differentiable) rebuild.
  ModelGraphs graphs = build_graphs(state, data, cfg, threads, 0);
  const LossWeights w = component_weights(cfg, component);

  EncodeWorkspace ws;
  ModelState grads = ModelState::zeros_like(state);
  (void)compute_batch(state, graphs, cfg, w, batch, threads, ws, &grads);

  auto loss_at = [&]() {
    EncodeWorkspace tmp;
    return compute_batch(state, graphs, cfg, w, batch, threads, tmp, nullptr)
        .total;
  };

  GradientReport report;
  report.component = component;
  report.pass = true;
  auto sblocks = param_blocks(state);
  auto gblocks = param_blocks(grads);
  for (std::size_t b = 0; b < sblocks.size(); ++b) {
    double diff2 = 0.0, an2 = 0.0, num2 = 0.0;
    for (std::size_t sp = 0; sp < sblocks[b].spans.size(); ++sp) {
      double* p = sblocks[b].spans[sp].first;
      const double* ga = gblocks[b].spans[sp].first;
      const idx n = sblocks[b].spans[sp].second;
      for (idx q = 0; q < n; ++q) {
        const double saved = p[q];
        p[q] = saved + eps;
        const double up = loss_at();
        p[q] = saved - eps;
        const double down = loss_at();
        p[q] = saved;
        const double gn = (up - down) / (2.0 * eps);
        diff2 += (ga[q] - gn) * (ga[q] - gn);
        an2 += ga[q] * ga[q];
        num2 += gn * gn;
      }
    }
    BlockReport br;
    br.block = sblocks[b].name;
    br.analytic_norm = std::sqrt(an2);
    br.numeric_norm = std::sqrt(num2);
    br.rel_err = std::sqrt(diff2) /
                 std::max({br.analytic_norm, br.numeric_norm, 1e-12});
    br.pass = br.rel_err <= tol;
    report.pass = report.pass && br.pass;
    report.blocks.push_back(br);
  }
  return report;
}

std::vector<GradientReport> grad_check_toy(bool throw_on_failure) {
  ToyInstance toy = make_toy_instance();
  std::vector<GradientReport> reports;
  for (LossComponent c : {LossComponent::bpr, LossComponent::local,
                          LossComponent::global, LossComponent::combined})
    reports.push_back(grad_check(toy.cfg, toy.data, toy.batch, c));

  if (throw_on_failure) {
    std::string failing;
    for (const GradientReport& r : reports)
      for (const BlockReport& b : r.blocks)
        if (!b.pass)
          failing += " " + to_string(r.component) + ":" + b.block;
    if (!failing.empty())
      throw GradCheckFailure("gradient check failed for blocks:" + failing);
  }
  return reports;
}

}  // namespace mcclk
