#include "mcclk/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace mcclk {

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::full: return "full";
    case Ablation::no_local: return "no-local";
    case Ablation::no_global: return "no-global";
  }
  return "full";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "full") return Ablation::full;
  if (s == "no-local") return Ablation::no_local;
  if (s == "no-global") return Ablation::no_global;
  throw Error("unknown ablation '" + s + "' (full | no-local | no-global)");
}

void ModelConfig::validate() const {
  if (d <= 0) throw Error("config: d must be positive");
  if (alpha < 0.0 || alpha > 1.0) throw Error("config: alpha must be in [0,1]");
  if (beta < 0.0) throw Error("config: beta must be non-negative");
  if (lambda < 0.0) throw Error("config: lambda must be non-negative");
  if (tau <= 0.0) throw Error("config: tau must be positive");
  if (learning_rate <= 0.0) throw Error("config: lr must be positive");
  if (k < 1) throw Error("config: k must be >= 1");
  if (K < 0 || K_prime < 0 || L < 0 || L_prime < 0)
    throw Error("config: depths must be >= 0");
  if (batch_size < 1) throw Error("config: batch_size must be >= 1");
  if (epochs < 0) throw Error("config: epochs must be >= 0");
  if (patience < 1) throw Error("config: patience must be >= 1");
  if (semantic_rebuild != "epoch" && semantic_rebuild != "once" &&
      semantic_rebuild.rfind("every:", 0) != 0)
    throw Error("config: semantic_rebuild must be epoch | once | every:<N>");
  if (semantic_rebuild.rfind("every:", 0) == 0 &&
      std::atoll(semantic_rebuild.c_str() + 6) < 1)
    throw Error("config: every:<N> needs N >= 1");
}

std::string ModelConfig::canonical_string() const {
  std::ostringstream ss;
  char buf[64];
  auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    ss << key << " = " << buf << "\n";
  };
  ss << "d = " << d << "\n";
  put("alpha", alpha);
  put("beta", beta);
  put("lambda", lambda);
  put("tau", tau);
  ss << "k = " << k << "\n";
  ss << "K = " << K << "\n";
  ss << "K_prime = " << K_prime << "\n";
  ss << "L = " << L << "\n";
  ss << "L_prime = " << L_prime << "\n";
  put("lr", learning_rate);
  ss << "batch_size = " << batch_size << "\n";
  ss << "epochs = " << epochs << "\n";
  ss << "seed = " << seed << "\n";
  ss << "negative_scope = "
     << (negative_scope == NegativeScope::batch ? "batch" : "full-graph")
     << "\n";
  ss << "semantic_rebuild = " << semantic_rebuild << "\n";
  ss << "patience = " << patience << "\n";
  put("train_ratio", split_ratios[0]);
  put("eval_ratio", split_ratios[1]);
  put("test_ratio", split_ratios[2]);
  if (rating_threshold) put("threshold", *rating_threshold);
  return ss.str();
}

void apply_config_entry(ModelConfig& cfg, const std::string& key,
                        const std::string& value) {
  auto as_real = [&] { return std::stod(value); };
  auto as_int = [&] { return idx(std::stoll(value)); };
  if (key == "d") cfg.d = as_int();
  else if (key == "alpha") cfg.alpha = as_real();
  else if (key == "beta") cfg.beta = as_real();
  else if (key == "lambda") cfg.lambda = as_real();
  else if (key == "tau") cfg.tau = as_real();
  else if (key == "k") cfg.k = as_int();
  else if (key == "K") cfg.K = int(as_int());
  else if (key == "K_prime" || key == "K'") cfg.K_prime = int(as_int());
  else if (key == "L") cfg.L = int(as_int());
  else if (key == "L_prime" || key == "L'") cfg.L_prime = int(as_int());
  else if (key == "lr" || key == "learning_rate") cfg.learning_rate = as_real();
  else if (key == "batch_size") cfg.batch_size = as_int();
  else if (key == "epochs") cfg.epochs = as_int();
  else if (key == "seed") cfg.seed = std::uint64_t(std::stoull(value));
  else if (key == "patience") cfg.patience = as_int();
  else if (key == "semantic_rebuild") cfg.semantic_rebuild = value;
  else if (key == "negative_scope") {
    if (value == "batch") cfg.negative_scope = NegativeScope::batch;
    else if (value == "full-graph" || value == "full")
      cfg.negative_scope = NegativeScope::full_graph;
    else throw Error("config: negative_scope must be batch | full-graph");
  } else if (key == "train_ratio") cfg.split_ratios[0] = as_real();
  else if (key == "eval_ratio") cfg.split_ratios[1] = as_real();
  else if (key == "test_ratio") cfg.split_ratios[2] = as_real();
  else if (key == "threshold") {
    if (value == "none") cfg.rating_threshold.reset();
    else cfg.rating_threshold = as_real();
  } else throw Error("config: unknown key '" + key + "'");
}

ModelConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config file: " + path);
  ModelConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ss(line);
    std::string key, eq, value;
    if (!(ss >> key)) continue;
    if (!(ss >> eq)) throw ParseError("config line needs `key = value`", line_no);
    if (eq == "=") {
      if (!(ss >> value))
        throw ParseError("config line needs `key = value`", line_no);
    } else {
      value = eq;
    }
    try {
      apply_config_entry(cfg, key, value);
    } catch (const Error&) {
      throw;
    } catch (...) {
      throw ParseError("bad value for key '" + key + "'", line_no);
    }
  }
  cfg.validate();
  return cfg;
}

Matrix xavier_init(idx rows, idx cols, Rng& rng) {
  if (rows <= 0 || cols <= 0) throw Error("xavier_init: bad shape");
  const double bound = std::sqrt(6.0 / double(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.a) v = rng.uniform(-bound, bound);
  return m;
}

ModelState ModelState::init(idx n_users, idx n_items, idx n_entities,
                            idx n_relations, idx d, Rng& rng) {
  ModelState s;
  s.n_users = n_users;
  s.n_items = n_items;
  s.n_entities = std::max(n_entities, n_items);
  s.n_relations = n_relations;
  s.d = d;
  s.user = xavier_init(n_users, d, rng);
  s.item = xavier_init(n_items, d, rng);
  s.entity = xavier_init(s.n_entities, d, rng);
  s.relation = xavier_init(n_relations + 1, d, rng);  // + self-loop row
  const double hb = std::sqrt(6.0 / double(2 * d));
  for (ProjectionHead* h : {&s.local_head, &s.global_head}) {
    h->resize(d);
    for (double& v : h->W1.a) v = rng.uniform(-hb, hb);
    for (double& v : h->W2.a) v = rng.uniform(-hb, hb);
  }
  return s;
}

ModelState ModelState::zeros_like(const ModelState& o) {
  ModelState s;
  s.n_users = o.n_users;
  s.n_items = o.n_items;
  s.n_entities = o.n_entities;
  s.n_relations = o.n_relations;
  s.d = o.d;
  s.user.resize(o.user.rows, o.user.cols);
  s.item.resize(o.item.rows, o.item.cols);
  s.entity.resize(o.entity.rows, o.entity.cols);
  s.relation.resize(o.relation.rows, o.relation.cols);
  s.local_head.resize(o.d);
  s.global_head.resize(o.d);
  return s;
}

void ModelState::zero_values() {
  user.zero();
  item.zero();
  entity.zero();
  relation.zero();
  local_head.zero();
  global_head.zero();
}

bool ModelState::all_finite() const {
  return user.all_finite() && item.all_finite() && entity.all_finite() &&
         relation.all_finite() && local_head.W1.all_finite() &&
         local_head.W2.all_finite() && global_head.W1.all_finite() &&
         global_head.W2.all_finite();
}

std::vector<ParamBlock> param_blocks(ModelState& s) {
  std::vector<ParamBlock> blocks;
  auto table = [&](const char* name, Matrix& m) {
    blocks.push_back({name, {{m.a.data(), idx(m.a.size())}}});
  };
  table("user_table", s.user);
  table("item_table", s.item);
  table("entity_table", s.entity);
  table("relation_table", s.relation);
  auto head = [&](const char* name, ProjectionHead& h) {
    ParamBlock b{name, {}};
    b.spans.push_back({h.W1.a.data(), idx(h.W1.a.size())});
    b.spans.push_back({h.b1.data(), idx(h.b1.size())});
    b.spans.push_back({h.W2.a.data(), idx(h.W2.a.size())});
    b.spans.push_back({h.b2.data(), idx(h.b2.size())});
    blocks.push_back(std::move(b));
  };
  head("local_head", s.local_head);
  head("global_head", s.global_head);
  return blocks;
}

void encode_all(const ModelState& state, const ModelGraphs& graphs,
                const ModelConfig& cfg, int threads, EncodeWorkspace& ws) {
  collaborative_encode(graphs.bipartite, state.user, state.item, cfg.K,
                       threads, ws.zu_c, ws.zi_c);
  semantic_encode(graphs.semantic, state.item, cfg.L, threads, ws.zi_s);
  structural_encode(graphs.bipartite, graphs.kg_adj, state.user, state.item,
                    state.entity, state.relation, cfg.L_prime, threads,
                    ws.struct_cache, ws.zu_g, ws.zi_g);
}

void final_representations(const EncodeWorkspace& ws, Matrix& z_user,
                           Matrix& z_item) {
  const idx d = ws.zu_c.cols;
  z_user.resize(ws.zu_c.rows, 2 * d);
  for (idx u = 0; u < z_user.rows; ++u) {
    double* o = z_user.row(u);
    const double* g = ws.zu_g.row(u);
    const double* c = ws.zu_c.row(u);
    for (idx q = 0; q < d; ++q) o[q] = g[q];
    for (idx q = 0; q < d; ++q) o[d + q] = c[q];
  }
  z_item.resize(ws.zi_c.rows, 2 * d);
  for (idx i = 0; i < z_item.rows; ++i) {
    double* o = z_item.row(i);
    const double* g = ws.zi_g.row(i);
    const double* c = ws.zi_c.row(i);
    const double* s = ws.zi_s.row(i);
    for (idx q = 0; q < d; ++q) o[q] = g[q];
    for (idx q = 0; q < d; ++q) o[d + q] = c[q] + s[q];
  }
}

double score_pair(const EncodeWorkspace& ws, idx u, idx i) {
  const idx d = ws.zu_c.cols;
  double s = dot(ws.zu_g.row(u), ws.zi_g.row(i), d);
  const double* zc = ws.zi_c.row(i);
  const double* zs = ws.zi_s.row(i);
  const double* uc = ws.zu_c.row(u);
  for (idx q = 0; q < d; ++q) s += uc[q] * (zc[q] + zs[q]);
  return s;
}

LossWeights loss_weights(const ModelConfig& cfg, Ablation abl) {
  // Ablations zero a loss term rather than removing the encoder, so the
  // prediction dimensionality is unchanged across variants.
  double alpha = cfg.alpha;
  if (abl == Ablation::no_local) alpha = 0.0;
  if (abl == Ablation::no_global) alpha = 1.0;
  LossWeights w;
  w.bpr = 1.0;
  w.local = abl == Ablation::no_local ? 0.0 : cfg.beta * alpha;
  w.global = abl == Ablation::no_global ? 0.0 : cfg.beta * (1.0 - alpha);
  w.lambda = cfg.lambda;
  return w;
}

double bpr_loss(const std::vector<double>& pos_scores,
                const std::vector<double>& neg_scores) {
  if (pos_scores.size() != neg_scores.size())
    throw DimensionMismatch("bpr: score sequences differ in length");
  if (pos_scores.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < pos_scores.size(); ++t) {
    const double diff = pos_scores[t] - neg_scores[t];
    // -ln sigmoid(diff), computed stably
    total += diff > 0.0 ? std::log1p(std::exp(-diff))
                        : -diff + std::log1p(std::exp(diff));
  }
  return total / double(pos_scores.size());
}

double total_loss(double bpr, double l_local, double l_global,
                  const ModelConfig& cfg, double reg_sq) {
  const double total =
      bpr + cfg.beta * (cfg.alpha * l_local + (1.0 - cfg.alpha) * l_global) +
      cfg.lambda * reg_sq;
  if (!std::isfinite(total))
    throw NonFiniteLoss("non-finite objective: bpr=" + std::to_string(bpr) +
                        " local=" + std::to_string(l_local) +
                        " global=" + std::to_string(l_global));
  return total;
}

namespace {

std::vector<idx> sorted_unique(std::vector<idx> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

}  // namespace

LossBreakdown compute_batch(const ModelState& state, const ModelGraphs& graphs,
                            const ModelConfig& cfg, const LossWeights& w,
                            const std::vector<BatchTriple>& batch, int threads,
                            EncodeWorkspace& ws, ModelState* grads) {
  encode_all(state, graphs, cfg, threads, ws);
  const idx d = state.d;
  const idx B = idx(batch.size());

  Matrix gzu_c(state.n_users, d), gzi_c(state.n_items, d);
  Matrix gzi_s(state.n_items, d), gzu_g(state.n_users, d);
  Matrix gzi_g(state.n_items, d);

  LossBreakdown out;

  // --- BPR over the batch triples ---
  if (B > 0) {
    std::vector<double> pos(B), neg(B);
    parallel_for(B, threads, [&](idx b, idx e) {
      for (idx t = b; t < e; ++t) {
        pos[t] = score_pair(ws, batch[t].user, batch[t].pos);
        neg[t] = score_pair(ws, batch[t].user, batch[t].neg);
      }
    });
    out.bpr = bpr_loss(pos, neg);
    if (grads != nullptr && w.bpr != 0.0) {
      // serial scatter: triples share users/items
      for (idx t = 0; t < B; ++t) {
        const double diff = pos[t] - neg[t];
        const double sig = 1.0 / (1.0 + std::exp(-diff));
        const double c = w.bpr * (sig - 1.0) / double(B);  // d/d pos score
        const auto [u, i, j] = batch[t];
        const double* zug = ws.zu_g.row(u);
        const double* zuc = ws.zu_c.row(u);
        for (const auto& [it, cc] : {std::pair<idx, double>{i, c},
                                     std::pair<idx, double>{j, -c}}) {
          const double* zig = ws.zi_g.row(it);
          const double* zic = ws.zi_c.row(it);
          const double* zis = ws.zi_s.row(it);
          double* gu_g = gzu_g.row(u);
          double* gu_c = gzu_c.row(u);
          double* gi_g = gzi_g.row(it);
          double* gi_c = gzi_c.row(it);
          double* gi_s = gzi_s.row(it);
          for (idx q = 0; q < d; ++q) {
            gu_g[q] += cc * zig[q];
            gu_c[q] += cc * (zic[q] + zis[q]);
            gi_g[q] += cc * zug[q];
            gi_c[q] += cc * zuc[q];
            gi_s[q] += cc * zuc[q];
          }
        }
      }
    }
  }

  std::vector<idx> item_anchor_ids, user_anchor_ids, touched_items;
  {
    std::vector<idx> iv, uv, tv;
    iv.reserve(batch.size());
    for (const BatchTriple& t : batch) {
      iv.push_back(t.pos);
      uv.push_back(t.user);
      tv.push_back(t.pos);
      tv.push_back(t.neg);
    }
    item_anchor_ids = sorted_unique(std::move(iv));
    user_anchor_ids = sorted_unique(std::move(uv));
    touched_items = sorted_unique(std::move(tv));
  }
  const bool full_scope = cfg.negative_scope == NegativeScope::full_graph;

  // --- local-level contrast: semantic vs collaborative item views ---
  if (w.local != 0.0 && idx(item_anchor_ids.size()) >= 2) {
    Matrix Zs_p, Zc_p, pre_s, pre_c;
    project_rows(state.local_head, ws.zi_s, Zs_p, pre_s, threads);
    project_rows(state.local_head, ws.zi_c, Zc_p, pre_c, threads);
    if (grads == nullptr) {
      out.local = local_contrastive_loss(Zs_p, Zc_p, item_anchor_ids,
                                         full_scope, cfg.tau, 0.0, threads,
                                         nullptr, nullptr);
    } else {
      Matrix gZs_p(state.n_items, d), gZc_p(state.n_items, d);
      out.local = local_contrastive_loss(Zs_p, Zc_p, item_anchor_ids,
                                         full_scope, cfg.tau, w.local, threads,
                                         &gZs_p, &gZc_p);
      project_backward(state.local_head, ws.zi_s, pre_s, gZs_p, gzi_s,
                       grads->local_head, threads);
      project_backward(state.local_head, ws.zi_c, pre_c, gZc_p, gzi_c,
                       grads->local_head, threads);
    }
  }

  // --- global-level contrast: structural vs combined local views ---
  if (w.global != 0.0 && idx(item_anchor_ids.size()) >= 2 &&
      idx(user_anchor_ids.size()) >= 2) {
    Matrix zl_items(state.n_items, d);
    for (idx i = 0; i < state.n_items; ++i) {
      const double* c = ws.zi_c.row(i);
      const double* s = ws.zi_s.row(i);
      double* o = zl_items.row(i);
      for (idx q = 0; q < d; ++q) o[q] = c[q] + s[q];
    }
    Matrix Zg_i, Zl_i, Zg_u, Zl_u, pre_gi, pre_li, pre_gu, pre_lu;
    project_rows(state.global_head, ws.zi_g, Zg_i, pre_gi, threads);
    project_rows(state.global_head, zl_items, Zl_i, pre_li, threads);
    project_rows(state.global_head, ws.zu_g, Zg_u, pre_gu, threads);
    project_rows(state.global_head, ws.zu_c, Zl_u, pre_lu, threads);
    if (grads == nullptr) {
      out.global = global_contrastive_loss(
          Zg_i, Zl_i, Zg_u, Zl_u, item_anchor_ids, user_anchor_ids, full_scope,
          cfg.tau, 0.0, threads, nullptr, nullptr, nullptr, nullptr);
    } else {
      Matrix gGi(state.n_items, d), gLi(state.n_items, d);
      Matrix gGu(state.n_users, d), gLu(state.n_users, d);
      out.global = global_contrastive_loss(
          Zg_i, Zl_i, Zg_u, Zl_u, item_anchor_ids, user_anchor_ids, full_scope,
          cfg.tau, w.global, threads, &gGi, &gLi, &gGu, &gLu);
      project_backward(state.global_head, ws.zi_g, pre_gi, gGi, gzi_g,
                       grads->global_head, threads);
      Matrix gzl(state.n_items, d);
      project_backward(state.global_head, zl_items, pre_li, gLi, gzl,
                       grads->global_head, threads);
      add_scaled(gzi_c, gzl, 1.0);
      add_scaled(gzi_s, gzl, 1.0);
      project_backward(state.global_head, ws.zu_g, pre_gu, gGu, gzu_g,
                       grads->global_head, threads);
      project_backward(state.global_head, ws.zu_c, pre_lu, gLu, gzu_c,
                       grads->global_head, threads);
    }
  }

  // --- L2 over parameters the batch touches directly: its user and item
  // rows plus the projection heads in play ---
  {
    double ss = 0.0;
    for (idx u : user_anchor_ids) ss += dot(state.user.row(u), state.user.row(u), d);
    for (idx i : touched_items) ss += dot(state.item.row(i), state.item.row(i), d);
    auto head_sq = [&](const ProjectionHead& h) {
      double s = dot(h.W1.a.data(), h.W1.a.data(), idx(h.W1.a.size()));
      s += dot(h.W2.a.data(), h.W2.a.data(), idx(h.W2.a.size()));
      s += dot(h.b1.data(), h.b1.data(), idx(h.b1.size()));
      s += dot(h.b2.data(), h.b2.data(), idx(h.b2.size()));
      return s;
    };
    if (w.local != 0.0) ss += head_sq(state.local_head);
    if (w.global != 0.0) ss += head_sq(state.global_head);
    out.reg = ss;
    if (grads != nullptr && w.lambda != 0.0) {
      const double c = 2.0 * w.lambda;
      for (idx u : user_anchor_ids)
        axpy(c, state.user.row(u), grads->user.row(u), d);
      for (idx i : touched_items)
        axpy(c, state.item.row(i), grads->item.row(i), d);
      auto head_grad = [&](const ProjectionHead& h, ProjectionHead& g) {
        axpy(c, h.W1.a.data(), g.W1.a.data(), idx(h.W1.a.size()));
        axpy(c, h.W2.a.data(), g.W2.a.data(), idx(h.W2.a.size()));
        axpy(c, h.b1.data(), g.b1.data(), idx(h.b1.size()));
        axpy(c, h.b2.data(), g.b2.data(), idx(h.b2.size()));
      };
      if (w.local != 0.0) head_grad(state.local_head, grads->local_head);
      if (w.global != 0.0) head_grad(state.global_head, grads->global_head);
    }
  }

  out.total = w.bpr * out.bpr + w.local * out.local + w.global * out.global +
              w.lambda * out.reg;
  if (!std::isfinite(out.total))
    throw NonFiniteLoss("non-finite objective in training step");

  if (grads != nullptr) {
    collaborative_backward(graphs.bipartite, gzu_c, gzi_c, cfg.K, threads,
                           grads->user, grads->item);
    semantic_backward(graphs.semantic, gzi_s, cfg.L, threads, grads->item);
    structural_backward(graphs.bipartite, graphs.kg_adj, ws.struct_cache,
                        state.relation, gzu_g, gzi_g, cfg.L_prime, threads,
                        grads->user, grads->item, grads->entity,
                        grads->relation);
  }
  return out;
}

void adam_step(ModelState& state, ModelState& grads, AdamState& adam,
               double lr) {
  auto sblocks = param_blocks(state);
  auto gblocks = param_blocks(grads);
  idx total = 0;
  for (const auto& b : sblocks) total += b.size();
  if (idx(adam.m.size()) != total) {
    adam.m.assign(total, 0.0);
    adam.v.assign(total, 0.0);
    adam.step = 0;
  }
  ++adam.step;
  const double bc1 = 1.0 - std::pow(adam.beta1, double(adam.step));
  const double bc2 = 1.0 - std::pow(adam.beta2, double(adam.step));
  idx off = 0;
  for (std::size_t b = 0; b < sblocks.size(); ++b) {
    for (std::size_t s = 0; s < sblocks[b].spans.size(); ++s) {
      double* p = sblocks[b].spans[s].first;
      double* g = gblocks[b].spans[s].first;
      const idx n = sblocks[b].spans[s].second;
      for (idx q = 0; q < n; ++q) {
        const double gq = g[q];
        double& m = adam.m[off + q];
        double& v = adam.v[off + q];
        m = adam.beta1 * m + (1.0 - adam.beta1) * gq;
        v = adam.beta2 * v + (1.0 - adam.beta2) * gq * gq;
        const double mh = m / bc1;
        const double vh = v / bc2;
        p[q] -= lr * mh / (std::sqrt(vh) + adam.eps);
      }
      off += n;
    }
  }
}

}  // namespace mcclk
