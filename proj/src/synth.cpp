#include "mcclk/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <unordered_set>
#include <vector>

namespace mcclk {

SynthSpec SynthSpec::lastfm_like() {
  SynthSpec s;
  s.n_users = 1872;
  s.n_items = 3846;
  s.n_interactions = 42346;
  s.n_entities = 9366;
  s.n_relations = 60;
  s.n_triples = 15518;
  s.n_genres = 24;
  s.seed = 2026;
  return s;
}

SynthSpec SynthSpec::movielens1m_like() {
  SynthSpec s;
  s.n_users = 6036;
  s.n_items = 2445;
  s.n_interactions = 753772;
  s.n_entities = 182011;
  s.n_relations = 12;
  s.n_triples = 1241996;
  s.n_genres = 18;
  s.explicit_ratings = true;
  s.n_subthreshold = 251258;
  s.seed = 2027;
  return s;
}

namespace {

using Vec = std::vector<double>;

Vec gauss_unit(idx d, Rng& rng) {
  Vec v(d);
  double n2 = 0.0;
  for (double& x : v) {
    x = rng.gauss();
    n2 += x * x;
  }
  const double n = std::sqrt(std::max(n2, 1e-12));
  for (double& x : v) x /= n;
  return v;
}

Vec noisy_mix(const Vec& base, double noise, Rng& rng) {
  Vec v(base.size());
  double n2 = 0.0;
  for (std::size_t q = 0; q < v.size(); ++q) {
    v[q] = base[q] + noise * rng.gauss();
    n2 += v[q] * v[q];
  }
  const double n = std::sqrt(std::max(n2, 1e-12));
  for (double& x : v) x /= n;
  return v;
}

// counts proportional to 1/(rank+2)^0.8, summing exactly to total
std::vector<idx> zipf_counts(idx buckets, idx total) {
  std::vector<double> w(buckets);
  double sum = 0.0;
  for (idx g = 0; g < buckets; ++g) {
    w[g] = 1.0 / std::pow(double(g) + 2.0, 0.8);
    sum += w[g];
  }
  std::vector<idx> counts(buckets);
  std::vector<std::pair<double, idx>> rem(buckets);
  idx assigned = 0;
  for (idx g = 0; g < buckets; ++g) {
    const double exact = w[g] / sum * double(total);
    counts[g] = idx(std::floor(exact));
    assigned += counts[g];
    rem[g] = {exact - std::floor(exact), g};
  }
  std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  for (idx t = 0; assigned < total; ++t, ++assigned)
    ++counts[rem[std::size_t(t) % rem.size()].second];
  return counts;
}

idx zipf_draw(idx buckets, Rng& rng) {
  static thread_local std::vector<double> cum;
  cum.assign(buckets, 0.0);
  double sum = 0.0;
  for (idx g = 0; g < buckets; ++g) {
    sum += 1.0 / std::pow(double(g) + 2.0, 0.8);
    cum[g] = sum;
  }
  const double u = rng.next_double() * sum;
  for (idx g = 0; g < buckets; ++g)
    if (u <= cum[g]) return g;
  return buckets - 1;
}

}  // namespace

void generate_synthetic(const SynthSpec& spec, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const idx h = spec.latent_dim;
  Rng root(spec.seed);

  // genre space
  Rng grng = root.sub(1);
  std::vector<Vec> genre(spec.n_genres);
  for (auto& c : genre) c = gauss_unit(h, grng);

  // items: genre blocks sized zipf, shuffled assignment
  Rng irng = root.sub(2);
  std::vector<idx> item_genre(spec.n_items);
  {
    const std::vector<idx> counts = zipf_counts(spec.n_genres, spec.n_items);
    idx pos = 0;
    for (idx g = 0; g < spec.n_genres; ++g)
      for (idx c = 0; c < counts[g]; ++c) item_genre[pos++] = g;
    irng.shuffle(item_genre);
  }
  std::vector<Vec> item_vec(spec.n_items);
  std::vector<double> item_pop(spec.n_items);
  for (idx i = 0; i < spec.n_items; ++i) {
    item_vec[i] = noisy_mix(genre[item_genre[i]], spec.item_noise, irng);
    item_pop[i] = spec.popularity_sd * irng.gauss();
  }
  std::vector<std::vector<idx>> genre_items(spec.n_genres);
  for (idx i = 0; i < spec.n_items; ++i) genre_items[item_genre[i]].push_back(i);

  // users: interest vector from one or two genres, quota from a lognormal
  Rng urng = root.sub(3);
  std::vector<Vec> user_vec(spec.n_users);
  std::vector<idx> quota(spec.n_users);
  {
    std::vector<double> w(spec.n_users);
    double wsum = 0.0;
    for (idx u = 0; u < spec.n_users; ++u) {
      const idx a = zipf_draw(spec.n_genres, urng);
      const idx b = zipf_draw(spec.n_genres, urng);
      Vec base(h);
      for (idx q = 0; q < h; ++q) base[q] = 0.8 * genre[a][q] + 0.35 * genre[b][q];
      user_vec[u] = noisy_mix(base, spec.user_noise, urng);
      w[u] = std::exp(0.85 * urng.gauss());
      wsum += w[u];
    }
    idx assigned = 0;
    std::vector<std::pair<double, idx>> rem(spec.n_users);
    for (idx u = 0; u < spec.n_users; ++u) {
      const double exact = w[u] / wsum * double(spec.n_interactions);
      idx q = std::max<idx>(1, idx(std::floor(exact)));
      q = std::min<idx>(q, spec.n_items - 1);
      quota[u] = q;
      assigned += q;
      rem[u] = {exact - std::floor(exact), u};
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    // walk the remainder list (cyclically) until totals match exactly
    for (idx t = 0; assigned < spec.n_interactions; ++t) {
      idx u = rem[std::size_t(t) % rem.size()].second;
      if (quota[u] < spec.n_items - 1) {
        ++quota[u];
        ++assigned;
      }
    }
    for (idx t = 0; assigned > spec.n_interactions; ++t) {
      idx u = rem[rem.size() - 1 - std::size_t(t) % rem.size()].second;
      if (quota[u] > 1) {
        --quota[u];
        --assigned;
      }
    }
  }

  // positives. Stage 1 guarantees every item at least one interaction.
  std::vector<std::vector<idx>> chosen(spec.n_users);
  std::vector<idx> remaining = quota;
  Rng srng = root.sub(4);
  {
    std::vector<idx> item_order(spec.n_items);
    std::iota(item_order.begin(), item_order.end(), 0);
    srng.shuffle(item_order);
    for (idx i : item_order) {
      idx best_u = -1;
      double best = -1e300;
      for (int trial = 0; trial < 64; ++trial) {
        const idx u = idx(srng.next_below(std::uint64_t(spec.n_users)));
        if (remaining[u] == 0) continue;
        const double a = dot(user_vec[u].data(), item_vec[i].data(), h);
        if (a > best) {
          best = a;
          best_u = u;
        }
      }
      if (best_u < 0) {
        for (idx u = 0; u < spec.n_users && best_u < 0; ++u)
          if (remaining[u] > 0) best_u = u;
      }
      chosen[best_u].push_back(i);
      --remaining[best_u];
    }
  }
  // Stage 2: per-user gumbel-top-k over affinity (sampling without
  // replacement from the softmax of the planted scores).
  parallel_for(spec.n_users, 2, [&](idx ub, idx ue) {
    std::vector<std::pair<double, idx>> scored;
    for (idx u = ub; u < ue; ++u) {
      if (remaining[u] == 0) continue;
      Rng prng = root.sub(5).sub(std::uint64_t(u));
      std::vector<bool> taken(spec.n_items, false);
      for (idx i : chosen[u]) taken[i] = true;
      scored.clear();
      scored.reserve(spec.n_items);
      for (idx i = 0; i < spec.n_items; ++i) {
        const double gumbel = -std::log(-std::log(
            std::max(prng.next_double(), 1e-300)));
        if (taken[i]) continue;
        const double s = spec.affinity_sharpness *
                             dot(user_vec[u].data(), item_vec[i].data(), h) +
                         item_pop[i] + gumbel;
        scored.emplace_back(s, i);
      }
      const idx take = std::min<idx>(remaining[u], idx(scored.size()));
      std::nth_element(scored.begin(), scored.begin() + take, scored.end(),
                       [](const auto& a, const auto& b) {
                         return a.first != b.first ? a.first > b.first
                                                   : a.second < b.second;
                       });
      for (idx t = 0; t < take; ++t) chosen[u].push_back(scored[t].second);
      remaining[u] = 0;
    }
  });

  // ratings file
  {
    std::ofstream out(fs::path(out_dir) / "ratings.txt");
    if (!out) throw DiskWriteError("cannot write ratings.txt in " + out_dir);
    Rng vrng = root.sub(6);
    std::vector<std::pair<idx, idx>> sub;  // below-threshold extras
    if (spec.explicit_ratings && spec.n_subthreshold > 0) {
      std::unordered_set<std::uint64_t> used;
      for (idx u = 0; u < spec.n_users; ++u)
        for (idx i : chosen[u])
          used.insert(std::uint64_t(u) * std::uint64_t(spec.n_items) +
                      std::uint64_t(i));
      while (idx(sub.size()) < spec.n_subthreshold) {
        const idx u = idx(vrng.next_below(std::uint64_t(spec.n_users)));
        const idx i = idx(vrng.next_below(std::uint64_t(spec.n_items)));
        const std::uint64_t key =
            std::uint64_t(u) * std::uint64_t(spec.n_items) + std::uint64_t(i);
        if (used.insert(key).second) sub.emplace_back(u, i);
      }
    }
    std::vector<std::vector<std::pair<idx, int>>> per_user(spec.n_users);
    for (idx u = 0; u < spec.n_users; ++u) {
      for (idx i : chosen[u]) {
        int rating;
        if (spec.explicit_ratings) {
          const double a = dot(user_vec[u].data(), item_vec[i].data(), h);
          rating = a > 0.35 ? 5 : 4;
        } else {
          rating = 1 + int(std::floor(40.0 * std::exp(vrng.gauss())));
        }
        per_user[u].emplace_back(i, rating);
      }
    }
    for (const auto& [u, i] : sub)
      per_user[u].emplace_back(i, 1 + int(vrng.next_below(3)));
    for (idx u = 0; u < spec.n_users; ++u) {
      std::sort(per_user[u].begin(), per_user[u].end());
      for (const auto& [i, r] : per_user[u])
        out << u << " " << i << " " << r << "\n";
    }
  }

  // knowledge graph: attribute entities carry genre and a role relation
  {
    const idx n_attrs = spec.n_entities - spec.n_items;
    if (n_attrs <= 0) throw Error("synth: n_entities must exceed n_items");
    Rng krng = root.sub(7);
    std::vector<idx> attr_genre(n_attrs), attr_role(n_attrs);
    for (idx a = 0; a < n_attrs; ++a) {
      attr_genre[a] = zipf_draw(spec.n_genres, krng);
      attr_role[a] = zipf_draw(spec.n_relations, krng);
    }
    auto attr_id = [&](idx a) { return spec.n_items + a; };
    auto rand_item_of_genre = [&](idx g, Rng& r) {
      const auto& pool =
          genre_items[g].empty() ? genre_items[(g + 1) % spec.n_genres]
                                 : genre_items[g];
      if (pool.empty()) return idx(r.next_below(std::uint64_t(spec.n_items)));
      return pool[r.next_below(pool.size())];
    };

    std::unordered_set<std::uint64_t> seen;
    seen.reserve(std::size_t(spec.n_triples) * 2);
    std::vector<Triple> triples;
    triples.reserve(spec.n_triples);
    auto try_add = [&](idx hd, idx r, idx tl) {
      if (hd == tl) return false;
      if (idx(triples.size()) >= spec.n_triples) return false;
      const std::uint64_t key =
          (std::uint64_t(hd) * std::uint64_t(spec.n_entities) +
           std::uint64_t(tl)) *
              std::uint64_t(spec.n_relations) +
          std::uint64_t(r);
      if (!seen.insert(key).second) return false;
      triples.push_back({hd, r, tl});
      return true;
    };

    // every attribute appears
    for (idx a = 0; a < n_attrs; ++a)
      try_add(rand_item_of_genre(attr_genre[a], krng), attr_role[a],
              attr_id(a));
    // every item appears
    std::vector<bool> item_covered(spec.n_items, false);
    for (const Triple& t : triples)
      if (t.head < spec.n_items) item_covered[t.head] = true;
    for (idx i = 0; i < spec.n_items; ++i) {
      if (item_covered[i]) continue;
      for (int trial = 0; trial < 64; ++trial) {
        const idx a = idx(krng.next_below(std::uint64_t(n_attrs)));
        if (attr_genre[a] == item_genre[i] || trial > 32)
          if (try_add(i, attr_role[a], attr_id(a))) break;
      }
    }
    // every relation appears
    std::vector<bool> rel_covered(spec.n_relations, false);
    for (const Triple& t : triples) rel_covered[t.relation] = true;
    for (idx r = 0; r < spec.n_relations; ++r)
      while (!rel_covered[r]) {
        const idx a = idx(krng.next_below(std::uint64_t(n_attrs)));
        if (try_add(rand_item_of_genre(attr_genre[a], krng), r, attr_id(a)))
          rel_covered[r] = true;
      }
    // fill to the target count
    std::vector<std::vector<idx>> genre_attrs(spec.n_genres);
    for (idx a = 0; a < n_attrs; ++a) genre_attrs[attr_genre[a]].push_back(a);
    while (idx(triples.size()) < spec.n_triples) {
      if (krng.next_double() < spec.entity_entity_frac) {
        const idx g = zipf_draw(spec.n_genres, krng);
        const auto& pool = genre_attrs[g];
        if (pool.size() < 2) continue;
        const idx a1 = pool[krng.next_below(pool.size())];
        const idx a2 = pool[krng.next_below(pool.size())];
        if (a1 == a2) continue;
        try_add(attr_id(a1), attr_role[a1], attr_id(a2));
      } else {
        const idx i = idx(krng.next_below(std::uint64_t(spec.n_items)));
        idx a;
        if (krng.next_double() < spec.genre_link_prob &&
            !genre_attrs[item_genre[i]].empty()) {
          const auto& pool = genre_attrs[item_genre[i]];
          a = pool[krng.next_below(pool.size())];
        } else {
          a = idx(krng.next_below(std::uint64_t(n_attrs)));
        }
        const idx r = krng.next_double() < 0.9
                          ? attr_role[a]
                          : idx(krng.next_below(std::uint64_t(spec.n_relations)));
        try_add(i, r, attr_id(a));
      }
    }
    std::sort(triples.begin(), triples.end(), [](const Triple& x,
                                                 const Triple& y) {
      return std::tie(x.head, x.relation, x.tail) <
             std::tie(y.head, y.relation, y.tail);
    });
    std::ofstream out(fs::path(out_dir) / "kg.txt");
    if (!out) throw DiskWriteError("cannot write kg.txt in " + out_dir);
    for (const Triple& t : triples)
      out << t.head << " " << t.relation << " " << t.tail << "\n";
  }
}

}  // namespace mcclk
