#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <thread>
#include <vector>

#include "uschema/error.hpp"
#include "uschema/fact_store.hpp"
#include "uschema/rng.hpp"
#include "uschema/scoring.hpp"
#include "uschema/text.hpp"

namespace uschema {

// Per-component L2 strengths.
struct L2Config {
  double a = 0.01;
  double v = 0.01;
  double w = 0.01;
  double d = 0.01;
  double te = 0.01;
};

struct TrainConfig {
  std::size_t k_f = 100;
  std::size_t k_e = 100;
  ModelFlags flags{.use_n = true, .use_f = true, .use_e = true};
  std::size_t epochs = 200;
  double learning_rate = 0.05;
  L2Config l2;
  std::size_t negatives_per_positive = 1;
  std::uint64_t seed = 42;
  std::size_t workers = 1;
  double init_scale = 0.1;

  void validate() const {
    if (!flags.any()) throw Error("no model components enabled");
    if (flags.use_f && k_f == 0) throw Error("k_f must be positive");
    if (flags.use_e && k_e == 0) throw Error("k_e must be positive");
    if (learning_rate <= 0.0) throw Error("learning_rate must be positive");
    if (negatives_per_positive == 0)
      throw Error("negatives_per_positive must be positive");
    if (workers == 0) throw Error("workers must be >= 1");
    if (init_scale < 0.0) throw Error("init_scale must be non-negative");
    if (l2.a < 0 || l2.v < 0 || l2.w < 0 || l2.d < 0 || l2.te < 0)
      throw Error("l2 strengths must be non-negative");
  }
};

// One ranking unit: relation r holds for pos but is unobserved for neg.
struct BprTriple {
  RelationId relation;
  TupleId pos;
  TupleId neg;
};

// Gaussian-initialized embeddings, zero-initialized neighborhood weights
// over the store's co-occurrence support. Only enabled components are
// allocated. Draw order is fixed (a, v, d, te), so a given seed always
// yields bit-identical parameters.
inline ModelParams init_params(const FactStore& store, const TrainConfig& cfg,
                               Rng& rng) {
  cfg.validate();
  if (store.num_relations() == 0 || store.num_tuples() == 0)
    throw Error("init_params: empty vocabulary");
  ModelParams p;
  p.flags = cfg.flags;
  p.k_f = cfg.flags.use_f ? cfg.k_f : 0;
  p.k_e = cfg.flags.use_e ? cfg.k_e : 0;
  p.num_relations = store.num_relations();
  p.num_entities = store.num_entities();
  p.num_tuples = store.num_tuples();
  auto fill_gaussian = [&](std::vector<double>& xs, std::size_t n) {
    xs.resize(n);
    for (double& x : xs) x = rng.gaussian(cfg.init_scale);
  };
  if (cfg.flags.use_f) {
    fill_gaussian(p.a, p.num_relations * p.k_f);
    fill_gaussian(p.v, p.num_tuples * p.k_f);
  }
  if (cfg.flags.use_e) {
    fill_gaussian(p.d, p.num_relations * 2 * p.k_e);
    fill_gaussian(p.te, p.num_entities * p.k_e);
  }
  if (cfg.flags.use_n)
    p.w = SparseWeights::from_pairs(p.num_relations,
                                    store.cooccurring_relation_pairs());
  return p;
}

// Positive tuple uniform over r's observed tuples; negative uniform over
// the tuple vocabulary, resampled until <r, neg> is unobserved.
inline BprTriple sample_triple(const FactStore& store, RelationId r,
                               Rng& rng) {
  const auto& pos_tuples = store.observed_tuples(r);
  if (pos_tuples.empty()) throw Error("sample_triple: relation has no facts");
  if (pos_tuples.size() == store.num_tuples())
    throw Error("sample_triple: relation observed for every tuple");
  const TupleId pos =
      pos_tuples[static_cast<std::size_t>(rng.uniform_below(pos_tuples.size()))];
  for (;;) {
    const auto neg = static_cast<TupleId>(rng.uniform_below(store.num_tuples()));
    if (!store.observed(r, neg)) return BprTriple{r, pos, neg};
  }
}

// Relation drawn uniformly at random among relations that admit a valid
// pair (at least one observed and one unobserved tuple).
inline BprTriple sample_triple(const FactStore& store, Rng& rng) {
  for (std::size_t attempt = 0; attempt < 64 * store.num_relations();
       ++attempt) {
    const auto r =
        static_cast<RelationId>(rng.uniform_below(store.num_relations()));
    const std::size_t n = store.observed_tuples(r).size();
    if (n == 0 || n == store.num_tuples()) continue;
    return sample_triple(store, r, rng);
  }
  throw Error("sample_triple: no relation admits a positive/negative pair");
}

// BPR pairwise log-loss -log sigma(theta_pos - theta_neg), computed in a
// form that never overflows.
inline double pair_loss(double theta_pos, double theta_neg) {
  const double delta = theta_pos - theta_neg;
  return delta > 0.0 ? std::log1p(std::exp(-delta))
                     : -delta + std::log1p(std::exp(delta));
}

// One stochastic step on a triple; returns the pre-update pair loss.
//
// With delta = theta(r, pos) - theta(r, neg) and g = sigma(-delta), every
// enabled parameter gets  param += lr * (g * d(delta)/d(param) - l2 * param),
// all gradients evaluated at the pre-update values. Neighborhood updates
// touch only support keys; keys observed for the negative tuple but absent
// from the support are skipped (they read as zero everywhere).
inline double sgd_step(ModelParams& p, const BprTriple& triple,
                       const FactStore& store, const TrainConfig& cfg) {
  const RelationId r = triple.relation;
  const auto& obs_pos = store.observed_relations(triple.pos);
  const auto& obs_neg = store.observed_relations(triple.neg);
  const double theta_pos = theta(p, store, r, triple.pos, obs_pos);
  const double theta_neg = theta(p, store, r, triple.neg, obs_neg);
  const double delta = theta_pos - theta_neg;
  const double loss = pair_loss(theta_pos, theta_neg);
  const double g = confidence(-delta);
  const double lr = cfg.learning_rate;

  if (p.flags.use_f) {
    auto a_r = p.a_row(r);
    auto v_pos = p.v_row(triple.pos);
    auto v_neg = p.v_row(triple.neg);
    // pos != neg always (neg is unobserved), so the two v rows are distinct
    for (std::size_t k = 0; k < p.k_f; ++k) {
      const double a_old = a_r[k];
      a_r[k] += lr * (g * (v_pos[k] - v_neg[k]) - cfg.l2.a * a_old);
      v_pos[k] += lr * (g * a_old - cfg.l2.v * v_pos[k]);
      v_neg[k] += lr * (-g * a_old - cfg.l2.v * v_neg[k]);
    }
  }

  if (p.flags.use_n) {
    // merge the two sorted observed lists; indicator difference is the
    // gradient of delta w.r.t. w[r][r']
    std::size_t i = 0, j = 0;
    while (i < obs_pos.size() || j < obs_neg.size()) {
      RelationId rp;
      double ind;
      if (j == obs_neg.size() ||
          (i < obs_pos.size() && obs_pos[i] < obs_neg[j])) {
        rp = obs_pos[i++];
        ind = 1.0;
      } else if (i == obs_pos.size() || obs_neg[j] < obs_pos[i]) {
        rp = obs_neg[j++];
        ind = -1.0;
      } else {
        rp = obs_pos[i++];
        ++j;
        ind = 0.0;
      }
      if (rp == r) continue;
      const std::size_t idx = p.w.index_of(r, rp);
      if (idx == SparseWeights::npos) continue;
      double& wv = p.w.value_at(idx);
      wv += lr * (g * ind - cfg.l2.w * wv);
    }
  }

  if (p.flags.use_e) {
    const auto [e1_pos, e2_pos] = store.tuple_slots(triple.pos);
    const auto [e1_neg, e2_neg] = store.tuple_slots(triple.neg);
    std::vector<double> d1_old(p.d_slot(r, 0).begin(), p.d_slot(r, 0).end());
    std::vector<double> d2_old(p.d_slot(r, 1).begin(), p.d_slot(r, 1).end());
    auto d1 = p.d_slot(r, 0);
    auto d2 = p.d_slot(r, 1);
    for (std::size_t k = 0; k < p.k_e; ++k) {
      d1[k] += lr * (g * (p.te_row(e1_pos)[k] - p.te_row(e1_neg)[k]) -
                     cfg.l2.d * d1[k]);
      d2[k] += lr * (g * (p.te_row(e2_pos)[k] - p.te_row(e2_neg)[k]) -
                     cfg.l2.d * d2[k]);
    }
    // an entity may fill several of the four slots; accumulate its whole
    // gradient first so the l2 pull is applied exactly once
    const EntityId touched[4] = {e1_pos, e2_pos, e1_neg, e2_neg};
    for (std::size_t n = 0; n < 4; ++n) {
      const EntityId e = touched[n];
      bool seen = false;
      for (std::size_t m = 0; m < n; ++m) seen |= (touched[m] == e);
      if (seen) continue;
      const double c1 = (e == e1_pos ? 1.0 : 0.0) - (e == e1_neg ? 1.0 : 0.0);
      const double c2 = (e == e2_pos ? 1.0 : 0.0) - (e == e2_neg ? 1.0 : 0.0);
      auto te = p.te_row(e);
      for (std::size_t k = 0; k < p.k_e; ++k) {
        const double grad = g * (c1 * d1_old[k] + c2 * d2_old[k]);
        te[k] += lr * (grad - cfg.l2.te * te[k]);
      }
    }
  }

  return loss;
}

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;
  std::int64_t elapsed_ms = 0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t skipped_relations = 0;
  std::size_t workers = 1;

  // Line-oriented: epoch<TAB>mean_loss<TAB>elapsed_ms per epoch, then a
  // summary line with the degenerate-relation skip count and worker mode.
  void write(std::ostream& out) const {
    for (const EpochStats& e : epochs)
      out << e.epoch << '\t' << format_double(e.mean_loss) << '\t'
          << e.elapsed_ms << '\n';
    out << "summary\tskipped_relations\t" << skipped_relations << "\tworkers\t"
        << workers << '\n';
  }
};

// The parameter state train() starts from for a given config: the seed
// fully determines it. train(store, cfg) with epochs == 0 returns exactly
// this.
inline ModelParams initial_params(const FactStore& store,
                                  const TrainConfig& cfg) {
  Rng rng = Rng(cfg.seed).fork(0, 0);
  return init_params(store, cfg, rng);
}

namespace detail {

// One worker's share of an epoch: a contiguous slice of the shuffled
// positives, each paired with freshly sampled negatives.
inline double run_steps(ModelParams& params, const FactStore& store,
                        const TrainConfig& cfg, std::span<const Fact> slice,
                        Rng rng, std::size_t* steps_out) {
  double loss_sum = 0.0;
  std::size_t steps = 0;
  for (const Fact& f : slice) {
    for (std::size_t n = 0; n < cfg.negatives_per_positive; ++n) {
      TupleId neg;
      for (;;) {
        neg = static_cast<TupleId>(rng.uniform_below(store.num_tuples()));
        if (!store.observed(f.relation, neg)) break;
      }
      loss_sum += sgd_step(params, BprTriple{f.relation, f.tuple, neg}, store, cfg);
      ++steps;
    }
  }
  *steps_out = steps;
  return loss_sum;
}

}  // namespace detail

// Runs epochs x |O| x negatives_per_positive stochastic steps over
// shuffled positives. Relations observed for every tuple admit no negative
// and are skipped (counted in the report). workers == 1 is strictly
// sequential and deterministic for a fixed seed; workers > 1 runs lock-free
// parallel updates on shared parameters and gives up determinism.
inline ModelParams train(const FactStore& store, const TrainConfig& cfg,
                         TrainReport* report = nullptr) {
  cfg.validate();
  if (!store.finalized()) throw Error("train: store not finalized");
  if (store.num_facts() == 0) throw Error("train: empty store");

  const Rng base(cfg.seed);
  ModelParams params = initial_params(store, cfg);

  std::vector<bool> degenerate(store.num_relations(), false);
  std::size_t skipped = 0;
  for (RelationId r = 0; r < store.num_relations(); ++r) {
    if (!store.observed_tuples(r).empty() &&
        store.observed_tuples(r).size() == store.num_tuples()) {
      degenerate[r] = true;
      ++skipped;
    }
  }

  std::vector<Fact> positives;
  positives.reserve(store.num_facts());
  for (const Fact& f : store.facts())
    if (!degenerate[f.relation]) positives.push_back(f);

  TrainReport local_report;
  TrainReport& rep = report ? *report : local_report;
  rep.epochs.clear();
  rep.skipped_relations = skipped;
  rep.workers = cfg.workers;

  if (positives.empty()) {
    if (cfg.epochs > 0)
      throw Error("train: every relation is degenerate, nothing to train");
    return params;
  }

  const std::size_t workers = std::min(cfg.workers, positives.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng shuffle_rng = base.fork(epoch, 0);
    shuffle_rng.shuffle(positives);

    double loss_sum = 0.0;
    std::size_t steps = 0;
    if (workers == 1) {
      loss_sum = detail::run_steps(params, store, cfg, positives,
                                   base.fork(epoch, 1), &steps);
    } else {
      std::vector<double> worker_loss(workers, 0.0);
      std::vector<std::size_t> worker_steps(workers, 0);
      std::vector<std::thread> threads;
      threads.reserve(workers);
      const std::size_t chunk = (positives.size() + workers - 1) / workers;
      for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(begin + chunk, positives.size());
        threads.emplace_back([&, w, begin, end] {
          worker_loss[w] = detail::run_steps(
              params, store, cfg,
              std::span<const Fact>(positives.data() + begin, end - begin),
              base.fork(epoch, 1 + w), &worker_steps[w]);
        });
      }
      for (auto& th : threads) th.join();
      for (std::size_t w = 0; w < workers; ++w) {
        loss_sum += worker_loss[w];
        steps += worker_steps[w];
      }
    }

    const auto t1 = std::chrono::steady_clock::now();
    rep.epochs.push_back(EpochStats{
        epoch, loss_sum / static_cast<double>(steps),
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0)
            .count()});
  }
  return params;
}

}  // namespace uschema
