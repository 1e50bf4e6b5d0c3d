#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "uschema/error.hpp"
#include "uschema/evaluation.hpp"
#include "uschema/fact_store.hpp"
#include "uschema/rng.hpp"
#include "uschema/scoring.hpp"
#include "uschema/training.hpp"

namespace uschema {

// ---------------------------------------------------------------------------
// Finite-difference gradients
// ---------------------------------------------------------------------------

// Central differences (L(x+eps) - L(x-eps)) / (2 eps), one coordinate at a
// time. The loss callable must be pure; non-finite values raise.
template <typename LossFn>
std::vector<double> finite_diff_gradient(LossFn&& loss,
                                         std::span<const double> x0,
                                         double eps) {
  if (!(eps > 0.0)) throw Error("finite_diff_gradient: eps must be positive");
  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> grad(x0.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = x0[i] + eps;
    const double up = loss(std::span<const double>(x));
    x[i] = x0[i] - eps;
    const double down = loss(std::span<const double>(x));
    x[i] = x0[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw Error("finite_diff_gradient: non-finite loss");
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

// Flat view of every trainable parameter, fixed order (a, v, w, d, te).
inline std::vector<double> flatten_params(const ModelParams& p) {
  std::vector<double> x;
  x.reserve(p.a.size() + p.v.size() + p.w.nnz() + p.d.size() + p.te.size());
  x.insert(x.end(), p.a.begin(), p.a.end());
  x.insert(x.end(), p.v.begin(), p.v.end());
  x.insert(x.end(), p.w.values().begin(), p.w.values().end());
  x.insert(x.end(), p.d.begin(), p.d.end());
  x.insert(x.end(), p.te.begin(), p.te.end());
  return x;
}

inline void unflatten_params(std::span<const double> x, ModelParams& p) {
  const std::size_t total =
      p.a.size() + p.v.size() + p.w.nnz() + p.d.size() + p.te.size();
  if (x.size() != total) throw Error("unflatten_params: size mismatch");
  std::size_t off = 0;
  std::copy_n(x.begin() + off, p.a.size(), p.a.begin()); off += p.a.size();
  std::copy_n(x.begin() + off, p.v.size(), p.v.begin()); off += p.v.size();
  std::copy_n(x.begin() + off, p.w.nnz(), p.w.values().begin()); off += p.w.nnz();
  std::copy_n(x.begin() + off, p.d.size(), p.d.begin()); off += p.d.size();
  std::copy_n(x.begin() + off, p.te.size(), p.te.begin());
}

// Per-coordinate agreement rule: tiny gradients compare absolutely (floor),
// everything else relatively. Returns the number of disagreeing
// coordinates and reports the worst relative error seen.
inline std::size_t compare_gradients(std::span<const double> analytic,
                                     std::span<const double> numeric,
                                     double rel_tol, double abs_floor,
                                     double* max_err = nullptr) {
  if (analytic.size() != numeric.size())
    throw Error("compare_gradients: size mismatch");
  std::size_t failures = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double diff = std::abs(analytic[i] - numeric[i]);
    const double scale = std::max(std::abs(analytic[i]), std::abs(numeric[i]));
    if (scale < abs_floor) {
      if (diff > abs_floor) ++failures;
      continue;
    }
    const double rel = diff / scale;
    worst = std::max(worst, rel);
    if (rel > rel_tol) ++failures;
  }
  if (max_err) *max_err = std::max(*max_err, worst);
  return failures;
}

// ---------------------------------------------------------------------------
// Randomized gradient check: analytic sgd_step updates vs finite differences
// ---------------------------------------------------------------------------

struct GradCheckConfig {
  ModelFlags flags{.use_n = true, .use_f = true, .use_e = true};
  std::size_t max_k_f = 3;        // k_f drawn in [1, max_k_f]
  std::size_t max_k_e = 3;        // k_e drawn in [1, max_k_e]
  std::size_t max_relations = 6;  // drawn in [2, max_relations]
  std::size_t max_tuples = 8;     // drawn in [3, max_tuples]
  std::size_t max_entities = 6;   // drawn in [2, max_entities]
  std::size_t trials = 100;
  double eps = 1e-5;
  double rel_tol = 1e-4;
  double abs_floor = 1e-8;
  std::uint64_t seed = 20240601;
};

struct GradCheckResult {
  std::size_t trials = 0;
  std::size_t coordinates = 0;
  std::size_t failures = 0;
  double max_rel_err = 0.0;

  bool passed() const { return trials > 0 && failures == 0; }
};

namespace detail {

// Random small store where every relation holds for a nonempty proper
// subset of the tuples, so every relation admits a BPR pair.
inline FactStore random_small_store(std::size_t num_relations,
                                    std::size_t num_tuples,
                                    std::size_t num_entities, Rng& rng) {
  FactStore store;
  for (std::size_t r = 0; r < num_relations; ++r)
    store.intern_relation("r" + std::to_string(r));
  for (std::size_t e = 0; e < num_entities; ++e)
    store.intern_entity("e" + std::to_string(e));
  std::set<std::pair<EntityId, EntityId>> seen;
  for (std::size_t t = 0; t < num_tuples; ++t) {
    for (;;) {
      const auto e1 = static_cast<EntityId>(rng.uniform_below(num_entities));
      const auto e2 = static_cast<EntityId>(rng.uniform_below(num_entities));
      if (seen.insert({e1, e2}).second) {
        store.intern_tuple(e1, e2);
        break;
      }
      if (seen.size() >= num_entities * num_entities) break;
    }
  }
  const std::size_t tuples = store.num_tuples();
  std::vector<TupleId> order(tuples);
  for (std::size_t t = 0; t < tuples; ++t) order[t] = static_cast<TupleId>(t);
  for (std::size_t r = 0; r < num_relations; ++r) {
    rng.shuffle(order);
    const std::size_t count = 1 + rng.uniform_below(tuples - 1);
    for (std::size_t i = 0; i < count; ++i)
      store.add_fact(static_cast<RelationId>(r), order[i]);
  }
  store.finalize();
  return store;
}

}  // namespace detail

// Draws random tiny instances and checks that the update applied by
// sgd_step (lr = 1, all l2 = 0) equals minus the finite-difference gradient
// of pair_loss, coordinate by coordinate.
inline GradCheckResult gradient_check(const GradCheckConfig& cfg) {
  if (cfg.trials == 0) throw Error("gradient_check: trials must be >= 1");
  if (!cfg.flags.any()) throw Error("gradient_check: no components enabled");
  Rng rng(cfg.seed);
  GradCheckResult result;
  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    const std::size_t num_relations = 2 + rng.uniform_below(cfg.max_relations - 1);
    const std::size_t num_tuples = 3 + rng.uniform_below(cfg.max_tuples - 2);
    const std::size_t num_entities = 2 + rng.uniform_below(cfg.max_entities - 1);
    const FactStore store =
        detail::random_small_store(num_relations, num_tuples, num_entities, rng);

    TrainConfig tc;
    tc.flags = cfg.flags;
    tc.k_f = 1 + rng.uniform_below(cfg.max_k_f);
    tc.k_e = 1 + rng.uniform_below(cfg.max_k_e);
    tc.learning_rate = 1.0;
    tc.l2 = L2Config{0, 0, 0, 0, 0};
    tc.init_scale = 0.5;
    tc.seed = rng.next_u64();
    ModelParams params = init_params(store, tc, rng);
    for (double& wv : params.w.values()) wv = rng.gaussian(0.5);

    const auto r = static_cast<RelationId>(rng.uniform_below(num_relations));
    const BprTriple triple = sample_triple(store, r, rng);

    const std::vector<double> x0 = flatten_params(params);

    ModelParams stepped = params;
    sgd_step(stepped, triple, store, tc);
    const std::vector<double> x1 = flatten_params(stepped);
    std::vector<double> analytic(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) analytic[i] = x0[i] - x1[i];

    ModelParams scratch = params;
    const auto& obs_pos = store.observed_relations(triple.pos);
    const auto& obs_neg = store.observed_relations(triple.neg);
    auto loss_at = [&](std::span<const double> x) {
      unflatten_params(x, scratch);
      return pair_loss(theta(scratch, store, r, triple.pos, obs_pos),
                       theta(scratch, store, r, triple.neg, obs_neg));
    };
    const std::vector<double> numeric =
        finite_diff_gradient(loss_at, x0, cfg.eps);

    result.coordinates += x0.size();
    result.failures += compare_gradients(analytic, numeric, cfg.rel_tol,
                                         cfg.abs_floor, &result.max_rel_err);
    ++result.trials;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

// A implies B on every A-tuple; only `coverage` of B-tuples carry A.
struct ImplicatureRule {
  std::string antecedent;
  std::string consequent;
  double coverage = 0.3;
};

struct SynthSpec {
  std::size_t num_relations = 50;
  std::size_t num_tuples = 500;
  std::size_t num_entities = 200;
  std::size_t rank = 5;  // ground-truth factor rank K*
  // Default tuned so a rank-5 corpus lands near 5% matrix density,
  // echoing real KB sparsity.
  double fact_threshold = 0.72;
  double holdout_fraction = 0.2;
  std::vector<ImplicatureRule> rules;
  std::uint64_t seed = 1;

  void validate() const {
    if (num_relations == 0 || num_tuples == 0 || num_entities < 2)
      throw Error("synth spec: empty dimensions");
    if (rank == 0 || rank > std::min(num_relations, num_tuples))
      throw Error("synth spec: rank must be in [1, min(relations, tuples)]");
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
      throw Error("synth spec: holdout fraction must be in (0, 1)");
    for (const ImplicatureRule& rule : rules) {
      if (!(rule.coverage > 0.0 && rule.coverage <= 1.0))
        throw Error("synth spec: rule coverage must be in (0, 1]");
      if (rule.antecedent.empty() || rule.consequent.empty())
        throw Error("synth spec: rule relation names must be non-empty");
      if (rule.antecedent == rule.consequent)
        throw Error("synth spec: rule antecedent equals consequent");
    }
  }
};

struct SynthCorpus {
  FactStore store;   // training facts only
  EvalSplit split;   // held-out facts + candidate universe per relation
  // Ground-truth natural parameters, num_relations x store.num_tuples(),
  // aligned with store ids. Empty for implicature corpora.
  std::vector<double> theta_star;
};

namespace detail {

struct GeneratedMatrix {
  std::vector<std::pair<EntityId, EntityId>> tuple_entities;  // generation order
  std::vector<double> theta;       // num_relations x num_tuples, row-major
  std::vector<std::vector<bool>> true_facts;  // [relation][tuple]
};

inline GeneratedMatrix sample_lowrank_matrix(std::size_t num_relations,
                                             const SynthSpec& spec, Rng& rng) {
  GeneratedMatrix m;
  std::set<std::pair<EntityId, EntityId>> seen;
  while (m.tuple_entities.size() < spec.num_tuples) {
    const auto e1 = static_cast<EntityId>(rng.uniform_below(spec.num_entities));
    const auto e2 = static_cast<EntityId>(rng.uniform_below(spec.num_entities));
    if (e1 == e2) continue;
    if (seen.insert({e1, e2}).second) m.tuple_entities.emplace_back(e1, e2);
  }
  // Factor scale 1/sqrt(K*) keeps theta* at unit order, so the threshold
  // stays interpretable across ranks.
  const double scale = 1.0 / std::sqrt(static_cast<double>(spec.rank));
  std::vector<double> rel_factors(num_relations * spec.rank);
  std::vector<double> tuple_factors(spec.num_tuples * spec.rank);
  for (double& x : rel_factors) x = rng.gaussian(scale);
  for (double& x : tuple_factors) x = rng.gaussian(scale);
  m.theta.assign(num_relations * spec.num_tuples, 0.0);
  m.true_facts.assign(num_relations,
                      std::vector<bool>(spec.num_tuples, false));
  for (std::size_t r = 0; r < num_relations; ++r) {
    for (std::size_t t = 0; t < spec.num_tuples; ++t) {
      double s = 0.0;
      for (std::size_t k = 0; k < spec.rank; ++k)
        s += rel_factors[r * spec.rank + k] * tuple_factors[t * spec.rank + k];
      m.theta[r * spec.num_tuples + t] = s;
      m.true_facts[r][t] = s > spec.fact_threshold;
    }
  }
  return m;
}

// Candidate universe for each relation with held-out facts: every store
// tuple not observed with that relation in training.
inline void fill_candidates(SynthCorpus& corpus) {
  std::set<RelationId> test_relations;
  for (const Fact& f : corpus.split.test_facts) test_relations.insert(f.relation);
  for (RelationId r : test_relations) {
    std::vector<TupleId> cands;
    for (TupleId t = 0; t < corpus.store.num_tuples(); ++t)
      if (!corpus.store.observed(r, t)) cands.push_back(t);
    corpus.split.candidates[r] = std::move(cands);
  }
}

}  // namespace detail

// Rank-K* planted corpus: facts are exactly the cells with ground-truth
// theta above the threshold. Tuples with no true fact are dropped. The
// holdout never strands a tuple or relation without training facts.
inline SynthCorpus generate_lowrank_corpus(const SynthSpec& spec, Rng& rng) {
  spec.validate();
  if (!spec.rules.empty())
    throw Error("generate_lowrank_corpus: implicature rules not supported here");
  const auto m = detail::sample_lowrank_matrix(spec.num_relations, spec, rng);

  std::vector<Fact> true_facts;  // provisional ids: generation order
  for (std::size_t r = 0; r < spec.num_relations; ++r)
    for (std::size_t t = 0; t < spec.num_tuples; ++t)
      if (m.true_facts[r][t])
        true_facts.push_back(
            Fact{static_cast<RelationId>(r), static_cast<TupleId>(t)});
  if (true_facts.empty())
    throw Error("generate_lowrank_corpus: threshold admits no facts");

  // Holdout, constrained so every tuple and relation keeps >= 1 training
  // fact. Selection order is a deterministic shuffle of the fact list.
  std::vector<std::size_t> fact_order(true_facts.size());
  for (std::size_t i = 0; i < fact_order.size(); ++i) fact_order[i] = i;
  rng.shuffle(fact_order);
  std::vector<std::size_t> tuple_remaining(spec.num_tuples, 0);
  std::vector<std::size_t> rel_remaining(spec.num_relations, 0);
  for (const Fact& f : true_facts) {
    ++tuple_remaining[f.tuple];
    ++rel_remaining[f.relation];
  }
  const auto target = static_cast<std::size_t>(
      std::llround(spec.holdout_fraction * static_cast<double>(true_facts.size())));
  std::vector<bool> held(true_facts.size(), false);
  std::size_t held_count = 0;
  for (std::size_t idx : fact_order) {
    if (held_count >= target) break;
    const Fact& f = true_facts[idx];
    if (tuple_remaining[f.tuple] < 2 || rel_remaining[f.relation] < 2) continue;
    held[idx] = true;
    ++held_count;
    --tuple_remaining[f.tuple];
    --rel_remaining[f.relation];
  }

  // Intern: relations keep generation ids; tuples with >= 1 true fact keep
  // generation order, so ids stay deterministic.
  SynthCorpus corpus;
  for (std::size_t r = 0; r < spec.num_relations; ++r)
    corpus.store.intern_relation("p:" + std::to_string(r));
  std::vector<TupleId> tuple_id(spec.num_tuples, 0);
  std::vector<bool> tuple_kept(spec.num_tuples, false);
  for (const Fact& f : true_facts) tuple_kept[f.tuple] = true;
  for (std::size_t t = 0; t < spec.num_tuples; ++t) {
    if (!tuple_kept[t]) continue;
    const auto [e1, e2] = m.tuple_entities[t];
    const EntityId i1 = corpus.store.intern_entity("e" + std::to_string(e1));
    const EntityId i2 = corpus.store.intern_entity("e" + std::to_string(e2));
    tuple_id[t] = corpus.store.intern_tuple(i1, i2);
  }
  for (std::size_t i = 0; i < true_facts.size(); ++i) {
    const Fact& f = true_facts[i];
    if (held[i])
      corpus.split.test_facts.push_back(Fact{f.relation, tuple_id[f.tuple]});
    else
      corpus.store.add_fact(f.relation, tuple_id[f.tuple]);
  }
  corpus.store.finalize();

  corpus.theta_star.assign(spec.num_relations * corpus.store.num_tuples(), 0.0);
  for (std::size_t r = 0; r < spec.num_relations; ++r)
    for (std::size_t t = 0; t < spec.num_tuples; ++t)
      if (tuple_kept[t])
        corpus.theta_star[r * corpus.store.num_tuples() + tuple_id[t]] =
            m.theta[r * spec.num_tuples + t];

  detail::fill_candidates(corpus);
  corpus.split.validate(corpus.store);
  return corpus;
}

inline SynthCorpus generate_lowrank_corpus(const SynthSpec& spec) {
  Rng rng(spec.seed);
  return generate_lowrank_corpus(spec, rng);
}

// Corpus with exact directed implicature: every antecedent tuple carries
// the consequent; only `coverage` of consequent tuples carry the
// antecedent. The held-out set is a slice of consequent facts on
// antecedent-bearing tuples, which is what a model must fill back in.
// Remaining relations are a plain low-rank background.
inline SynthCorpus generate_implicature_corpus(const SynthSpec& spec, Rng& rng) {
  spec.validate();
  if (spec.rules.empty()) return generate_lowrank_corpus(spec, rng);

  // Rule structure: each relation may be antecedent of at most one rule
  // and consequent of at most one, giving disjoint chains and cycles.
  // Cycles force set equality, so every coverage on a cycle must be 1.
  std::map<std::string, std::size_t> rule_rel_ids;
  auto rule_rel = [&](const std::string& name) {
    return rule_rel_ids.emplace(name, rule_rel_ids.size()).first->second;
  };
  for (const ImplicatureRule& rule : spec.rules) {
    rule_rel(rule.antecedent);
    rule_rel(rule.consequent);
  }
  const std::size_t num_rule_rels = rule_rel_ids.size();
  if (num_rule_rels > spec.num_relations)
    throw Error("synth spec: more rule relations than num_relations");
  constexpr std::size_t kNoRule = static_cast<std::size_t>(-1);
  std::vector<std::size_t> outgoing(num_rule_rels, kNoRule);  // rule index
  std::vector<std::size_t> incoming(num_rule_rels, kNoRule);
  for (std::size_t i = 0; i < spec.rules.size(); ++i) {
    const std::size_t a = rule_rel(spec.rules[i].antecedent);
    const std::size_t c = rule_rel(spec.rules[i].consequent);
    if (outgoing[a] != kNoRule)
      throw Error("synth spec: relation is antecedent of two rules");
    if (incoming[c] != kNoRule)
      throw Error("synth spec: relation is consequent of two rules");
    outgoing[a] = i;
    incoming[c] = i;
  }
  // Cycle detection: walk forward from each relation.
  std::vector<bool> on_cycle(num_rule_rels, false);
  for (std::size_t start = 0; start < num_rule_rels; ++start) {
    std::size_t cur = start;
    std::size_t steps = 0;
    while (outgoing[cur] != kNoRule && steps <= num_rule_rels) {
      cur = rule_rel(spec.rules[outgoing[cur]].consequent);
      if (cur == start) {
        on_cycle[start] = true;
        break;
      }
      ++steps;
    }
  }
  for (std::size_t i = 0; i < spec.rules.size(); ++i) {
    const std::size_t a = rule_rel(spec.rules[i].antecedent);
    if (on_cycle[a] && spec.rules[i].coverage != 1.0)
      throw Error("synth spec: implicature cycle with coverage < 1 is inconsistent");
  }

  // Background relations fill the rest of the schema.
  const std::size_t num_background = spec.num_relations - num_rule_rels;
  for (const auto& [name, idx] : rule_rel_ids)
    if (name.starts_with("p:"))
      throw Error("synth spec: rule relation name collides with background prefix p:");

  const auto m = detail::sample_lowrank_matrix(num_background, spec, rng);

  // Assign tuple sets, consequents before antecedents. Terminal consequent
  // sets cover a fixed fraction of the tuples; coverage-1 cycles share one
  // set.
  constexpr double kConsequentFraction = 0.2;
  std::vector<std::vector<std::size_t>> member_sets(num_rule_rels);
  std::vector<bool> assigned(num_rule_rels, false);

  auto base_set = [&]() {
    std::vector<std::size_t> pool(spec.num_tuples);
    for (std::size_t t = 0; t < spec.num_tuples; ++t) pool[t] = t;
    rng.shuffle(pool);
    const auto size = static_cast<std::size_t>(std::llround(
        kConsequentFraction * static_cast<double>(spec.num_tuples)));
    if (size == 0) throw Error("synth spec: too few tuples for rule sets");
    pool.resize(size);
    std::sort(pool.begin(), pool.end());
    return pool;
  };

  for (std::size_t rel = 0; rel < num_rule_rels; ++rel) {
    if (!on_cycle[rel] || assigned[rel]) continue;
    const std::vector<std::size_t> shared = base_set();
    std::size_t cur = rel;
    do {
      member_sets[cur] = shared;
      assigned[cur] = true;
      cur = rule_rel(spec.rules[outgoing[cur]].consequent);
    } while (cur != rel);
  }
  auto assign_chain = [&](auto&& self, std::size_t rel) -> void {
    if (assigned[rel]) return;
    assigned[rel] = true;
    if (outgoing[rel] == kNoRule) {
      member_sets[rel] = base_set();
      return;
    }
    const ImplicatureRule& rule = spec.rules[outgoing[rel]];
    const std::size_t consequent = rule_rel(rule.consequent);
    self(self, consequent);
    std::vector<std::size_t> pool = member_sets[consequent];
    rng.shuffle(pool);
    const auto size = static_cast<std::size_t>(
        std::llround(rule.coverage * static_cast<double>(pool.size())));
    if (size == 0)
      throw Error("synth spec: rule coverage yields an empty antecedent set");
    pool.resize(size);
    std::sort(pool.begin(), pool.end());
    member_sets[rel] = std::move(pool);
  };
  for (std::size_t rel = 0; rel < num_rule_rels; ++rel)
    assign_chain(assign_chain, rel);

  std::vector<std::string> rel_names(num_rule_rels);
  for (const auto& [name, idx] : rule_rel_ids) rel_names[idx] = name;

  // True facts: rule memberships plus thresholded background.
  std::vector<bool> tuple_kept(spec.num_tuples, false);
  for (std::size_t rel = 0; rel < num_rule_rels; ++rel)
    for (std::size_t t : member_sets[rel]) tuple_kept[t] = true;
  for (std::size_t r = 0; r < num_background; ++r)
    for (std::size_t t = 0; t < spec.num_tuples; ++t)
      if (m.true_facts[r][t]) tuple_kept[t] = true;

  // Intern rule relations first (stable low ids), then background.
  SynthCorpus corpus;
  for (std::size_t rel = 0; rel < num_rule_rels; ++rel)
    corpus.store.intern_relation(rel_names[rel]);
  for (std::size_t r = 0; r < num_background; ++r)
    corpus.store.intern_relation("p:" + std::to_string(r));
  std::vector<TupleId> tuple_id(spec.num_tuples, 0);
  for (std::size_t t = 0; t < spec.num_tuples; ++t) {
    if (!tuple_kept[t]) continue;
    const auto [e1, e2] = m.tuple_entities[t];
    const EntityId i1 = corpus.store.intern_entity("e" + std::to_string(e1));
    const EntityId i2 = corpus.store.intern_entity("e" + std::to_string(e2));
    tuple_id[t] = corpus.store.intern_tuple(i1, i2);
  }

  // Holdout per rule: a slice of consequent facts on antecedent tuples.
  std::vector<std::set<std::size_t>> held(num_rule_rels);
  for (std::size_t i = 0; i < spec.rules.size(); ++i) {
    const std::size_t a = rule_rel(spec.rules[i].antecedent);
    const std::size_t c = rule_rel(spec.rules[i].consequent);
    std::vector<std::size_t> slice = member_sets[a];  // tuples carrying A
    rng.shuffle(slice);
    auto count = static_cast<std::size_t>(std::llround(
        spec.holdout_fraction * static_cast<double>(slice.size())));
    // never hold out every consequent fact
    count = std::min(count, member_sets[c].size() - 1);
    for (std::size_t n = 0; n < count; ++n) held[c].insert(slice[n]);
  }

  for (std::size_t rel = 0; rel < num_rule_rels; ++rel) {
    for (std::size_t t : member_sets[rel]) {
      if (held[rel].contains(t))
        corpus.split.test_facts.push_back(
            Fact{static_cast<RelationId>(rel), tuple_id[t]});
      else
        corpus.store.add_fact(static_cast<RelationId>(rel), tuple_id[t]);
    }
  }
  for (std::size_t r = 0; r < num_background; ++r)
    for (std::size_t t = 0; t < spec.num_tuples; ++t)
      if (m.true_facts[r][t])
        corpus.store.add_fact(static_cast<RelationId>(num_rule_rels + r),
                              tuple_id[t]);
  if (corpus.store.num_facts() == 0)
    throw Error("generate_implicature_corpus: no facts generated");
  corpus.store.finalize();

  detail::fill_candidates(corpus);
  corpus.split.validate(corpus.store);
  return corpus;
}

inline SynthCorpus generate_implicature_corpus(const SynthSpec& spec) {
  Rng rng(spec.seed);
  return generate_implicature_corpus(spec, rng);
}

// ---------------------------------------------------------------------------
// Brute-force average precision (independent oracle)
// ---------------------------------------------------------------------------

// Direct O(n^2) enumeration: precision at each positive rank is recomputed
// by rescanning the prefix. Deliberately shares no code with
// evaluation.average_precision.
inline double brute_force_ap(const std::vector<TupleId>& ranking,
                             const std::set<TupleId>& positives) {
  if (ranking.size() > 20) throw Error("brute_force_ap: ranking too long");
  if (positives.empty()) throw Error("brute_force_ap: no positives");
  double sum = 0.0;
  for (std::size_t k = 0; k < ranking.size(); ++k) {
    if (!positives.contains(ranking[k])) continue;
    std::size_t hits = 0;
    for (std::size_t j = 0; j <= k; ++j)
      if (positives.contains(ranking[j])) ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return sum / static_cast<double>(positives.size());
}

}  // namespace uschema
