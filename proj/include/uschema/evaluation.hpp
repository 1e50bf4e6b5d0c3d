#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <span>
#include <unordered_set>
#include <utility>
#include <vector>

#include "uschema/error.hpp"
#include "uschema/fact_store.hpp"
#include "uschema/scoring.hpp"
#include "uschema/text.hpp"

namespace uschema {

// Scores every candidate tuple for relation r and sorts by theta
// descending; ties break by ascending tuple id, so the ordering is
// deterministic bit-for-bit.
inline std::vector<RankedPrediction> rank_candidates(
    RelationId r, std::span<const TupleId> candidates, const ModelParams& p,
    const FactStore& store) {
  if (candidates.empty()) throw Error("rank_candidates: no candidates");
  if (r >= store.num_relations()) throw Error("rank_candidates: unknown relation");
  std::vector<RankedPrediction> ranked;
  ranked.reserve(candidates.size());
  for (TupleId t : candidates) {
    const auto& obs = store.observed_relations(t);
    const double th = theta(p, store, r, t, obs);
    ranked.push_back(RankedPrediction{r, t, th, confidence(th)});
  }
  std::sort(ranked.begin(), ranked.end(),
            [](const RankedPrediction& x, const RankedPrediction& y) {
              if (x.theta != y.theta) return x.theta > y.theta;
              return x.tuple < y.tuple;
            });
  return ranked;
}

// AP = (1/|positives|) * sum over positive ranks k of precision@k.
// Requires a non-empty positive set fully contained in the ranking;
// relations without positives are excluded upstream, never scored 0.
inline double average_precision(std::span<const RankedPrediction> ranked,
                                const std::unordered_set<TupleId>& positives) {
  if (positives.empty()) throw Error("average_precision: no positives");
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (positives.contains(ranked[k].tuple)) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  if (hits != positives.size())
    throw Error("average_precision: positives not all present in ranking");
  return sum / static_cast<double>(positives.size());
}

struct RelationReport {
  RelationId relation = 0;
  std::vector<RankedPrediction> ranked;
  double average_precision = 0.0;
  std::size_t num_positives = 0;
};

// Unweighted arithmetic mean of per-relation APs. weighted_by_positives
// weights each relation by its positive count instead.
inline double mean_average_precision(std::span<const RelationReport> reports,
                                     bool weighted_by_positives = false) {
  if (reports.empty()) throw Error("mean_average_precision: no relations");
  double num = 0.0, den = 0.0;
  for (const RelationReport& r : reports) {
    const double w =
        weighted_by_positives ? static_cast<double>(r.num_positives) : 1.0;
    num += w * r.average_precision;
    den += w;
  }
  return num / den;
}

// Held-out facts plus an explicit candidate universe per relation. The
// training store is passed alongside wherever needed; validate() checks
// the split's invariants against it.
struct EvalSplit {
  std::vector<Fact> test_facts;
  std::map<RelationId, std::vector<TupleId>> candidates;

  void validate(const FactStore& train) const {
    for (const Fact& f : test_facts) {
      if (train.observed(f.relation, f.tuple))
        throw Error("test fact overlaps training store: " +
                    train.relation_name(f.relation));
      const auto it = candidates.find(f.relation);
      if (it == candidates.end() ||
          std::find(it->second.begin(), it->second.end(), f.tuple) ==
              it->second.end())
        throw Error("test fact's tuple missing from candidate list");
    }
  }

  std::unordered_set<TupleId> positives_of(RelationId r) const {
    std::unordered_set<TupleId> ps;
    for (const Fact& f : test_facts)
      if (f.relation == r) ps.insert(f.tuple);
    return ps;
  }
};

// A system's ranked output, per relation, best first.
using SystemRanking = std::map<RelationId, std::vector<TupleId>>;

// TREC-style pooling: per relation, the union of each system's top-depth
// tuples, labeled positive iff present in the truth set. Candidates are
// returned sorted by tuple id.
inline std::map<RelationId, std::vector<std::pair<TupleId, bool>>>
pool_candidates(std::span<const SystemRanking> systems, std::size_t depth,
                const std::vector<Fact>& truth) {
  if (systems.empty()) throw Error("pool_candidates: no systems");
  if (depth == 0) throw Error("pool_candidates: depth must be >= 1");
  std::map<RelationId, std::vector<TupleId>> pools;
  for (const SystemRanking& sys : systems) {
    for (const auto& [r, ranking] : sys) {
      auto& pool = pools[r];
      const std::size_t take = std::min(depth, ranking.size());
      pool.insert(pool.end(), ranking.begin(), ranking.begin() + take);
    }
  }
  std::map<RelationId, std::vector<std::pair<TupleId, bool>>> out;
  for (auto& [r, pool] : pools) {
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    std::unordered_set<TupleId> pos;
    for (const Fact& f : truth)
      if (f.relation == r) pos.insert(f.tuple);
    auto& labeled = out[r];
    labeled.reserve(pool.size());
    for (TupleId t : pool) labeled.emplace_back(t, pos.contains(t));
  }
  return out;
}

struct EvalOptions {
  bool weighted_by_positives = false;
};

struct EvalResult {
  std::vector<RelationReport> reports;
  double map = 0.0;
};

// Ranks every relation that has at least one test positive and a candidate
// list; relations with zero positives are excluded from MAP (AP is
// undefined for them).
inline EvalResult evaluate_split(const ModelParams& params,
                                 const FactStore& store,
                                 const EvalSplit& split,
                                 EvalOptions options = {}) {
  split.validate(store);
  EvalResult result;
  for (const auto& [r, candidates] : split.candidates) {
    const auto positives = split.positives_of(r);
    if (positives.empty()) continue;
    RelationReport report;
    report.relation = r;
    report.ranked = rank_candidates(r, candidates, params, store);
    report.num_positives = positives.size();
    report.average_precision = average_precision(report.ranked, positives);
    result.reports.push_back(std::move(report));
  }
  if (result.reports.empty())
    throw Error("evaluate_split: no relation has test positives");
  result.map =
      mean_average_precision(result.reports, options.weighted_by_positives);
  return result;
}

// relation<TAB>num_positives<TAB>AP per line, then MAP<TAB>value.
inline void write_eval_report(std::ostream& out, const EvalResult& result,
                              const FactStore& store) {
  for (const RelationReport& r : result.reports)
    out << store.relation_name(r.relation) << '\t' << r.num_positives << '\t'
        << format_double(r.average_precision) << '\n';
  out << "MAP\t" << format_double(result.map) << '\n';
}

// relation<TAB>entity1<TAB>entity2<TAB>theta<TAB>confidence<TAB>label
inline void write_prediction_dump(std::ostream& out,
                                  std::span<const RankedPrediction> ranked,
                                  const FactStore& store,
                                  const std::unordered_set<TupleId>& positives) {
  for (const RankedPrediction& p : ranked) {
    const auto [e1, e2] = store.tuple_slots(p.tuple);
    out << store.relation_name(p.relation) << '\t' << store.entity_name(e1)
        << '\t' << store.entity_name(e2) << '\t' << format_double(p.theta)
        << '\t' << format_double(p.confidence) << '\t'
        << (positives.contains(p.tuple) ? 1 : 0) << '\n';
  }
}

}  // namespace uschema
