#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "uschema/error.hpp"
#include "uschema/fact_store.hpp"

namespace uschema {

// Which score components are active. Canonical spelling orders the letters
// n, f, e ("nf", "nfe", ...), matching the combined-model naming.
struct ModelFlags {
  bool use_n = false;
  bool use_f = false;
  bool use_e = false;

  bool any() const { return use_n || use_f || use_e; }

  static ModelFlags parse(std::string_view s) {
    ModelFlags flags;
    for (char c : s) {
      switch (c) {
        case 'n': case 'N': flags.use_n = true; break;
        case 'f': case 'F': flags.use_f = true; break;
        case 'e': case 'E': flags.use_e = true; break;
        default:
          throw Error("unknown model kind letter '" + std::string(1, c) +
                      "' (expected a combination of n, f, e)");
      }
    }
    if (!flags.any()) throw Error("empty model kind");
    return flags;
  }

  std::string to_string() const {
    std::string s;
    if (use_n) s += 'n';
    if (use_f) s += 'f';
    if (use_e) s += 'e';
    return s;
  }

  friend bool operator==(const ModelFlags&, const ModelFlags&) = default;
};

// Directed relation-relation weights w[r][r'] stored CSR-style over a fixed
// support (the co-occurring pairs of a fact store). Keys outside the
// support read as 0 and cannot be written; self pairs are rejected.
class SparseWeights {
 public:
  SparseWeights() : row_start_(1, 0) {}

  static SparseWeights from_pairs(
      std::size_t num_relations,
      std::vector<std::pair<RelationId, RelationId>> pairs) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    SparseWeights w;
    w.row_start_.assign(num_relations + 1, 0);
    w.cols_.reserve(pairs.size());
    for (const auto& [r, rp] : pairs) {
      if (r >= num_relations || rp >= num_relations)
        throw Error("weight key out of range");
      if (r == rp) throw Error("self pair in weight support");
      w.cols_.push_back(rp);
      ++w.row_start_[r + 1];
    }
    for (std::size_t i = 1; i < w.row_start_.size(); ++i)
      w.row_start_[i] += w.row_start_[i - 1];
    w.values_.assign(w.cols_.size(), 0.0);
    return w;
  }

  std::size_t num_rows() const { return row_start_.size() - 1; }
  std::size_t nnz() const { return cols_.size(); }

  std::span<const RelationId> row_cols(RelationId r) const {
    check_row(r);
    return {cols_.data() + row_start_[r], row_start_[r + 1] - row_start_[r]};
  }
  std::span<const double> row_values(RelationId r) const {
    check_row(r);
    return {values_.data() + row_start_[r], row_start_[r + 1] - row_start_[r]};
  }

  // Index into the flat value array, or npos if (r, r') is not in support.
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t index_of(RelationId r, RelationId rp) const {
    check_row(r);
    const auto begin = cols_.begin() + static_cast<std::ptrdiff_t>(row_start_[r]);
    const auto end = cols_.begin() + static_cast<std::ptrdiff_t>(row_start_[r + 1]);
    const auto it = std::lower_bound(begin, end, rp);
    if (it == end || *it != rp) return npos;
    return static_cast<std::size_t>(it - cols_.begin());
  }

  double get(RelationId r, RelationId rp) const {
    const std::size_t i = index_of(r, rp);
    return i == npos ? 0.0 : values_[i];
  }

  double& value_at(std::size_t index) { return values_[index]; }
  double value_at(std::size_t index) const { return values_[index]; }
  RelationId col_at(std::size_t index) const { return cols_[index]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }

  // (r, r', value) triples in canonical (row-major, column-sorted) order.
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (RelationId r = 0; r < num_rows(); ++r)
      for (std::size_t i = row_start_[r]; i < row_start_[r + 1]; ++i)
        fn(r, cols_[i], values_[i]);
  }

  friend bool operator==(const SparseWeights&, const SparseWeights&) = default;

 private:
  void check_row(RelationId r) const {
    if (r >= num_rows()) throw Error("weight row out of range");
  }

  std::vector<std::size_t> row_start_;
  std::vector<RelationId> cols_;
  std::vector<double> values_;
};

// All learned parameters. Sections are allocated only for enabled
// components: a/v for F, w for N, d/te for E.
//   a  : relation vectors,      num_relations x k_f
//   v  : tuple vectors,         num_tuples x k_f
//   w  : neighborhood weights,  sparse over co-occurring pairs
//   d  : per-relation slot vectors, num_relations x 2 x k_e
//   te : entity vectors,        num_entities x k_e
struct ModelParams {
  ModelFlags flags;
  std::size_t k_f = 0;
  std::size_t k_e = 0;
  std::size_t num_relations = 0;
  std::size_t num_entities = 0;
  std::size_t num_tuples = 0;

  std::vector<double> a;
  std::vector<double> v;
  SparseWeights w;
  std::vector<double> d;
  std::vector<double> te;

  std::span<const double> a_row(RelationId r) const {
    return {a.data() + static_cast<std::size_t>(r) * k_f, k_f};
  }
  std::span<double> a_row(RelationId r) {
    return {a.data() + static_cast<std::size_t>(r) * k_f, k_f};
  }
  std::span<const double> v_row(TupleId t) const {
    return {v.data() + static_cast<std::size_t>(t) * k_f, k_f};
  }
  std::span<double> v_row(TupleId t) {
    return {v.data() + static_cast<std::size_t>(t) * k_f, k_f};
  }
  // slot is 0 or 1 (first/second argument of the tuple).
  std::span<const double> d_slot(RelationId r, std::size_t slot) const {
    return {d.data() + (static_cast<std::size_t>(r) * 2 + slot) * k_e, k_e};
  }
  std::span<double> d_slot(RelationId r, std::size_t slot) {
    return {d.data() + (static_cast<std::size_t>(r) * 2 + slot) * k_e, k_e};
  }
  std::span<const double> te_row(EntityId e) const {
    return {te.data() + static_cast<std::size_t>(e) * k_e, k_e};
  }
  std::span<double> te_row(EntityId e) {
    return {te.data() + static_cast<std::size_t>(e) * k_e, k_e};
  }

  void validate() const {
    if (!flags.any()) throw Error("model has no enabled components");
    auto check_finite = [](std::span<const double> xs, const char* what) {
      for (double x : xs)
        if (!std::isfinite(x)) throw Error(std::string("non-finite value in ") + what);
    };
    if (flags.use_f) {
      if (a.size() != num_relations * k_f) throw Error("bad a dimensions");
      if (v.size() != num_tuples * k_f) throw Error("bad v dimensions");
      check_finite(a, "a");
      check_finite(v, "v");
    } else if (!a.empty() || !v.empty()) {
      throw Error("latent-feature section present but F disabled");
    }
    if (flags.use_n) {
      if (w.num_rows() != num_relations) throw Error("bad w dimensions");
      check_finite(w.values(), "w");
    } else if (w.nnz() != 0) {
      throw Error("neighborhood section present but N disabled");
    }
    if (flags.use_e) {
      if (d.size() != num_relations * 2 * k_e) throw Error("bad d dimensions");
      if (te.size() != num_entities * k_e) throw Error("bad t_e dimensions");
      check_finite(d, "d");
      check_finite(te, "t_e");
    } else if (!d.empty() || !te.empty()) {
      throw Error("entity section present but E disabled");
    }
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

inline double dot(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("dot: dimension mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * y[k];
  return s;
}

// Logistic link from natural parameter to confidence. For very negative
// theta the equivalent exp(theta)/(1+exp(theta)) form is used so exp never
// overflows; the branch point is fixed at -500 so results are bit-stable.
inline double confidence(double theta) {
  if (!std::isfinite(theta)) throw Error("confidence: non-finite theta");
  if (theta < -500.0) {
    const double e = std::exp(theta);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(-theta));
}

// theta_f: dot product of relation and tuple latent vectors.
inline double theta_f(const ModelParams& p, RelationId r, TupleId t) {
  if (!p.flags.use_f) throw Error("theta_f: F component disabled");
  if (r >= p.num_relations || t >= p.num_tuples)
    throw Error("theta_f: id out of range");
  return dot(p.a_row(r), p.v_row(t));
}

// theta_n: sum of w[r][r'] over observed relations r' of the tuple, with r
// itself excluded. Pairs outside the trained support contribute 0.
inline double theta_n(const ModelParams& p, RelationId r,
                      std::span<const RelationId> observed) {
  if (!p.flags.use_n) throw Error("theta_n: N component disabled");
  double s = 0.0;
  for (RelationId rp : observed) {
    if (rp == r) continue;
    s += p.w.get(r, rp);
  }
  return s;
}

// theta_e: selectional-preference score, one slot vector per argument
// position dotted with the entity vector filling that slot.
inline double theta_e(const ModelParams& p, RelationId r, EntityId e1,
                      EntityId e2) {
  if (!p.flags.use_e) throw Error("theta_e: E component disabled");
  if (r >= p.num_relations || e1 >= p.num_entities || e2 >= p.num_entities)
    throw Error("theta_e: id out of range");
  return dot(p.d_slot(r, 0), p.te_row(e1)) + dot(p.d_slot(r, 1), p.te_row(e2));
}

// Combined score: sum of the enabled components.
inline double theta(const ModelParams& p, const FactStore& store, RelationId r,
                    TupleId t, std::span<const RelationId> observed) {
  if (!p.flags.any()) throw Error("theta: no components enabled");
  double s = 0.0;
  if (p.flags.use_n) s += theta_n(p, r, observed);
  if (p.flags.use_f) s += theta_f(p, r, t);
  if (p.flags.use_e) {
    const auto [e1, e2] = store.tuple_slots(t);
    s += theta_e(p, r, e1, e2);
  }
  return s;
}

struct RankedPrediction {
  RelationId relation;
  TupleId tuple;
  double theta;
  double confidence;

  friend bool operator==(const RankedPrediction&,
                         const RankedPrediction&) = default;
};

}  // namespace uschema
