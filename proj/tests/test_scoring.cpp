#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "uschema/fact_store.hpp"
#include "uschema/rng.hpp"
#include "uschema/scoring.hpp"

using namespace uschema;

namespace {

// F-only params with explicit vectors.
ModelParams f_params(std::vector<std::vector<double>> a,
                     std::vector<std::vector<double>> v) {
  ModelParams p;
  p.flags = ModelFlags{.use_f = true};
  p.k_f = a.at(0).size();
  p.num_relations = a.size();
  p.num_tuples = v.size();
  for (const auto& row : a) p.a.insert(p.a.end(), row.begin(), row.end());
  for (const auto& row : v) p.v.insert(p.v.end(), row.begin(), row.end());
  return p;
}

SparseWeights weights_from(
    std::size_t num_relations,
    const std::vector<std::tuple<RelationId, RelationId, double>>& entries) {
  std::vector<std::pair<RelationId, RelationId>> keys;
  for (const auto& [r, rp, value] : entries) keys.emplace_back(r, rp);
  SparseWeights w = SparseWeights::from_pairs(num_relations, keys);
  for (const auto& [r, rp, value] : entries)
    w.value_at(w.index_of(r, rp)) = value;
  return w;
}

}  // namespace

TEST_CASE("confidence basics") {
  REQUIRE(confidence(0.0) == 0.5);
  REQUIRE(confidence(50.0) == Catch::Approx(1.0).margin(1e-15));
  REQUIRE(confidence(2.0) == 1.0 / (1.0 + std::exp(-2.0)));
  REQUIRE_THROWS_AS(confidence(std::numeric_limits<double>::quiet_NaN()), Error);
  REQUIRE_THROWS_AS(confidence(std::numeric_limits<double>::infinity()), Error);
}

TEST_CASE("confidence symmetry, monotonicity and overflow safety") {
  // symmetric grid, includes the -500 branch point on both sides
  const int n = 10000;
  double prev = -1.0;
  for (int i = 0; i <= n; ++i) {
    const double theta = -10000.0 + 20000.0 * i / n;
    const double c = confidence(theta);
    REQUIRE(std::isfinite(c));
    REQUIRE(c >= 0.0);
    REQUIRE(c <= 1.0);
    REQUIRE(c + confidence(-theta) == Catch::Approx(1.0).margin(1e-15));
    REQUIRE(c >= prev);
    prev = c;
  }
  REQUIRE(confidence(-600.0) > 0.0);  // guarded branch keeps a signal
  for (double theta : {-3.0, -0.5, 0.25, 4.0})
    REQUIRE(confidence(theta) > 0.0);
}

TEST_CASE("theta_f examples") {
  const ModelParams zero = f_params({{0.0, 0.0}}, {{3.0, -1.0}});
  REQUIRE(theta_f(zero, 0, 0) == 0.0);

  const ModelParams p = f_params({{1.0, 2.0}}, {{3.0, -1.0}});
  REQUIRE(theta_f(p, 0, 0) == 1.0);

  const ModelParams q = f_params({{0.5, 0.5}}, {{0.5, 0.5}});
  REQUIRE(theta_f(q, 0, 0) == 0.5);

  REQUIRE_THROWS_AS(theta_f(p, 1, 0), Error);
  REQUIRE_THROWS_AS(theta_f(p, 0, 7), Error);
}

TEST_CASE("theta_f is bilinear in the relation vector") {
  Rng rng(31);
  for (int iter = 0; iter < 100; ++iter) {
    const std::size_t k = 1 + rng.uniform_below(6);
    std::vector<double> a(k), v(k);
    for (auto& x : a) x = rng.gaussian();
    for (auto& x : v) x = rng.gaussian();
    const double c = rng.gaussian();
    ModelParams p = f_params({a}, {v});
    const double base = theta_f(p, 0, 0);
    for (auto& x : p.a) x *= c;
    const double scaled = theta_f(p, 0, 0);
    REQUIRE(scaled == Catch::Approx(c * base).epsilon(1e-12).margin(1e-14));
  }
}

TEST_CASE("theta_n sums directed weights with self-exclusion") {
  ModelParams p;
  p.flags = ModelFlags{.use_n = true};
  p.num_relations = 4;
  p.w = weights_from(4, {{0, 1, 0.7}, {0, 2, -0.5}, {1, 0, 0.2}});

  const std::vector<RelationId> obs_self{0, 1};
  REQUIRE(theta_n(p, 0, obs_self) == 0.7);  // r itself excluded

  REQUIRE(theta_n(p, 0, std::vector<RelationId>{}) == 0.0);

  ModelParams q;
  q.flags = ModelFlags{.use_n = true};
  q.num_relations = 4;
  q.w = weights_from(4, {{0, 1, 0.2}, {0, 2, -0.5}});
  const std::vector<RelationId> obs{1, 2};
  REQUIRE(theta_n(q, 0, obs) == Catch::Approx(-0.3).margin(1e-15));

  // absent keys contribute zero
  const std::vector<RelationId> obs_mixed{1, 3};
  REQUIRE(theta_n(q, 0, obs_mixed) == 0.2);
}

TEST_CASE("neighborhood weights are directed") {
  ModelParams p;
  p.flags = ModelFlags{.use_n = true};
  p.num_relations = 2;
  p.w = weights_from(2, {{0, 1, 5.0}, {1, 0, -9.0}});
  const std::vector<RelationId> obs_b{1};
  const std::vector<RelationId> obs_a{0};
  REQUIRE(theta_n(p, 0, obs_b) == 5.0);   // predict A from observed B
  REQUIRE(theta_n(p, 1, obs_a) == -9.0);  // predict B from observed A
}

TEST_CASE("theta_e dots slot vectors with entity vectors") {
  ModelParams p;
  p.flags = ModelFlags{.use_e = true};
  p.k_e = 2;
  p.num_relations = 1;
  p.num_entities = 2;
  p.d = {1.0, 0.0, 0.0, 1.0};        // slot 1: (1,0); slot 2: (0,1)
  p.te = {2.0, 9.0, 9.0, 3.0};       // e0: (2,9); e1: (9,3)
  REQUIRE(theta_e(p, 0, 0, 1) == 5.0);
  REQUIRE(theta_e(p, 0, 1, 0) == 9.0 + 9.0);  // order matters

  ModelParams zero = p;
  zero.d.assign(zero.d.size(), 0.0);
  REQUIRE(theta_e(zero, 0, 0, 1) == 0.0);

  REQUIRE_THROWS_AS(theta_e(p, 0, 0, 5), Error);
}

TEST_CASE("combined theta sums enabled components") {
  FactStore store;
  store.intern_relation("r0");
  store.intern_relation("r1");
  const EntityId a = store.intern_entity("A");
  const EntityId b = store.intern_entity("B");
  const TupleId t = store.intern_tuple(a, b);
  store.add_fact(0, t);
  store.add_fact(1, t);
  store.finalize();

  ModelParams p;
  p.flags = ModelFlags{.use_n = true, .use_f = true, .use_e = true};
  p.k_f = 2;
  p.k_e = 2;
  p.num_relations = 2;
  p.num_entities = 2;
  p.num_tuples = 1;
  p.a = {1.0, 2.0, 0.0, 0.0};
  p.v = {3.0, -1.0};
  p.w = weights_from(2, {{0, 1, -0.3}, {1, 0, 0.1}});
  p.d = {1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0};
  p.te = {2.0, 9.0, 9.0, 3.0};

  const auto& obs = store.observed_relations(t);
  // theta_n(0) = w[0][1] = -0.3; theta_f = 1; theta_e = 5
  REQUIRE(theta(p, store, 0, t, obs) == Catch::Approx(5.7).margin(1e-12));

  ModelParams f_only = p;
  f_only.flags = ModelFlags{.use_f = true};
  f_only.w = SparseWeights{};
  f_only.d.clear();
  f_only.te.clear();
  f_only.k_e = 0;
  REQUIRE(theta(f_only, store, 0, t, obs) == theta_f(f_only, 0, t));

  ModelParams nf = p;
  nf.flags = ModelFlags{.use_n = true, .use_f = true};
  nf.d.clear();
  nf.te.clear();
  nf.k_e = 0;
  nf.w = weights_from(2, {{0, 1, 0.7}});
  nf.a = {0.5, 0.5, 0.0, 0.0};
  nf.v = {1.0, 1.0};
  REQUIRE(theta(nf, store, 0, t, obs) == Catch::Approx(1.7).margin(1e-12));

  ModelParams none = p;
  none.flags = ModelFlags{};
  REQUIRE_THROWS_AS(theta(none, store, 0, t, obs), Error);
}

TEST_CASE("combination additivity on random parameters") {
  Rng rng(77);
  for (int iter = 0; iter < 50; ++iter) {
    FactStore store;
    store.intern_relation("r0");
    store.intern_relation("r1");
    store.intern_relation("r2");
    const EntityId a = store.intern_entity("A");
    const EntityId b = store.intern_entity("B");
    const EntityId c = store.intern_entity("C");
    const TupleId t0 = store.intern_tuple(a, b);
    const TupleId t1 = store.intern_tuple(b, c);
    store.add_fact(0, t0);
    store.add_fact(1, t0);
    store.add_fact(2, t0);
    store.add_fact(1, t1);
    store.finalize();

    ModelParams p;
    p.flags = ModelFlags{.use_n = true, .use_f = true, .use_e = true};
    p.k_f = 3;
    p.k_e = 2;
    p.num_relations = 3;
    p.num_entities = 3;
    p.num_tuples = 2;
    p.a.resize(9);
    p.v.resize(6);
    p.d.resize(12);
    p.te.resize(6);
    for (auto* vec : {&p.a, &p.v, &p.d, &p.te})
      for (auto& x : *vec) x = rng.gaussian();
    p.w = SparseWeights::from_pairs(3, store.cooccurring_relation_pairs());
    for (auto& x : p.w.values()) x = rng.gaussian();

    const RelationId r = static_cast<RelationId>(rng.uniform_below(3));
    const TupleId t = static_cast<TupleId>(rng.uniform_below(2));
    const auto& obs = store.observed_relations(t);
    const auto [e1, e2] = store.tuple_slots(t);
    const double total = theta(p, store, r, t, obs);
    const double parts =
        theta_n(p, r, obs) + theta_f(p, r, t) + theta_e(p, r, e1, e2);
    REQUIRE(total == parts);
  }
}

TEST_CASE("params validation catches bad shapes and values") {
  ModelParams p = f_params({{1.0, 2.0}}, {{3.0, -1.0}});
  REQUIRE_NOTHROW(p.validate());

  ModelParams bad_dim = p;
  bad_dim.a.push_back(1.0);
  REQUIRE_THROWS_AS(bad_dim.validate(), Error);

  ModelParams nan_param = p;
  nan_param.v[0] = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(nan_param.validate(), Error);

  ModelParams no_flags;
  REQUIRE_THROWS_AS(no_flags.validate(), Error);

  REQUIRE_THROWS_AS(SparseWeights::from_pairs(3, {{1, 1}}), Error);
}

TEST_CASE("model flags parse and print canonically") {
  REQUIRE(ModelFlags::parse("nfe") ==
          (ModelFlags{.use_n = true, .use_f = true, .use_e = true}));
  REQUIRE(ModelFlags::parse("FN").to_string() == "nf");
  REQUIRE(ModelFlags::parse("e").to_string() == "e");
  REQUIRE_THROWS_AS(ModelFlags::parse("x"), Error);
  REQUIRE_THROWS_AS(ModelFlags::parse(""), Error);
}
