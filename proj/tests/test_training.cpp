#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <sstream>
#include <vector>

#include "uschema/fact_store.hpp"
#include "uschema/rng.hpp"
#include "uschema/training.hpp"
#include "uschema/verification.hpp"

using namespace uschema;

namespace {

// r0 holds for exactly one of three tuples; r1 for two of them.
FactStore three_tuple_store() {
  FactStore s;
  s.intern_relation("r0");
  s.intern_relation("r1");
  const EntityId a = s.intern_entity("A");
  const EntityId b = s.intern_entity("B");
  const EntityId c = s.intern_entity("C");
  const TupleId t0 = s.intern_tuple(a, b);
  const TupleId t1 = s.intern_tuple(b, c);
  const TupleId t2 = s.intern_tuple(a, c);
  s.add_fact(0, t0);
  s.add_fact(1, t0);
  s.add_fact(1, t1);
  (void)t2;
  s.finalize();
  return s;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.k_f = 3;
  cfg.k_e = 2;
  cfg.epochs = 2;
  cfg.seed = 5;
  return cfg;
}

}  // namespace

TEST_CASE("config validation") {
  TrainConfig cfg = small_config();
  REQUIRE_NOTHROW(cfg.validate());
  cfg.learning_rate = 0.0;
  REQUIRE_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.flags = ModelFlags{};
  REQUIRE_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.workers = 0;
  REQUIRE_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.negatives_per_positive = 0;
  REQUIRE_THROWS_AS(cfg.validate(), Error);
  cfg = small_config();
  cfg.l2.w = -0.1;
  REQUIRE_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("init_params determinism and layout") {
  const FactStore s = three_tuple_store();
  TrainConfig cfg = small_config();

  Rng r1(9), r2(9);
  const ModelParams p1 = init_params(s, cfg, r1);
  const ModelParams p2 = init_params(s, cfg, r2);
  REQUIRE(p1 == p2);

  REQUIRE(p1.a.size() == s.num_relations() * cfg.k_f);
  REQUIRE(p1.v.size() == s.num_tuples() * cfg.k_f);
  REQUIRE(p1.d.size() == s.num_relations() * 2 * cfg.k_e);
  REQUIRE(p1.te.size() == s.num_entities() * cfg.k_e);

  // w support equals the co-occurrence support, zero-valued
  const auto pairs = s.cooccurring_relation_pairs();
  REQUIRE(p1.w.nnz() == pairs.size());
  for (const auto& [r, rp] : pairs) {
    REQUIRE(p1.w.index_of(r, rp) != SparseWeights::npos);
    REQUIRE(p1.w.get(r, rp) == 0.0);
  }

  SECTION("zero init scale zeroes every embedding") {
    cfg.init_scale = 0.0;
    Rng rng(9);
    const ModelParams p = init_params(s, cfg, rng);
    for (double x : p.a) REQUIRE(x == 0.0);
    for (double x : p.v) REQUIRE(x == 0.0);
    for (double x : p.d) REQUIRE(x == 0.0);
    for (double x : p.te) REQUIRE(x == 0.0);
  }

  SECTION("disabled components stay empty") {
    cfg.flags = ModelFlags{.use_n = true};
    Rng rng(9);
    const ModelParams p = init_params(s, cfg, rng);
    REQUIRE(p.a.empty());
    REQUIRE(p.v.empty());
    REQUIRE(p.d.empty());
    REQUIRE(p.te.empty());
    REQUIRE(p.w.nnz() > 0);
  }

  SECTION("empty store is rejected") {
    FactStore empty;
    empty.finalize();
    Rng rng(9);
    REQUIRE_THROWS_AS(init_params(empty, cfg, rng), Error);
  }
}

TEST_CASE("sample_triple respects the observed set") {
  const FactStore s = three_tuple_store();
  Rng rng(123);

  SECTION("forced support") {
    for (int i = 0; i < 200; ++i) {
      const BprTriple t = sample_triple(s, 0, rng);
      REQUIRE(t.pos == 0);  // r0 holds only for tuple 0
      REQUIRE((t.neg == 1 || t.neg == 2));
    }
  }

  SECTION("negatives are uniform over the valid set") {
    std::map<TupleId, int> counts;
    const int n = 10000;
    for (int i = 0; i < n; ++i) ++counts[sample_triple(s, 0, rng).neg];
    REQUIRE(counts.size() == 2);
    for (const auto& [t, c] : counts) {
      REQUIRE(c > static_cast<int>(0.45 * n));
      REQUIRE(c < static_cast<int>(0.55 * n));
    }
  }

  SECTION("relation observed everywhere is rejected") {
    FactStore full;
    full.intern_relation("r");
    const EntityId a = full.intern_entity("A");
    const EntityId b = full.intern_entity("B");
    full.add_fact(0, full.intern_tuple(a, b));
    full.add_fact(0, full.intern_tuple(b, a));
    full.finalize();
    REQUIRE_THROWS_AS(sample_triple(full, 0, rng), Error);
  }

  SECTION("every sampled negative is unobserved") {
    Rng r2(321);
    for (int i = 0; i < 10000; ++i) {
      const auto rel = static_cast<RelationId>(r2.uniform_below(2));
      const BprTriple t = sample_triple(s, rel, r2);
      REQUIRE(s.observed(t.relation, t.pos));
      REQUIRE(!s.observed(t.relation, t.neg));
    }
  }
}

TEST_CASE("pair_loss closed forms and shape") {
  REQUIRE(pair_loss(1.0, 1.0) == Catch::Approx(std::log(2.0)).margin(1e-15));
  REQUIRE(pair_loss(2.0, 0.0) ==
          Catch::Approx(std::log1p(std::exp(-2.0))).margin(1e-15));
  REQUIRE(pair_loss(0.0, 2.0) ==
          Catch::Approx(2.0 + std::log1p(std::exp(-2.0))).margin(1e-15));

  double prev = pair_loss(-30.0, 0.0);
  for (double delta = -29.5; delta <= 30.0; delta += 0.5) {
    const double l = pair_loss(delta, 0.0);
    REQUIRE(l >= 0.0);
    REQUIRE(l < prev);
    prev = l;
  }
  REQUIRE(pair_loss(60.0, 0.0) == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(pair_loss(-1000.0, 0.0) == 1000.0);  // no overflow
}

TEST_CASE("sgd_step applies the documented update") {
  const FactStore s = three_tuple_store();
  TrainConfig cfg = small_config();
  cfg.flags = ModelFlags{.use_f = true};
  cfg.k_f = 2;
  cfg.learning_rate = 0.1;
  cfg.l2 = L2Config{0, 0, 0, 0, 0};
  cfg.init_scale = 0.0;
  Rng rng(1);
  ModelParams p = init_params(s, cfg, rng);

  // theta_pos = theta_neg = 0, so g is exactly 1/2
  p.v_row(0)[0] = 1.0;
  p.v_row(1)[1] = 1.0;
  const double loss = sgd_step(p, BprTriple{0, 0, 1}, s, cfg);
  REQUIRE(loss == Catch::Approx(std::log(2.0)).margin(1e-15));
  REQUIRE(p.a_row(0)[0] == 0.1 * (0.5 * (1.0 - 0.0)));
  REQUIRE(p.a_row(0)[1] == 0.1 * (0.5 * (0.0 - 1.0)));
  // v updates used the pre-update a_r, which was zero
  REQUIRE(p.v_row(0)[0] == 1.0);
  REQUIRE(p.v_row(1)[1] == 1.0);

  SECTION("zero learning rate and l2 leave params unchanged") {
    TrainConfig frozen = cfg;
    frozen.learning_rate = 0.0;  // bypasses validate() on purpose
    ModelParams q = p;
    sgd_step(q, BprTriple{0, 0, 1}, s, frozen);
    REQUIRE(q == p);
  }
}

TEST_CASE("regularization shrinks the relation vector when gradients vanish") {
  // identical v rows for pos and neg make the a_r gradient term zero
  FactStore s;
  s.intern_relation("r");
  const EntityId a = s.intern_entity("A");
  const EntityId b = s.intern_entity("B");
  const EntityId c = s.intern_entity("C");
  const TupleId t0 = s.intern_tuple(a, b);
  const TupleId t1 = s.intern_tuple(b, c);
  s.add_fact(0, t0);
  (void)t1;
  s.finalize();

  TrainConfig cfg;
  cfg.flags = ModelFlags{.use_f = true};
  cfg.k_f = 3;
  cfg.learning_rate = 0.1;
  cfg.l2 = L2Config{0.5, 0.0, 0.0, 0.0, 0.0};
  cfg.init_scale = 0.0;
  Rng rng(2);
  ModelParams p = init_params(s, cfg, rng);
  p.a = {1.0, -2.0, 0.5};
  p.v = {0.3, 0.4, 0.5, 0.3, 0.4, 0.5};  // v[t0] == v[t1]

  auto norm = [&] {
    double n = 0.0;
    for (double x : p.a) n += x * x;
    return std::sqrt(n);
  };
  double prev = norm();
  for (int i = 0; i < 50; ++i) {
    sgd_step(p, BprTriple{0, t0, t1}, s, cfg);
    const double cur = norm();
    REQUIRE(cur < prev);
    prev = cur;
  }
}

TEST_CASE("train epochs=0 returns the initial state") {
  const FactStore s = three_tuple_store();
  TrainConfig cfg = small_config();
  cfg.epochs = 0;
  const ModelParams trained = train(s, cfg);
  const ModelParams init = initial_params(s, cfg);
  REQUIRE(trained == init);
}

TEST_CASE("train is bit-deterministic with one worker") {
  const FactStore s = three_tuple_store();
  TrainConfig cfg = small_config();
  cfg.epochs = 5;
  TrainReport rep1, rep2;
  const ModelParams p1 = train(s, cfg, &rep1);
  const ModelParams p2 = train(s, cfg, &rep2);
  REQUIRE(p1 == p2);
  REQUIRE(rep1.epochs.size() == 5);
  for (std::size_t i = 0; i < 5; ++i)
    REQUIRE(rep1.epochs[i].mean_loss == rep2.epochs[i].mean_loss);

  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  const ModelParams p3 = train(s, other);
  REQUIRE(p1 != p3);
}

TEST_CASE("degenerate relations are skipped and counted") {
  FactStore s;
  s.intern_relation("everywhere");
  s.intern_relation("normal");
  const EntityId a = s.intern_entity("A");
  const EntityId b = s.intern_entity("B");
  const TupleId t0 = s.intern_tuple(a, b);
  const TupleId t1 = s.intern_tuple(b, a);
  s.add_fact(0, t0);
  s.add_fact(0, t1);
  s.add_fact(1, t0);
  s.finalize();

  TrainConfig cfg = small_config();
  cfg.epochs = 3;
  TrainReport report;
  REQUIRE_NOTHROW(train(s, cfg, &report));
  REQUIRE(report.skipped_relations == 1);

  std::ostringstream out;
  report.write(out);
  const std::string text = out.str();
  REQUIRE(text.find("summary\tskipped_relations\t1\tworkers\t1\n") !=
          std::string::npos);
}

TEST_CASE("report lines are tab separated epoch/loss/elapsed") {
  const FactStore s = three_tuple_store();
  TrainConfig cfg = small_config();
  cfg.epochs = 2;
  TrainReport report;
  train(s, cfg, &report);
  std::ostringstream out;
  report.write(out);
  std::istringstream in(out.str());
  std::string line;
  std::size_t epoch_lines = 0;
  while (std::getline(in, line)) {
    if (line.starts_with("summary")) continue;
    const auto fields = split_tabs(line);
    REQUIRE(fields.size() == 3);
    REQUIRE(parse_u64(fields[0]) == epoch_lines + 1);
    REQUIRE(std::isfinite(parse_double(fields[1])));
    ++epoch_lines;
  }
  REQUIRE(epoch_lines == 2);
}

TEST_CASE("training reduces loss on the synthetic low-rank corpus") {
  SynthSpec spec;
  spec.num_relations = 20;
  spec.num_tuples = 100;
  spec.num_entities = 40;
  spec.rank = 3;
  spec.holdout_fraction = 0.2;
  spec.seed = 99;
  const SynthCorpus corpus = generate_lowrank_corpus(spec);

  TrainConfig cfg;
  cfg.flags = ModelFlags{.use_n = true, .use_f = true};
  cfg.k_f = 3;
  cfg.epochs = 5;
  cfg.seed = 7;
  TrainReport report;
  train(corpus.store, cfg, &report);
  REQUIRE(report.epochs.size() == 5);
  for (std::size_t i = 1; i < report.epochs.size(); ++i)
    REQUIRE(report.epochs[i].mean_loss <= report.epochs[i - 1].mean_loss);
}

TEST_CASE("multi-worker training still learns") {
  SynthSpec spec;
  spec.num_relations = 15;
  spec.num_tuples = 80;
  spec.num_entities = 30;
  spec.rank = 3;
  spec.seed = 5;
  const SynthCorpus corpus = generate_lowrank_corpus(spec);

  TrainConfig cfg;
  cfg.flags = ModelFlags{.use_f = true};
  cfg.k_f = 3;
  cfg.epochs = 10;
  cfg.workers = 4;
  cfg.seed = 3;
  TrainReport report;
  const ModelParams p = train(corpus.store, cfg, &report);
  REQUIRE(report.workers == 4);
  REQUIRE_NOTHROW(p.validate());
  REQUIRE(report.epochs.back().mean_loss < report.epochs.front().mean_loss);
}
