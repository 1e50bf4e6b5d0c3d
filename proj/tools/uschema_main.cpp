// Command-line surface: ingest / train / predict / eval / gradcheck / synth.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "uschema/uschema.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;

using nlohmann::json;

std::size_t levenshtein(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> nearest_relation_names(const uschema::FactStore& store,
                                                const std::string& name,
                                                std::size_t count) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  for (uschema::RelationId r = 0; r < store.num_relations(); ++r)
    scored.emplace_back(levenshtein(name, store.relation_name(r)),
                        store.relation_name(r));
  std::sort(scored.begin(), scored.end());
  std::vector<std::string> names;
  for (std::size_t i = 0; i < std::min(count, scored.size()); ++i)
    names.push_back(scored[i].second);
  return names;
}

struct TrainCli {
  std::string facts_path;
  std::string out_path;
  std::string report_path;
  std::string model_kind = "nfe";
  uschema::TrainConfig config;
  double l2_all = 0.01;
  double l2_a = -1, l2_v = -1, l2_w = -1, l2_d = -1, l2_te = -1;
  std::vector<std::string> structured_prefixes{"/"};

  uschema::TrainConfig resolve() const {
    uschema::TrainConfig cfg = config;
    cfg.flags = uschema::ModelFlags::parse(model_kind);
    cfg.l2 = uschema::L2Config{l2_all, l2_all, l2_all, l2_all, l2_all};
    if (l2_a >= 0) cfg.l2.a = l2_a;
    if (l2_v >= 0) cfg.l2.v = l2_v;
    if (l2_w >= 0) cfg.l2.w = l2_w;
    if (l2_d >= 0) cfg.l2.d = l2_d;
    if (l2_te >= 0) cfg.l2.te = l2_te;
    return cfg;
  }
};

int cmd_ingest(const std::string& facts_path,
               const std::vector<std::string>& prefixes) {
  const uschema::FactStore store = uschema::ingest_file(facts_path, prefixes);
  std::size_t structured = 0;
  for (uschema::RelationId r = 0; r < store.num_relations(); ++r)
    if (store.relation_source(r) == uschema::RelationSource::structured)
      ++structured;
  std::cout << "relations\t" << store.num_relations() << "\t(structured "
            << structured << ", pattern " << store.num_relations() - structured
            << ")\n"
            << "entities\t" << store.num_entities() << '\n'
            << "tuples\t" << store.num_tuples() << '\n'
            << "facts\t" << store.num_facts() << '\n';
  return kExitOk;
}

int cmd_train(const TrainCli& cli) {
  const uschema::TrainConfig cfg = cli.resolve();
  cfg.validate();
  const uschema::FactStore store =
      uschema::ingest_file(cli.facts_path, cli.structured_prefixes);
  uschema::TrainReport report;
  const uschema::ModelParams params = uschema::train(store, cfg, &report);
  report.write(std::cout);
  if (!cli.report_path.empty()) {
    std::ofstream out(cli.report_path, std::ios::binary);
    if (!out) throw uschema::Error("cannot open report file: " + cli.report_path);
    report.write(out);
  }
  uschema::save_model_file(cli.out_path, params, store, cfg.seed);
  std::cout << "model\t" << cli.out_path << '\n';
  return kExitOk;
}

int cmd_predict(const std::string& model_path, const std::string& relation,
                std::size_t top_k, bool include_observed) {
  const uschema::ModelFile model = uschema::load_model_file(model_path);
  const auto rel = model.store.find_relation(relation);
  if (!rel) {
    std::cerr << "unknown relation: " << relation << "\nnearest names:\n";
    for (const std::string& name :
         nearest_relation_names(model.store, relation, 5))
      std::cerr << "  " << name << '\n';
    return kExitData;
  }
  std::vector<uschema::TupleId> candidates;
  for (uschema::TupleId t = 0; t < model.store.num_tuples(); ++t)
    if (include_observed || !model.store.observed(*rel, t))
      candidates.push_back(t);
  if (candidates.empty()) {
    std::cerr << "relation " << relation
              << " is observed for every tuple; nothing to predict\n";
    return kExitData;
  }
  auto ranked =
      uschema::rank_candidates(*rel, candidates, model.params, model.store);
  if (ranked.size() > top_k) ranked.resize(top_k);
  std::unordered_set<uschema::TupleId> observed_set;
  for (const auto& pred : ranked)
    if (model.store.observed(*rel, pred.tuple)) observed_set.insert(pred.tuple);
  uschema::write_prediction_dump(std::cout, ranked, model.store, observed_set);
  return kExitOk;
}

std::vector<uschema::Fact> read_test_facts(const std::string& path,
                                           const uschema::FactStore& store) {
  std::ifstream in(path);
  if (!in) throw uschema::Error("cannot open test facts file: " + path);
  std::vector<uschema::Fact> facts;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto parsed = uschema::parse_fact_line(line, line_number);
    if (!parsed) continue;
    const auto rel = store.find_relation(parsed->relation);
    if (!rel)
      throw uschema::ParseError(line_number,
                                "relation not in model: " + parsed->relation);
    const auto e1 = store.find_entity(parsed->entity1);
    const auto e2 = store.find_entity(parsed->entity2);
    if (!e1 || !e2)
      throw uschema::ParseError(
          line_number, "entity not in model: " +
                           (e1 ? parsed->entity2 : parsed->entity1));
    const auto t = store.find_tuple(*e1, *e2);
    if (!t)
      throw uschema::ParseError(line_number,
                                "tuple not in model (test tuples must appear "
                                "in training with other relations): <" +
                                    parsed->entity1 + ", " + parsed->entity2 +
                                    ">");
    facts.push_back(uschema::Fact{*rel, *t});
  }
  std::sort(facts.begin(), facts.end());
  facts.erase(std::unique(facts.begin(), facts.end()), facts.end());
  if (facts.empty()) throw uschema::Error("no test facts in " + path);
  return facts;
}

int cmd_eval(const std::string& model_path, const std::string& test_path,
             const std::string& collection, const std::string& out_path,
             const std::string& dump_path, bool weighted) {
  const uschema::ModelFile model = uschema::load_model_file(model_path);
  std::vector<uschema::Fact> test_facts =
      read_test_facts(test_path, model.store);

  for (const uschema::Fact& f : test_facts)
    if (model.store.observed(f.relation, f.tuple))
      throw uschema::Error(
          "test facts overlap training facts (first: " +
          model.store.relation_name(f.relation) + "); evaluating a model "
          "against its own training facts is rejected");

  if (collection != "all") {
    const auto want = collection == "structured"
                          ? uschema::RelationSource::structured
                          : uschema::RelationSource::pattern;
    std::erase_if(test_facts, [&](const uschema::Fact& f) {
      return model.store.relation_source(f.relation) != want;
    });
    if (test_facts.empty())
      throw uschema::Error("empty collection: no test relations tagged " +
                           collection);
  }

  uschema::EvalSplit split;
  split.test_facts = std::move(test_facts);
  std::set<uschema::RelationId> rels;
  for (const uschema::Fact& f : split.test_facts) rels.insert(f.relation);
  for (uschema::RelationId r : rels) {
    std::vector<uschema::TupleId> cands;
    for (uschema::TupleId t = 0; t < model.store.num_tuples(); ++t)
      if (!model.store.observed(r, t)) cands.push_back(t);
    split.candidates[r] = std::move(cands);
  }

  const uschema::EvalResult result = uschema::evaluate_split(
      model.params, model.store, split, uschema::EvalOptions{weighted});

  if (out_path.empty()) {
    uschema::write_eval_report(std::cout, result, model.store);
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw uschema::Error("cannot open report file: " + out_path);
    uschema::write_eval_report(out, result, model.store);
    std::cout << "MAP\t" << uschema::format_double(result.map) << '\n';
  }
  if (!dump_path.empty()) {
    std::ofstream out(dump_path, std::ios::binary);
    if (!out) throw uschema::Error("cannot open dump file: " + dump_path);
    for (const uschema::RelationReport& rep : result.reports)
      uschema::write_prediction_dump(out, rep.ranked, model.store,
                                     split.positives_of(rep.relation));
  }
  return kExitOk;
}

int cmd_gradcheck(const std::string& model_kind, std::size_t k_f,
                  std::size_t k_e, std::size_t trials, double eps, double tol,
                  std::uint64_t seed) {
  std::vector<std::string> kinds;
  if (model_kind == "all") {
    kinds = {"f", "n", "e", "nf", "nfe"};
  } else {
    kinds = {model_kind};
  }
  bool ok = true;
  for (const std::string& kind : kinds) {
    uschema::GradCheckConfig cfg;
    cfg.flags = uschema::ModelFlags::parse(kind);
    cfg.max_k_f = k_f;
    cfg.max_k_e = k_e;
    cfg.trials = trials;
    cfg.eps = eps;
    cfg.rel_tol = tol;
    cfg.seed = seed;
    const uschema::GradCheckResult result = uschema::gradient_check(cfg);
    std::cout << "gradcheck\t" << kind << "\ttrials\t" << result.trials
              << "\tcoordinates\t" << result.coordinates << "\tmax_rel_err\t"
              << uschema::format_double(result.max_rel_err) << '\t'
              << (result.passed() ? "PASS" : "FAIL") << '\n';
    ok = ok && result.passed();
  }
  return ok ? kExitOk : kExitVerification;
}

struct SynthCli {
  std::string kind = "lowrank";
  std::string out_dir;
  uschema::SynthSpec spec;
  std::vector<std::string> rule_args;
};

int cmd_synth(const SynthCli& cli) {
  uschema::SynthSpec spec = cli.spec;
  for (const std::string& arg : cli.rule_args) {
    std::stringstream ss(arg);
    std::string antecedent, consequent, coverage;
    if (!std::getline(ss, antecedent, ',') ||
        !std::getline(ss, consequent, ',') || !std::getline(ss, coverage))
      throw uschema::Error("bad --rule, expected 'A,B,coverage': " + arg);
    spec.rules.push_back(uschema::ImplicatureRule{
        antecedent, consequent, uschema::parse_double(coverage)});
  }
  if (cli.kind == "lowrank" && !spec.rules.empty())
    throw uschema::Error("--rule requires --kind implicature");

  const uschema::SynthCorpus corpus =
      cli.kind == "lowrank" ? uschema::generate_lowrank_corpus(spec)
                            : uschema::generate_implicature_corpus(spec);

  namespace fs = std::filesystem;
  fs::create_directories(cli.out_dir);
  const fs::path dir(cli.out_dir);
  {
    std::ofstream out(dir / "train.tsv", std::ios::binary);
    if (!out) throw uschema::Error("cannot write train.tsv");
    uschema::write_facts_tsv(out, corpus.store);
  }
  {
    std::ofstream out(dir / "test.tsv", std::ios::binary);
    if (!out) throw uschema::Error("cannot write test.tsv");
    for (const uschema::Fact& f : corpus.split.test_facts) {
      const auto [e1, e2] = corpus.store.tuple_slots(f.tuple);
      out << corpus.store.relation_name(f.relation) << '\t'
          << corpus.store.entity_name(e1) << '\t'
          << corpus.store.entity_name(e2) << '\n';
    }
  }
  {
    json manifest;
    manifest["kind"] = cli.kind;
    manifest["num_relations"] = spec.num_relations;
    manifest["num_tuples"] = spec.num_tuples;
    manifest["num_entities"] = spec.num_entities;
    manifest["rank"] = spec.rank;
    manifest["fact_threshold"] = spec.fact_threshold;
    manifest["holdout_fraction"] = spec.holdout_fraction;
    manifest["seed"] = spec.seed;
    manifest["rules"] = json::array();
    for (const auto& rule : spec.rules)
      manifest["rules"].push_back({{"antecedent", rule.antecedent},
                                   {"consequent", rule.consequent},
                                   {"coverage", rule.coverage}});
    manifest["output"] = {{"relations", corpus.store.num_relations()},
                          {"entities", corpus.store.num_entities()},
                          {"tuples", corpus.store.num_tuples()},
                          {"train_facts", corpus.store.num_facts()},
                          {"test_facts", corpus.split.test_facts.size()}};
    std::ofstream out(dir / "manifest.json", std::ios::binary);
    if (!out) throw uschema::Error("cannot write manifest.json");
    out << manifest.dump(2) << '\n';
  }
  std::cout << "train_facts\t" << corpus.store.num_facts() << '\n'
            << "test_facts\t" << corpus.split.test_facts.size() << '\n'
            << "out\t" << cli.out_dir << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"universal-schema relation prediction"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "validate a facts file and report counts");
  std::string ingest_facts;
  std::vector<std::string> ingest_prefixes{"/"};
  ingest->add_option("--facts", ingest_facts, "facts TSV")->required();
  ingest->add_option("--structured-prefix", ingest_prefixes,
                     "name prefixes tagged as structured relations");

  // train
  auto* train = app.add_subcommand("train", "learn model parameters from facts");
  TrainCli train_cli;
  train->set_config("--config", "", "config file (INI/TOML); flags override it");
  train->add_option("--facts", train_cli.facts_path, "training facts TSV")->required();
  train->add_option("--out", train_cli.out_path, "output model file")->required();
  train->add_option("--report", train_cli.report_path, "write the run report here");
  train->add_option("--model", train_cli.model_kind,
                    "model kind: combination of n, f, e");
  train->add_option("--kf", train_cli.config.k_f, "latent dimension for F");
  train->add_option("--ke", train_cli.config.k_e, "latent dimension for E");
  train->add_option("--epochs", train_cli.config.epochs, "training epochs");
  train->add_option("--lr", train_cli.config.learning_rate, "SGD learning rate");
  train->add_option("--l2", train_cli.l2_all, "L2 strength for all components");
  train->add_option("--l2-a", train_cli.l2_a, "L2 for relation vectors");
  train->add_option("--l2-v", train_cli.l2_v, "L2 for tuple vectors");
  train->add_option("--l2-w", train_cli.l2_w, "L2 for neighborhood weights");
  train->add_option("--l2-d", train_cli.l2_d, "L2 for slot vectors");
  train->add_option("--l2-te", train_cli.l2_te, "L2 for entity vectors");
  train->add_option("--negatives", train_cli.config.negatives_per_positive,
                    "negatives per positive");
  train->add_option("--seed", train_cli.config.seed, "RNG seed");
  train->add_option("--workers", train_cli.config.workers,
                    "parallel workers (>1 gives up determinism)");
  train->add_option("--init-scale", train_cli.config.init_scale,
                    "stddev of embedding initialization");
  train->add_option("--structured-prefix", train_cli.structured_prefixes,
                    "name prefixes tagged as structured relations");

  // predict
  auto* predict = app.add_subcommand("predict", "rank tuples for a relation");
  std::string predict_model, predict_relation;
  std::size_t predict_top = 10;
  bool predict_include_observed = false;
  predict->add_option("--model", predict_model, "model file")->required();
  predict->add_option("--relation", predict_relation, "relation name")->required();
  predict->add_option("--top", predict_top, "number of predictions");
  predict->add_flag("--include-observed", predict_include_observed,
                    "also rank tuples already observed with the relation");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate ranked predictions with MAP");
  std::string eval_model, eval_test, eval_out, eval_dump;
  std::string eval_collection = "all";
  bool eval_weighted = false;
  eval->add_option("--model", eval_model, "model file")->required();
  eval->add_option("--test", eval_test, "held-out facts TSV")->required();
  eval->add_option("--collection", eval_collection,
                   "relation collection: all, structured or pattern")
      ->check(CLI::IsMember({"all", "structured", "pattern"}));
  eval->add_option("--out", eval_out, "report file (stdout if omitted)");
  eval->add_option("--dump", eval_dump, "prediction dump file");
  eval->add_flag("--weighted", eval_weighted, "weight MAP by positive counts");

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "compare analytic SGD gradients with finite differences");
  std::string gc_model = "all";
  std::size_t gc_kf = 3, gc_ke = 3, gc_trials = 100;
  double gc_eps = 1e-5, gc_tol = 1e-4;
  std::uint64_t gc_seed = 20240601;
  gradcheck->add_option("--model", gc_model, "model kind or 'all'");
  gradcheck->add_option("--kf", gc_kf, "max latent dimension for F");
  gradcheck->add_option("--ke", gc_ke, "max latent dimension for E");
  gradcheck->add_option("--trials", gc_trials, "random instances per kind");
  gradcheck->add_option("--eps", gc_eps, "finite-difference step");
  gradcheck->add_option("--tol", gc_tol, "relative tolerance");
  gradcheck->add_option("--seed", gc_seed, "RNG seed");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  SynthCli synth_cli;
  synth->add_option("--kind", synth_cli.kind, "lowrank or implicature")
      ->check(CLI::IsMember({"lowrank", "implicature"}));
  synth->add_option("--out", synth_cli.out_dir, "output directory")->required();
  synth->add_option("--relations", synth_cli.spec.num_relations, "relation count");
  synth->add_option("--tuples", synth_cli.spec.num_tuples, "tuple count");
  synth->add_option("--entities", synth_cli.spec.num_entities, "entity count");
  synth->add_option("--rank", synth_cli.spec.rank, "ground-truth rank");
  synth->add_option("--threshold", synth_cli.spec.fact_threshold,
                    "fact threshold on ground-truth theta");
  synth->add_option("--holdout", synth_cli.spec.holdout_fraction,
                    "held-out fraction of facts");
  synth->add_option("--seed", synth_cli.spec.seed, "RNG seed");
  synth->add_option("--rule", synth_cli.rule_args,
                    "implicature rule 'A,B,coverage' (repeatable)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*ingest) return cmd_ingest(ingest_facts, ingest_prefixes);
    if (*train) return cmd_train(train_cli);
    if (*predict)
      return cmd_predict(predict_model, predict_relation, predict_top,
                         predict_include_observed);
    if (*eval)
      return cmd_eval(eval_model, eval_test, eval_collection, eval_out,
                      eval_dump, eval_weighted);
    if (*gradcheck)
      return cmd_gradcheck(gc_model, gc_kf, gc_ke, gc_trials, gc_eps, gc_tol,
                           gc_seed);
    if (*synth) return cmd_synth(synth_cli);
  } catch (const uschema::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
