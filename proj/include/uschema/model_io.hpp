#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "uschema/error.hpp"
#include "uschema/fact_store.hpp"
#include "uschema/scoring.hpp"
#include "uschema/text.hpp"

namespace uschema {

// Text model file, fully deterministic: canonical section order, canonical
// row order, shortest-round-trip floats. load(save(m)) reproduces
// parameters bit for bit and save(load(f)) reproduces the file byte for
// byte. Parameter sections exist only for enabled components; the
// vocabulary and observed facts ride along so a model file is
// self-contained for prediction and evaluation.
inline constexpr std::string_view kModelFormatName = "uschema-model";
inline constexpr int kModelFormatVersion = 1;

struct ModelFile {
  ModelParams params;
  FactStore store;
  std::uint64_t seed = 0;
};

inline void save_model(std::ostream& out, const ModelParams& params,
                       const FactStore& store, std::uint64_t seed) {
  params.validate();
  if (params.num_relations != store.num_relations() ||
      params.num_entities != store.num_entities() ||
      params.num_tuples != store.num_tuples())
    throw Error("save_model: params and store vocabulary sizes disagree");

  out << kModelFormatName << '\t' << kModelFormatVersion << '\n';
  out << "flags\t" << params.flags.to_string() << '\n';
  out << "kf\t" << params.k_f << '\n';
  out << "ke\t" << params.k_e << '\n';
  out << "seed\t" << seed << '\n';
  out << "counts\t" << store.num_relations() << '\t' << store.num_entities()
      << '\t' << store.num_tuples() << '\t' << store.num_facts() << '\n';

  out << "[relations]\n";
  for (RelationId r = 0; r < store.num_relations(); ++r)
    out << store.relation_name(r) << '\t'
        << source_code(store.relation_source(r)) << '\n';
  out << "[entities]\n";
  for (EntityId e = 0; e < store.num_entities(); ++e)
    out << store.entity_name(e) << '\n';
  out << "[tuples]\n";
  for (TupleId t = 0; t < store.num_tuples(); ++t) {
    const auto [e1, e2] = store.tuple_slots(t);
    out << e1 << '\t' << e2 << '\n';
  }
  out << "[facts]\n";
  for (const Fact& f : store.facts())
    out << f.relation << '\t' << f.tuple << '\n';

  auto write_rows = [&](const std::vector<double>& xs, std::size_t cols) {
    for (std::size_t i = 0; i < xs.size(); i += cols) {
      for (std::size_t k = 0; k < cols; ++k)
        out << (k ? "\t" : "") << format_double(xs[i + k]);
      out << '\n';
    }
  };
  if (params.flags.use_f) {
    out << "[a]\n";
    write_rows(params.a, params.k_f);
    out << "[v]\n";
    write_rows(params.v, params.k_f);
  }
  if (params.flags.use_n) {
    out << "[w]\t" << params.w.nnz() << '\n';
    params.w.for_each([&](RelationId r, RelationId rp, double value) {
      out << r << '\t' << rp << '\t' << format_double(value) << '\n';
    });
  }
  if (params.flags.use_e) {
    out << "[d]\n";
    write_rows(params.d, 2 * params.k_e);
    out << "[te]\n";
    write_rows(params.te, params.k_e);
  }
  out << "[end]\n";
}

inline void save_model_file(const std::string& path, const ModelParams& params,
                            const FactStore& store, std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);  // binary: no newline mangling
  if (!out) throw Error("cannot open model file for writing: " + path);
  save_model(out, params, store, seed);
  if (!out) throw Error("failed writing model file: " + path);
}

namespace detail {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  bool next(std::string& line) {
    if (!std::getline(in_, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_number_;
    return true;
  }

  std::string require(const char* what) {
    std::string line;
    if (!next(line)) throw ParseError(line_number_ + 1,
                                      std::string("expected ") + what);
    return line;
  }

  std::size_t line_number() const { return line_number_; }

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(line_number_, message);
  }

 private:
  std::istream& in_;
  std::size_t line_number_ = 0;
};

}  // namespace detail

inline ModelFile load_model(std::istream& in) {
  detail::LineReader reader(in);

  auto expect_kv = [&](std::string_view key) {
    const std::string line = reader.require(std::string(key).c_str());
    const auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0] != key)
      reader.fail("expected '" + std::string(key) + "<TAB>value'");
    return std::string(fields[1]);
  };

  {
    const std::string line = reader.require("format header");
    const auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0] != kModelFormatName)
      reader.fail("not a model file");
    if (parse_u64(fields[1]) != static_cast<std::uint64_t>(kModelFormatVersion))
      reader.fail("unsupported model format version");
  }

  ModelFile model;
  model.params.flags = ModelFlags::parse(expect_kv("flags"));
  model.params.k_f = parse_u64(expect_kv("kf"));
  model.params.k_e = parse_u64(expect_kv("ke"));
  model.seed = parse_u64(expect_kv("seed"));

  std::size_t num_relations = 0, num_entities = 0, num_tuples = 0,
              num_facts = 0;
  {
    const std::string line = reader.require("counts");
    const auto fields = split_tabs(line);
    if (fields.size() != 5 || fields[0] != "counts")
      reader.fail("expected counts line");
    num_relations = parse_u64(fields[1]);
    num_entities = parse_u64(fields[2]);
    num_tuples = parse_u64(fields[3]);
    num_facts = parse_u64(fields[4]);
  }

  auto expect_section = [&](std::string_view name) {
    const std::string line = reader.require("section header");
    if (line != name)
      reader.fail("expected section " + std::string(name));
  };

  FactStore store({});  // sources come from the file, not a prefix rule
  expect_section("[relations]");
  for (std::size_t r = 0; r < num_relations; ++r) {
    const std::string line = reader.require("relation row");
    const auto fields = split_tabs(line);
    if (fields.size() != 2 || (fields[1] != "s" && fields[1] != "p"))
      reader.fail("expected 'name<TAB>s|p'");
    const RelationId id = store.intern_relation(fields[0]);
    if (id != r) reader.fail("duplicate relation name");
    store.set_relation_source(id, fields[1] == "s"
                                      ? RelationSource::structured
                                      : RelationSource::pattern);
  }
  expect_section("[entities]");
  for (std::size_t e = 0; e < num_entities; ++e) {
    const std::string line = reader.require("entity row");
    if (line.empty() || line.find('\t') != std::string::npos)
      reader.fail("bad entity name");
    if (store.intern_entity(line) != e) reader.fail("duplicate entity name");
  }
  expect_section("[tuples]");
  for (std::size_t t = 0; t < num_tuples; ++t) {
    const std::string line = reader.require("tuple row");
    const auto fields = split_tabs(line);
    if (fields.size() != 2) reader.fail("expected 'e1<TAB>e2'");
    const auto e1 = static_cast<EntityId>(parse_u64(fields[0]));
    const auto e2 = static_cast<EntityId>(parse_u64(fields[1]));
    if (store.intern_tuple(e1, e2) != t) reader.fail("duplicate tuple");
  }
  expect_section("[facts]");
  for (std::size_t i = 0; i < num_facts; ++i) {
    const std::string line = reader.require("fact row");
    const auto fields = split_tabs(line);
    if (fields.size() != 2) reader.fail("expected 'relation<TAB>tuple'");
    store.add_fact(static_cast<RelationId>(parse_u64(fields[0])),
                   static_cast<TupleId>(parse_u64(fields[1])));
  }
  store.finalize();
  if (store.num_facts() != num_facts)
    reader.fail("duplicate facts in model file");

  ModelParams& p = model.params;
  p.num_relations = num_relations;
  p.num_entities = num_entities;
  p.num_tuples = num_tuples;

  auto read_rows = [&](std::vector<double>& xs, std::size_t rows,
                       std::size_t cols, const char* what) {
    xs.resize(rows * cols);
    for (std::size_t i = 0; i < rows; ++i) {
      const std::string line = reader.require(what);
      const auto fields = split_tabs(line);
      if (fields.size() != cols) reader.fail(std::string("bad row in ") + what);
      for (std::size_t k = 0; k < cols; ++k)
        xs[i * cols + k] = parse_double(fields[k]);
    }
  };
  if (p.flags.use_f) {
    expect_section("[a]");
    read_rows(p.a, num_relations, p.k_f, "[a]");
    expect_section("[v]");
    read_rows(p.v, num_tuples, p.k_f, "[v]");
  }
  if (p.flags.use_n) {
    const std::string line = reader.require("[w] header");
    const auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0] != "[w]")
      reader.fail("expected '[w]<TAB>count'");
    const std::size_t nnz = parse_u64(fields[1]);
    std::vector<std::pair<RelationId, RelationId>> keys;
    std::vector<double> values;
    keys.reserve(nnz);
    values.reserve(nnz);
    for (std::size_t i = 0; i < nnz; ++i) {
      const std::string row = reader.require("weight row");
      const auto f = split_tabs(row);
      if (f.size() != 3) reader.fail("expected 'r<TAB>r'<TAB>value'");
      keys.emplace_back(static_cast<RelationId>(parse_u64(f[0])),
                        static_cast<RelationId>(parse_u64(f[1])));
      values.push_back(parse_double(f[2]));
    }
    for (std::size_t i = 1; i < keys.size(); ++i)
      if (!(keys[i - 1] < keys[i]))
        reader.fail("weight keys out of order or duplicated");
    p.w = SparseWeights::from_pairs(num_relations, keys);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const std::size_t idx = p.w.index_of(keys[i].first, keys[i].second);
      p.w.value_at(idx) = values[i];
    }
    // support must be backed by actual co-occurrence in the stored facts
    const auto pairs = store.cooccurring_relation_pairs();
    const std::set<std::pair<RelationId, RelationId>> support(pairs.begin(),
                                                              pairs.end());
    for (const auto& key : keys)
      if (!support.contains(key))
        reader.fail("weight key outside co-occurrence support");
  }
  if (p.flags.use_e) {
    expect_section("[d]");
    read_rows(p.d, num_relations, 2 * p.k_e, "[d]");
    expect_section("[te]");
    read_rows(p.te, num_entities, p.k_e, "[te]");
  }
  expect_section("[end]");

  if (!p.flags.use_f && p.k_f != 0) reader.fail("kf must be 0 when F disabled");
  if (!p.flags.use_e && p.k_e != 0) reader.fail("ke must be 0 when E disabled");
  p.validate();
  model.store = std::move(store);
  return model;
}

inline ModelFile load_model_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model file: " + path);
  return load_model(in);
}

}  // namespace uschema
