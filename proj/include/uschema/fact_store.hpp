#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "uschema/error.hpp"

namespace uschema {

using RelationId = std::uint32_t;
using EntityId = std::uint32_t;
using TupleId = std::uint32_t;

// A relation is either a structured-schema relation (e.g. a KB relation
// name) or a textual surface pattern. The tag is derived from the name by
// a configurable prefix rule; names are otherwise opaque.
enum class RelationSource : std::uint8_t { structured, pattern };

inline char source_code(RelationSource s) {
  return s == RelationSource::structured ? 's' : 'p';
}

struct Fact {
  RelationId relation;
  TupleId tuple;

  friend bool operator==(const Fact&, const Fact&) = default;
  friend auto operator<=>(const Fact&, const Fact&) = default;
};

// Vocabularies plus the observed fact set, with both orientations indexed:
// tuple -> sorted relation ids and relation -> sorted tuple ids. Build by
// interning/adding facts, then call finalize(); afterwards the store is
// immutable and safe for concurrent readers.
class FactStore {
 public:
  // Relations whose name starts with any of these prefixes are tagged
  // structured; everything else is a surface pattern. The default matches
  // the common convention of structured relation names like
  // "/people/person/place_of_birth".
  explicit FactStore(std::vector<std::string> structured_prefixes = {"/"})
      : structured_prefixes_(std::move(structured_prefixes)) {}

  // --- building (before finalize) ---

  RelationId intern_relation(std::string_view name) {
    require_building();
    if (name.empty()) throw Error("empty relation name");
    if (auto it = relation_ids_.find(std::string(name));
        it != relation_ids_.end())
      return it->second;
    const auto id = static_cast<RelationId>(relation_names_.size());
    relation_names_.emplace_back(name);
    relation_sources_.push_back(derive_source(name));
    relation_ids_.emplace(relation_names_.back(), id);
    return id;
  }

  EntityId intern_entity(std::string_view name) {
    require_building();
    if (name.empty()) throw Error("empty entity name");
    if (auto it = entity_ids_.find(std::string(name)); it != entity_ids_.end())
      return it->second;
    const auto id = static_cast<EntityId>(entity_names_.size());
    entity_names_.emplace_back(name);
    entity_ids_.emplace(entity_names_.back(), id);
    return id;
  }

  // Tuples are ordered pairs: (a, b) and (b, a) intern to distinct ids.
  TupleId intern_tuple(EntityId e1, EntityId e2) {
    require_building();
    if (e1 >= entity_names_.size() || e2 >= entity_names_.size())
      throw Error("intern_tuple: unknown entity id");
    const std::uint64_t key =
        (static_cast<std::uint64_t>(e1) << 32) | static_cast<std::uint64_t>(e2);
    if (auto it = tuple_ids_.find(key); it != tuple_ids_.end())
      return it->second;
    const auto id = static_cast<TupleId>(tuple_slots_.size());
    tuple_slots_.emplace_back(e1, e2);
    tuple_ids_.emplace(key, id);
    return id;
  }

  void add_fact(RelationId r, TupleId t) {
    require_building();
    if (r >= relation_names_.size()) throw Error("add_fact: unknown relation id");
    if (t >= tuple_slots_.size()) throw Error("add_fact: unknown tuple id");
    facts_.push_back(Fact{r, t});
  }

  void add_fact(std::string_view relation, std::string_view entity1,
                std::string_view entity2) {
    const RelationId r = intern_relation(relation);
    const TupleId t = intern_tuple(intern_entity(entity1), intern_entity(entity2));
    add_fact(r, t);
  }

  // Used by the model-file loader, which stores tags explicitly instead of
  // re-deriving them from a prefix rule.
  void set_relation_source(RelationId r, RelationSource s) {
    require_building();
    if (r >= relation_sources_.size())
      throw Error("set_relation_source: unknown relation id");
    relation_sources_[r] = s;
  }

  // Deduplicates facts and builds both indexes. Idempotent inputs: the
  // resulting fact set is canonical (sorted by relation, then tuple)
  // regardless of insertion order.
  void finalize() {
    require_building();
    std::sort(facts_.begin(), facts_.end());
    facts_.erase(std::unique(facts_.begin(), facts_.end()), facts_.end());

    // facts_ is sorted by (relation, tuple), so both index lists fill in
    // ascending order and need no further sorting.
    by_tuple_.assign(tuple_slots_.size(), {});
    by_relation_.assign(relation_names_.size(), {});
    for (const Fact& f : facts_) {
      by_tuple_[f.tuple].push_back(f.relation);
      by_relation_[f.relation].push_back(f.tuple);
    }
    finalized_ = true;
  }

  bool finalized() const { return finalized_; }

  // --- queries (after finalize; vocabulary accessors work either way) ---

  std::size_t num_relations() const { return relation_names_.size(); }
  std::size_t num_entities() const { return entity_names_.size(); }
  std::size_t num_tuples() const { return tuple_slots_.size(); }
  std::size_t num_facts() const { return facts_.size(); }

  const std::string& relation_name(RelationId r) const {
    check_relation(r);
    return relation_names_[r];
  }

  RelationSource relation_source(RelationId r) const {
    check_relation(r);
    return relation_sources_[r];
  }

  const std::string& entity_name(EntityId e) const {
    if (e >= entity_names_.size()) throw Error("unknown entity id");
    return entity_names_[e];
  }

  std::pair<EntityId, EntityId> tuple_slots(TupleId t) const {
    check_tuple(t);
    return tuple_slots_[t];
  }

  std::optional<RelationId> find_relation(std::string_view name) const {
    auto it = relation_ids_.find(std::string(name));
    if (it == relation_ids_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<EntityId> find_entity(std::string_view name) const {
    auto it = entity_ids_.find(std::string(name));
    if (it == entity_ids_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<TupleId> find_tuple(EntityId e1, EntityId e2) const {
    const std::uint64_t key =
        (static_cast<std::uint64_t>(e1) << 32) | static_cast<std::uint64_t>(e2);
    auto it = tuple_ids_.find(key);
    if (it == tuple_ids_.end()) return std::nullopt;
    return it->second;
  }

  // Canonical fact list, sorted by (relation, tuple).
  const std::vector<Fact>& facts() const {
    require_finalized();
    return facts_;
  }

  // Sorted relation ids observed for tuple t (the set O_t). Empty for
  // tuples that were interned without facts.
  const std::vector<RelationId>& observed_relations(TupleId t) const {
    require_finalized();
    check_tuple(t);
    return by_tuple_[t];
  }

  // Sorted tuple ids observed with relation r.
  const std::vector<TupleId>& observed_tuples(RelationId r) const {
    require_finalized();
    check_relation(r);
    return by_relation_[r];
  }

  bool observed(RelationId r, TupleId t) const {
    require_finalized();
    check_relation(r);
    check_tuple(t);
    const auto& ts = by_relation_[r];
    return std::binary_search(ts.begin(), ts.end(), t);
  }

  // All ordered pairs (r, r'), r != r', such that some tuple carries both.
  // Contains both orientations of every co-occurring pair; sorted, unique.
  // This is the trainable support of the neighborhood weights.
  std::vector<std::pair<RelationId, RelationId>> cooccurring_relation_pairs()
      const {
    require_finalized();
    std::vector<std::pair<RelationId, RelationId>> pairs;
    for (const auto& rels : by_tuple_) {
      for (std::size_t i = 0; i < rels.size(); ++i)
        for (std::size_t j = 0; j < rels.size(); ++j)
          if (i != j) pairs.emplace_back(rels[i], rels[j]);
    }
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    return pairs;
  }

 private:
  RelationSource derive_source(std::string_view name) const {
    for (const std::string& p : structured_prefixes_)
      if (name.starts_with(p)) return RelationSource::structured;
    return RelationSource::pattern;
  }

  void require_building() const {
    if (finalized_) throw Error("store is finalized and immutable");
  }
  void require_finalized() const {
    if (!finalized_) throw Error("store not finalized");
  }
  void check_relation(RelationId r) const {
    if (r >= relation_names_.size()) throw Error("unknown relation id");
  }
  void check_tuple(TupleId t) const {
    if (t >= tuple_slots_.size()) throw Error("unknown tuple id");
  }

  std::vector<std::string> structured_prefixes_;
  std::vector<std::string> relation_names_;
  std::vector<RelationSource> relation_sources_;
  std::vector<std::string> entity_names_;
  std::vector<std::pair<EntityId, EntityId>> tuple_slots_;
  std::unordered_map<std::string, RelationId> relation_ids_;
  std::unordered_map<std::string, EntityId> entity_ids_;
  std::unordered_map<std::uint64_t, TupleId> tuple_ids_;
  std::vector<Fact> facts_;
  std::vector<std::vector<RelationId>> by_tuple_;
  std::vector<std::vector<TupleId>> by_relation_;
  bool finalized_ = false;
};

// One fact per line: relation<TAB>entity1<TAB>entity2. Lines starting with
// '#' are comments; blank lines are ignored. TAB is forbidden inside
// fields, so exactly three non-empty fields are required.
struct FactLine {
  std::string relation;
  std::string entity1;
  std::string entity2;
};

inline std::optional<FactLine> parse_fact_line(const std::string& line,
                                               std::size_t line_number) {
  if (line.empty()) return std::nullopt;
  if (line[0] == '#') return std::nullopt;
  const std::size_t tab1 = line.find('\t');
  if (tab1 == std::string::npos)
    throw ParseError(line_number, "expected 3 tab-separated fields");
  const std::size_t tab2 = line.find('\t', tab1 + 1);
  if (tab2 == std::string::npos)
    throw ParseError(line_number, "expected 3 tab-separated fields");
  if (line.find('\t', tab2 + 1) != std::string::npos)
    throw ParseError(line_number, "too many fields");
  FactLine f{line.substr(0, tab1), line.substr(tab1 + 1, tab2 - tab1 - 1),
             line.substr(tab2 + 1)};
  if (f.relation.empty() || f.entity1.empty() || f.entity2.empty())
    throw ParseError(line_number, "empty field");
  return f;
}

// Reads a fact file into a finalized store. Vocabulary ids follow first
// appearance in the file, so the same file always yields the same ids.
inline FactStore ingest(std::istream& in,
                        std::vector<std::string> structured_prefixes = {"/"}) {
  FactStore store(std::move(structured_prefixes));
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (auto fact = parse_fact_line(line, line_number))
      store.add_fact(fact->relation, fact->entity1, fact->entity2);
  }
  if (store.num_facts() == 0) throw Error("no facts in input");
  store.finalize();
  return store;
}

inline FactStore ingest_file(const std::string& path,
                             std::vector<std::string> structured_prefixes = {
                                 "/"}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open facts file: " + path);
  return ingest(in, std::move(structured_prefixes));
}

// Writes facts in the ingest format, canonical order. ingest(write(s))
// reproduces the same fact set.
inline void write_facts_tsv(std::ostream& out, const FactStore& store) {
  for (const Fact& f : store.facts()) {
    const auto [e1, e2] = store.tuple_slots(f.tuple);
    out << store.relation_name(f.relation) << '\t' << store.entity_name(e1)
        << '\t' << store.entity_name(e2) << '\n';
  }
}

}  // namespace uschema
