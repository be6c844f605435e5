#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgan/tensor.hpp"

namespace kgan::kge {

struct Triple {
  int head = 0;
  int relation = 0;
  int tail = 0;
  bool operator==(const Triple&) const = default;
  auto operator<=>(const Triple&) const = default;
};

class KnowledgeGraph {
 public:
  int add_entity(const std::string& name);
  int add_relation(const std::string& name);
  /// Returns false (and stores nothing) for a duplicate triple.
  bool add_triple(const std::string& head, const std::string& relation, const std::string& tail);
  bool add_triple(Triple t);

  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<std::string>& relations() const { return relations_; }
  const std::vector<Triple>& triples() const { return triples_; }
  std::optional<int> entity_id(const std::string& name) const;

  /// Throws DataError on out-of-range ids or duplicates.
  void validate() const;

 private:
  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::vector<Triple> triples_;
  std::unordered_map<std::string, int> entity_index_;
  std::unordered_map<std::string, int> relation_index_;
  std::vector<std::uint64_t> triple_keys_;  // sorted
};

/// "head<TAB>relation<TAB>tail" per line; blank lines and '#' comments skipped.
KnowledgeGraph parse_triples(std::string_view text);

/// n entities e0..e{n-1} linked e_i -> e_{i+1} by relation r_{i mod relations}.
KnowledgeGraph make_chain_graph(int entities, int relations = 2);

/// Two-level taxonomy: parent p is part_of root p % roots and child c is a
/// member_of parent c / children_per_parent. The defaults give 50 entities.
KnowledgeGraph make_hierarchy_graph(int roots = 2, int parents_per_root = 4, int children_per_parent = 5);

enum class Method { kTransE, kDistMult, kComplEx, kAnalogy };
std::string_view method_name(Method m);
Method method_from_name(std::string_view name);

/// Embedding tables. For ComplEx the row is [real | imag] halves. For ANALOGY
/// the first dim - complex_dim entries are a real (DistMult) block and the
/// remaining complex_dim entries a [real | imag] ComplEx block.
struct KgeModel {
  Method method = Method::kTransE;
  int dim = 0;
  int complex_dim = 0;
  Matrix entity_emb;    ///< |E| x dim
  Matrix relation_emb;  ///< |R| x dim

  int real_dim() const { return dim - complex_dim; }
};

/// Checks the dim/complex-block layout for `method`; throws ConfigError.
/// complex_dim < 0 selects the method's default.
int resolve_complex_dim(Method method, int dim, int complex_dim);

/// Higher is more plausible.
double score(const KgeModel& model, const Triple& triple);

/// Raw scoring functions over explicit vectors.
double score_vectors(Method method, int complex_dim, const RowVector& h, const RowVector& r,
                     const RowVector& t);

struct ScoreGradient {
  RowVector head;
  RowVector relation;
  RowVector tail;
};
ScoreGradient score_gradient(Method method, int complex_dim, const RowVector& h,
                             const RowVector& r, const RowVector& t);

struct TrainOptions {
  Method method = Method::kTransE;
  int dim = 100;
  int complex_dim = -1;
  int epochs = 100;
  double lr = 0.01;
  double margin = 1.0;
  int neg_ratio = 1;
  std::uint64_t seed = 14;
};

/// Per-epoch mean loss is appended to `loss_history` when given.
KgeModel train_kge(const KnowledgeGraph& graph, const TrainOptions& options,
                   std::vector<double>* loss_history = nullptr);

struct LinkPredictionReport {
  double mrr = 0.0;
  double hits_at_1 = 0.0;
  double hits_at_10 = 0.0;
  std::size_t count = 0;
};

/// Filtered tail prediction: each triple's true tail is ranked against every
/// entity except other known tails of the same (head, relation). Ties count
/// against the true tail.
LinkPredictionReport link_prediction_eval(const KgeModel& model, const KnowledgeGraph& graph);
LinkPredictionReport link_prediction_eval(const KgeModel& model, const KnowledgeGraph& graph,
                                          const std::vector<Triple>& queries);

// ---------------------------------------------------------------------------
// Knowledge embedding tables keyed by entity name

class KnowledgeTable {
 public:
  KnowledgeTable() = default;
  KnowledgeTable(std::vector<std::string> names, Matrix vectors);

  int dim() const { return static_cast<int>(vectors_.cols()); }
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }
  const Matrix& vectors() const { return vectors_; }
  Matrix& mutable_vectors() { return vectors_; }

  /// Registers an extra surface form for an entity row.
  void add_alias(const std::string& alias, int row);
  /// Rows whose surface forms match `token` (case-folded, '_' == ' ').
  const std::vector<int>* lookup(const std::string& token) const;

  /// Throws DimensionError unless dim() == expected.
  void require_dim(int expected) const;

  bool operator==(const KnowledgeTable& o) const {
    return names_ == o.names_ && vectors_ == o.vectors_;
  }

 private:
  void index_name(const std::string& name, int row);

  std::vector<std::string> names_;
  Matrix vectors_;
  std::unordered_map<std::string, std::vector<int>> aliases_;
};

/// Normalized surface form used for matching.
std::string normalize_surface(std::string_view s);

KnowledgeTable entity_table(const KgeModel& model, const KnowledgeGraph& graph);

/// "count dim" header then "name v1 .. vdim" per line.
std::string export_embeddings(const KnowledgeTable& table);
KnowledgeTable parse_embeddings(std::string_view text);

/// Writes the text table plus `<path>.json` metadata.
void save_embeddings(const std::filesystem::path& path, const KnowledgeTable& table,
                     const std::string& metadata_json);
/// Reads the text table; the sidecar is optional. expected_dim > 0 enforces
/// the width.
KnowledgeTable load_pretrained(const std::filesystem::path& path, int expected_dim = 0);

/// "entity<TAB>alias" per line.
void load_aliases(KnowledgeTable& table, std::string_view text);

struct EntityLookup {
  RowVector vector;
  bool oov = true;
};

/// Exact surface-form match; several matches are averaged; no match gives a
/// zero vector flagged OOV.
EntityLookup word_to_entity(const std::string& token, const KnowledgeTable& table);

}  // namespace kgan::kge
