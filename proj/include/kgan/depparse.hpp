#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgan/tensor.hpp"

namespace kgan::depparse {

/// Head index of the root token.
inline constexpr int kRoot = -1;

struct DependencyParse {
  std::vector<std::string> forms;  ///< surface forms, for token-count checks
  std::vector<int> heads;          ///< 0-based head per token, kRoot for the root
  std::vector<std::string> labels;

  std::size_t size() const { return heads.size(); }
  bool operator==(const DependencyParse&) const = default;
};

/// Throws TreeError unless there is exactly one root and every token reaches
/// it without a cycle.
void validate_tree(const DependencyParse& parse, std::string_view sentence_id = {});

/// Sentence blocks keyed by their "# sent_id" comment. Multiword-token ranges
/// ("3-4") and empty nodes ("3.1") are skipped.
std::map<std::string, DependencyParse> load_conllu(std::string_view text);

/// Throws AlignmentError when the parse and the corpus tokenization disagree
/// in length.
void check_alignment(const DependencyParse& parse, std::size_t token_count,
                     std::string_view sentence_id);

/// m×m 0/1 matrix with self-loops; row i marks the children of token i and,
/// when symmetric, its head as well.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(Matrix dense) : a_(std::move(dense)) {}

  std::size_t size() const { return static_cast<std::size_t>(a_.rows()); }
  const Matrix& dense() const { return a_; }
  double operator()(std::size_t i, std::size_t j) const {
    return a_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  /// d_i = sum_j A_ij
  Vector degrees() const { return a_.rowwise().sum(); }

  bool operator==(const AdjacencyMatrix& o) const { return a_ == o.a_; }

 private:
  Matrix a_;
};

AdjacencyMatrix build_adjacency(const DependencyParse& parse, bool symmetrize = true);

/// Left-to-right chain rooted at the first token (token i is headed by i-1).
DependencyParse chain_parse(std::size_t length);

/// One CoNLL-U block with a "# sent_id" comment; inverse of load_conllu.
std::string to_conllu(std::string_view sentence_id, const DependencyParse& parse);

/// Cache text: "id m" header, then m rows of space-separated 0/1.
std::string serialize_adjacency(const std::vector<std::pair<std::string, AdjacencyMatrix>>& items);
std::vector<std::pair<std::string, AdjacencyMatrix>> parse_adjacency(std::string_view text);

}  // namespace kgan::depparse
