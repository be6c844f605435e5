#pragma once

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

#include "kgan/corpus.hpp"
#include "kgan/kge.hpp"
#include "kgan/tensor.hpp"

namespace kgan::embeddings {

/// |V| x d_w, row-aligned with a Vocabulary. Row 0 (PAD) is all zeros.
struct WordEmbeddingMatrix {
  Matrix weights;
  std::size_t found = 0;  ///< vocabulary rows copied from the pretrained file

  int dim() const { return static_cast<int>(weights.cols()); }
};

/// Reads "token v1 .. vd" lines (an optional "count dim" header is skipped).
/// Rows for tokens present in the file are copied verbatim; an exact match
/// wins over a case-folded one. Every other row except PAD is drawn from
/// uniform(-0.1, 0.1) with `seed`. dim <= 0 takes the width from the file.
WordEmbeddingMatrix parse_static_vectors(std::string_view text, const corpus::Vocabulary& vocab,
                                         std::uint64_t seed, int dim = 0);
WordEmbeddingMatrix load_static_vectors(const std::filesystem::path& path,
                                        const corpus::Vocabulary& vocab, std::uint64_t seed,
                                        int dim = 0);

/// Random matrix for runs without pretrained vectors.
WordEmbeddingMatrix random_word_matrix(const corpus::Vocabulary& vocab, int dim, std::uint64_t seed);

/// p_i = 1 - dist_i / m, with dist_i the token distance to the nearest aspect
/// token (0 inside the span).
Vector position_weights(std::size_t m, std::size_t aspect_start, std::size_t aspect_len);

/// |V| x d_k frozen matrix: row v is word_to_entity(vocab token v). `oov`
/// receives one flag per vocabulary row when given.
Matrix knowledge_matrix(const corpus::Vocabulary& vocab, const kge::KnowledgeTable& table,
                        std::vector<bool>* oov = nullptr);

struct EmbeddedInstance {
  Matrix sentence;            ///< X_s, m x d_w
  Matrix aspect;              ///< X_t, n x d_w
  Matrix knowledge;           ///< K,   m x d_k
  Matrix aspect_knowledge;    ///< K_t, n x d_k
  std::vector<bool> oov_mask; ///< per sentence token
};

EmbeddedInstance embed_instance(const corpus::Instance& instance, const corpus::Vocabulary& vocab,
                                const Matrix& word_matrix, const kge::KnowledgeTable& knowledge,
                                bool position);

}  // namespace kgan::embeddings
