#pragma once

// The three-branch classifier: a shared BiLSTM encoder feeding context,
// syntax and knowledge heads, merged by one of several fusion strategies.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "kgan/autograd.hpp"
#include "kgan/corpus.hpp"
#include "kgan/depparse.hpp"
#include "kgan/tensor.hpp"

namespace kgan::network {

enum class Fusion { kHierarchical, kConcat, kSum, kAttention, kVoting };
std::string_view fusion_name(Fusion f);
Fusion fusion_from_name(std::string_view name);

struct BranchSet {
  bool context = true;
  bool syntax = true;
  bool knowledge = true;

  int count() const { return int(context) + int(syntax) + int(knowledge); }
  bool all() const { return count() == 3; }
  /// Letters in c, s, k order, e.g. "cs".
  std::string code() const;
  static BranchSet from_code(std::string_view code);
  bool operator==(const BranchSet&) const = default;
};

struct KganConfig {
  int d_w = 300;
  int d_k = 100;
  int hidden = 300;  ///< per direction; d_r = 2 * hidden
  int n_classes = 3;
  int gcn_layers = 2;
  double dropout = 0.5;
  BranchSet branches;
  Fusion fusion = Fusion::kHierarchical;
  bool symmetrize = true;
  bool position = true;
  std::uint64_t seed = 14;

  int d_r() const { return 2 * hidden; }
  /// Throws ConfigError.
  void validate() const;

  std::string to_json() const;
  static KganConfig from_json(std::string_view text);
  bool operator==(const KganConfig&) const = default;
};

/// Everything the network needs for one instance.
struct ModelInput {
  std::vector<int> ids;     ///< vocabulary ids, m
  std::size_t aspect_start = 0;
  std::size_t aspect_len = 1;
  Vector position;          ///< m weights applied to X_s
  Matrix adjacency;         ///< m x m with self-loops
  int gold = 0;

  std::size_t size() const { return ids.size(); }
};

ModelInput make_input(const corpus::Instance& instance, const corpus::Vocabulary& vocab,
                      const depparse::AdjacencyMatrix& adjacency, bool position);

/// Per-token attention weights of the active branches (empty when inactive).
struct AttentionRecord {
  Vector context;
  Vector syntax;
  Vector knowledge;
};

struct Prediction {
  int label = 0;
  RowVector probabilities;
  RowVector logits;
  AttentionRecord attention;
};

// Value-level building blocks, also used as test oracles' counterparts.

/// diag(1 / (d_i + 1)) A with d_i the row sums of A.
Matrix normalized_adjacency(const Matrix& a);
/// ReLU((A H W) / (D + 1) + B), row-wise division, B broadcast over rows.
Matrix gcn_layer(const Matrix& h, const Matrix& a, const Matrix& w, const RowVector& b);

// Tape-level branch and fusion heads. Inputs are rows-as-tokens matrices;
// representations are 1 x d_r rows and attention weights 1 x m rows.

struct BranchOutput {
  nn::Var representation;
  nn::Var weights;
};

/// Forward and backward LSTM states concatenated per token.
nn::Var bilstm(nn::Var x, nn::Var fwd_wx, nn::Var fwd_wh, nn::Var fwd_b, nn::Var bwd_wx,
               nn::Var bwd_wh, nn::Var bwd_b);

/// H' = softmax(H Hᵀ / sqrt(d)) H; alpha = softmax_i(h'_i W_a mean(H_t)); R_c = alpha H'.
BranchOutput context_branch(nn::Var hs, nn::Var ht, nn::Var w_a);

struct GcnWeights {
  nn::Var weight;
  nn::Var bias;
};

/// Stacked GCN layers over H_s, aspect masking, then
/// beta_i = h_i . sum_{j in aspect} h2_j and R_s = softmax(beta) H_s.
BranchOutput syntax_branch(nn::Var hs, const Matrix& adjacency, std::size_t aspect_start,
                           std::size_t aspect_len, std::span<const GcnWeights> layers);

/// g_i = [h_i; k_i], q = [mean(H_t); mean(K_t)], gamma = softmax_i(g_i W_k q),
/// R_k = (gamma G) P + p.
BranchOutput knowledge_branch(nn::Var hs, nn::Var k, nn::Var kt, nn::Var ht, nn::Var w_k,
                              nn::Var proj_w, nn::Var proj_b);

struct Linear {
  nn::Var weight;
  nn::Var bias;
  nn::Var operator()(nn::Var x) const;
};

/// Local heads on [R_c;R_s], [R_c;R_k], [R_s;R_k] stacked as a 3 x 3 matrix
/// and merged by a valid 3 x 3 convolution with 3 output channels. The
/// kernel is stored as a 9 x 3 matrix applied to the row-major flattening.
nn::Var fuse_hierarchical(nn::Var rc, nn::Var rs, nn::Var rk, const Linear& cs, const Linear& ck,
                          const Linear& sk, const Linear& conv);

class KganModel {
 public:
  /// word_embeddings is |V| x d_w (trainable, PAD row frozen); knowledge is
  /// |V| x d_k and never updated.
  KganModel(const KganConfig& config, const Matrix& word_embeddings, Matrix knowledge);

  const KganConfig& config() const { return config_; }
  std::vector<nn::Parameter>& parameters() { return params_; }
  const std::vector<nn::Parameter>& parameters() const { return params_; }
  nn::Parameter& parameter(std::string_view name);
  const nn::Parameter& parameter(std::string_view name) const;
  bool has_parameter(std::string_view name) const;
  const Matrix& knowledge() const { return knowledge_; }

  /// Total trainable scalars.
  std::size_t parameter_count() const;

  /// Records the forward pass on `tape` and returns 1 x n_classes logits.
  /// Dropout is active only when `dropout_rng` is given.
  nn::Var forward(nn::Tape& tape, const ModelInput& input, std::mt19937_64* dropout_rng,
                  AttentionRecord* attention = nullptr);

  /// Evaluation-mode forward (no dropout, no gradients).
  Prediction predict(const ModelInput& input) const;

  void zero_grad();

  /// Copies parameter values (not gradients) from a model of identical shape.
  void load_values(const KganModel& other);

 private:
  struct Binder;
  nn::Var forward_impl(nn::Tape& tape, Binder& bind, const ModelInput& input,
                       std::mt19937_64* dropout_rng, AttentionRecord* attention) const;
  void add(std::string name, Matrix value);
  std::size_t index_of(std::string_view name) const;

  KganConfig config_;
  std::vector<nn::Parameter> params_;
  Matrix knowledge_;
};

/// Softmax of a row, max-shifted.
RowVector softmax(const RowVector& logits);

// ---------------------------------------------------------------------------
// Checkpoints

struct LoadedCheckpoint {
  KganModel model;
  corpus::Vocabulary vocab;
  std::string metadata_json;
};

/// Binary file: magic, version, a JSON header (config, vocabulary, tensor
/// names and shapes, metadata), then every tensor including the frozen
/// knowledge matrix.
void save_checkpoint(const std::filesystem::path& path, const KganModel& model,
                     const corpus::Vocabulary& vocab, const std::string& metadata_json = "{}");
std::string checkpoint_bytes(const KganModel& model, const corpus::Vocabulary& vocab,
                             const std::string& metadata_json = "{}");
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kgan::network
