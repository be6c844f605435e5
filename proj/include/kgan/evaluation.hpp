#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgan/corpus.hpp"
#include "kgan/depparse.hpp"
#include "kgan/kge.hpp"
#include "kgan/metrics.hpp"
#include "kgan/network.hpp"
#include "kgan/training.hpp"

namespace kgan::evaluation {

/// A prepared dataset: everything an experiment cell needs besides its config.
struct ExperimentInputs {
  corpus::Vocabulary vocab;
  Matrix word_matrix;              ///< |V| x d_w initial embeddings
  kge::KnowledgeTable knowledge;   ///< entity table before any noise
  std::string knowledge_label = "knowledge";
  std::vector<corpus::Instance> train;
  std::vector<corpus::Instance> test;
  std::vector<depparse::DependencyParse> train_parses;  ///< aligned with train
  std::vector<depparse::DependencyParse> test_parses;
};

/// Model inputs for one split under a given adjacency/position setting.
std::vector<network::ModelInput> build_inputs(const corpus::Vocabulary& vocab,
                                              const std::vector<corpus::Instance>& instances,
                                              const std::vector<depparse::DependencyParse>& parses,
                                              bool symmetrize, bool position);

struct Cell {
  std::string group;        ///< e.g. "cs", "voting", "noise=0.05"
  std::uint64_t seed = 0;
  std::string config_json;  ///< everything needed to rerun the cell
  std::string config_hash;  ///< FNV-1a of config_json
  MetricReport report;
  int best_epoch = 0;
};

struct GroupSummary {
  std::string group;
  std::size_t runs = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  double macro_f1_mean = 0.0;
  double macro_f1_std = 0.0;
};

struct ExperimentMatrix {
  std::string name;
  std::vector<Cell> cells;

  /// Mean and (population) standard deviation per group, in first-seen
  /// group order, computed from the stored cells only.
  std::vector<GroupSummary> aggregate() const;
  std::optional<GroupSummary> summary(const std::string& group) const;
  std::string to_json() const;
  /// Fixed-width text table, one row per group.
  std::string table() const;
};

/// Trains and evaluates one configuration. The knowledge table is perturbed
/// by train.noise_ratio (seeded by train.seed) before use.
Cell run_cell(const ExperimentInputs& inputs, const std::string& group,
              const network::KganConfig& model, const training::TrainConfig& train,
              training::RunRecord* record = nullptr);

/// Reruns a stored cell from its config_json alone; throws ConfigError if the
/// inputs' knowledge table differs from the one the cell was run with.
Cell rerun_cell(const ExperimentInputs& inputs, const Cell& cell);

/// The seven non-empty branch subsets, in the order c, s, k, cs, ck, sk, csk.
std::vector<network::BranchSet> branch_combinations();

struct BranchAblation {
  ExperimentMatrix combinations;  ///< 7 subsets x seeds, concat fusion
  ExperimentMatrix headline;      ///< full triple with hierarchical fusion
};

BranchAblation run_branch_ablation(const ExperimentInputs& inputs, network::KganConfig model,
                                   training::TrainConfig train,
                                   const std::vector<std::uint64_t>& seeds,
                                   bool with_headline = true);

/// hierarchical, concat, sum, attention and voting over all three branches.
ExperimentMatrix run_fusion_ablation(const ExperimentInputs& inputs, network::KganConfig model,
                                     training::TrainConfig train,
                                     const std::vector<std::uint64_t>& seeds);

ExperimentMatrix run_noise_sweep(const ExperimentInputs& inputs, network::KganConfig model,
                                 training::TrainConfig train, const std::vector<double>& ratios,
                                 const std::vector<std::uint64_t>& seeds);

/// One group per labelled knowledge table (e.g. per KGE method).
ExperimentMatrix run_kge_ablation(const ExperimentInputs& inputs,
                                  const std::map<std::string, kge::KnowledgeTable>& tables,
                                  network::KganConfig model, training::TrainConfig train,
                                  const std::vector<std::uint64_t>& seeds);

/// Per-instance tokens, aspect, gold, prediction and the normalized attention
/// weights of every active branch, as a JSON array.
std::string export_attention_cases(const network::KganModel& model,
                                   const corpus::Vocabulary& vocab,
                                   const std::vector<corpus::Instance>& instances,
                                   const std::vector<depparse::DependencyParse>& parses);

/// Per-class statistics next to the published counts.
std::string stats_table(const std::vector<std::pair<std::string, corpus::ClassCounts>>& rows,
                        const std::vector<std::pair<std::string, corpus::ClassCounts>>& reference);

}  // namespace kgan::evaluation
