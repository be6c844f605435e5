#pragma once

// Run configuration for the command-line tool. A JSON file (comments allowed)
// overrides the built-in defaults, and "--set key=value" flags override the
// file. Unknown keys are rejected at every level.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgan/corpus.hpp"
#include "kgan/kge.hpp"
#include "kgan/network.hpp"
#include "kgan/training.hpp"

namespace kgan::config {

namespace fs = std::filesystem;

enum class DatasetFormat { kSemEval2014, kSemEval2015, kTwitter, kTsv };

struct DatasetSection {
  /// A benchmark name, or "custom" for data without published statistics.
  std::string name = "laptop14";
  DatasetFormat format = DatasetFormat::kSemEval2014;
  fs::path train;
  fs::path test;
  fs::path train_parses;  ///< CoNLL-U keyed by sentence id
  fs::path test_parses;
  bool check_stats = true;
  std::size_t subset = 0;  ///< keep only the first N training instances (0 = all)

  std::optional<corpus::DatasetName> benchmark() const;
};

struct EmbeddingSection {
  fs::path words;      ///< static word vectors; empty gives a random matrix
  fs::path knowledge;  ///< entity table ("count dim" text)
  fs::path aliases;    ///< optional entity<TAB>alias file
  std::uint64_t seed = 14;  ///< initialization of rows missing from `words`
};

struct KgeSection {
  fs::path triples;
  kge::TrainOptions options;
  std::string output = "entities.txt";
};

enum class ExperimentKind { kBranches, kFusion, kKge };

struct ExperimentSection {
  ExperimentKind kind = ExperimentKind::kBranches;
  std::vector<std::uint64_t> seeds{14, 15, 16};
  std::vector<double> ratios{0.0, 0.01, 0.02, 0.05, 0.10, 0.20};
  std::map<std::string, fs::path> kge_tables;
  bool headline = true;
  fs::path checkpoint;  ///< empty means <output_dir>/train/best.ckpt
  std::vector<std::string> cases;  ///< instance ids; empty takes the first max_cases
  std::size_t max_cases = 20;
};

struct RunConfig {
  DatasetSection dataset;
  EmbeddingSection embeddings;
  network::KganConfig model;
  training::TrainConfig train;
  KgeSection kge;
  ExperimentSection experiment;
  fs::path output_dir;

  /// Fully resolved configuration, defaults applied, as pretty JSON.
  std::string resolved_json;

  /// Batch size after applying the per-dataset default.
  training::TrainConfig train_config() const;
};

/// Every key with its default value and a one-line description, in file order.
struct KeyInfo {
  std::string key;
  std::string default_value;
  std::string description;
};
const std::vector<KeyInfo>& key_reference();
std::string key_reference_text();

/// Defaults < file (if given) < overrides ("a.b=value", the value parsed as
/// JSON when possible, otherwise taken as a string). Relative paths in the
/// file resolve against the file's directory, those in overrides against the
/// working directory; a relative output_dir resolves against
/// $KGAN_OUTPUT_ROOT when set. Throws ConfigError.
RunConfig load(const std::optional<fs::path>& file, const std::vector<std::string>& overrides);

/// Same, from JSON text, with `base` as the directory for relative paths.
RunConfig parse(const std::string& text, const fs::path& base,
                const std::vector<std::string>& overrides = {});

}  // namespace kgan::config
