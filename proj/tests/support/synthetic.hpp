#pragma once

// Small generated ABSA corpora for hermetic tests: the label of each
// instance is carried by a sentiment word next to its aspect, and the
// knowledge table encodes each sentiment word's class.

#include <cstdint>
#include <filesystem>

#include "kgan/evaluation.hpp"

namespace kgan::testing {

struct SyntheticOptions {
  std::size_t train = 48;
  std::size_t test = 24;
  int d_w = 8;
  int d_k = 4;
  std::uint64_t seed = 7;
};

evaluation::ExperimentInputs make_synthetic(const SyntheticOptions& options = {});

/// Three hand-written instances of at most four tokens (one with a two-word
/// aspect) over make_synthetic's vocabulary, with chain parses.
std::vector<network::ModelInput> short_batch(const evaluation::ExperimentInputs& inputs);

/// Tiny model configuration matching make_synthetic's dimensions.
network::KganConfig tiny_config(const SyntheticOptions& options = {}, int hidden = 4);

/// Writes train.tsv, test.tsv, train.conllu, test.conllu, words.txt and
/// knowledge.txt under `dir`.
void write_synthetic(const std::filesystem::path& dir, const evaluation::ExperimentInputs& inputs);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

}  // namespace kgan::testing
