#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kgan::corpus {

/// Class ids are fixed: 0 positive, 1 neutral, 2 negative.
enum class Polarity : int { kPositive = 0, kNeutral = 1, kNegative = 2 };
inline constexpr int kNumClasses = 3;

std::string_view polarity_name(Polarity p);
/// Accepts "positive"/"neutral"/"negative" (any case). Throws LabelError.
Polarity polarity_from_name(std::string_view name);
/// Integer class id; throws LabelError outside {0,1,2}.
Polarity polarity_from_index(int index);

struct Instance {
  std::vector<std::string> tokens;
  std::size_t aspect_start = 0;
  std::size_t aspect_len = 1;
  Polarity polarity = Polarity::kPositive;
  std::string id;

  std::span<const std::string> aspect() const {
    return std::span<const std::string>(tokens).subspan(aspect_start, aspect_len);
  }
  bool operator==(const Instance&) const = default;
};

/// Throws DataError when the span or token invariants are broken.
void validate(const Instance& instance);

enum class DatasetName { kLaptop14, kRestaurant14, kTwitter, kRestaurant15, kRestaurant16 };
enum class Split { kTrain, kTest };

std::string_view dataset_name(DatasetName name);
DatasetName dataset_from_name(std::string_view name);
std::string_view split_name(Split split);

struct Dataset {
  DatasetName name = DatasetName::kLaptop14;
  Split split = Split::kTrain;
  std::vector<Instance> instances;
};

/// Per-class counts, in the (positive, negative, neutral) column order of the
/// published statistics table.
struct ClassCounts {
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t neutral = 0;

  std::size_t total() const { return positive + negative + neutral; }
  bool operator==(const ClassCounts&) const = default;
};

ClassCounts dataset_stats(std::span<const Instance> instances);
inline ClassCounts dataset_stats(const Dataset& dataset) { return dataset_stats(dataset.instances); }

/// Published per-class counts for every benchmark split.
ClassCounts reference_counts(DatasetName name, Split split);

// ---------------------------------------------------------------------------
// Tokenization

/// A token together with its byte range [begin, end) in the source text.
struct TokenSpan {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Lowercases ASCII letters, isolates every ASCII punctuation character as its
/// own token and splits on whitespace.
std::vector<std::string> tokenize(std::string_view text);
std::vector<TokenSpan> tokenize_with_offsets(std::string_view text);

/// Maps a character range onto the token range that covers it exactly.
/// Returns {start, len}. Throws AlignmentError naming `sentence_id`.
std::pair<std::size_t, std::size_t> align_span(std::string_view text, std::size_t from,
                                               std::size_t to,
                                               std::string_view sentence_id);

// ---------------------------------------------------------------------------
// Loaders

enum class SemEvalSchema { kV2014, kV2015_16 };

/// One Instance per (sentence, aspect); "conflict" polarities and NULL
/// targets are dropped.
std::vector<Instance> parse_semeval(std::string_view xml, SemEvalSchema schema);

/// Three-line records: sentence with a "$T$" placeholder, aspect, label in
/// {1, 0, -1}.
std::vector<Instance> parse_twitter(std::string_view text);

/// Tab-separated interchange: tokens (space-joined), aspect_start,
/// aspect_len, polarity id, instance id. One record per line.
std::string to_tsv(std::span<const Instance> instances);
std::vector<Instance> parse_tsv(std::string_view text);

// ---------------------------------------------------------------------------
// Vocabulary

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  /// Adds `token` if unseen and returns its index.
  int add(const std::string& token);
  /// UNK for unseen tokens.
  int index(const std::string& token) const;
  std::optional<int> find(const std::string& token) const;
  const std::string& token(int index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::span<const std::string> tokens) const;

  /// One token per line, index order.
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

/// Insertion-ordered over datasets, instances and tokens.
Vocabulary build_vocab(std::span<const Dataset> datasets);

}  // namespace kgan::corpus
