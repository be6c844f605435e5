#include "kgan/embeddings.hpp"

#include <charconv>
#include <fstream>
#include <random>

#include "kgan/error.hpp"

namespace kgan::embeddings {

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out)
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  return out;
}

Matrix uniform_rows(Eigen::Index rows, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  Matrix m(rows, dim);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = u(rng);
  if (rows > 0) m.row(corpus::Vocabulary::kPad).setZero();
  return m;
}

// Streams "token v1 .. vd" lines into the vocabulary-aligned matrix.
class VectorFileReader {
 public:
  VectorFileReader(const corpus::Vocabulary& vocab, std::uint64_t seed, int dim)
      : vocab_(vocab), seed_(seed), dim_(dim), quality_(vocab.size(), 0) {}

  void feed(std::string_view line) {
    ++line_no_;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty()) return;
    fields_.clear();
    std::size_t p = 0;
    while (p < line.size()) {
      auto sp = line.find(' ', p);
      if (sp == std::string_view::npos) sp = line.size();
      if (sp > p) fields_.push_back(line.substr(p, sp - p));
      p = sp + 1;
    }
    if (line_no_ == 1 && fields_.size() == 2 && is_integer(fields_[0]) && is_integer(fields_[1]))
      return;  // "count dim" header
    if (dim_ <= 0) dim_ = static_cast<int>(fields_.size()) - 1;
    if (dim_ <= 0 || fields_.size() < static_cast<std::size_t>(dim_) + 1)
      throw FormatError("vector file line " + std::to_string(line_no_) + ": expected " +
                        std::to_string(dim_) + " values after the token");
    ensure_matrix();

    const auto first = fields_.size() - static_cast<std::size_t>(dim_);
    if (first != 1) return;  // tokens containing spaces never occur in the vocabulary
    const std::string token(fields_[0]);
    int row = -1;
    int q = 0;
    if (auto hit = vocab_.find(token)) {
      row = *hit;
      q = 2;
    } else if (auto folded = vocab_.find(lower_ascii(token))) {
      row = *folded;
      q = 1;
    }
    if (row <= corpus::Vocabulary::kPad || quality_[static_cast<std::size_t>(row)] >= q) return;
    for (int j = 0; j < dim_; ++j) {
      const auto f = fields_[first + static_cast<std::size_t>(j)];
      double v = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size())
        throw FormatError("vector file line " + std::to_string(line_no_) + ": bad number '" +
                          std::string(f) + "'");
      m_.weights(row, j) = v;
    }
    if (quality_[static_cast<std::size_t>(row)] == 0) ++m_.found;
    quality_[static_cast<std::size_t>(row)] = q;
  }

  WordEmbeddingMatrix finish() {
    if (dim_ <= 0) throw FormatError("vector file is empty and no dimension was configured");
    ensure_matrix();
    return std::move(m_);
  }

 private:
  static bool is_integer(std::string_view s) {
    long long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
  }

  void ensure_matrix() {
    if (m_.weights.size() == 0)
      m_.weights = uniform_rows(static_cast<Eigen::Index>(vocab_.size()), dim_, seed_);
  }

  const corpus::Vocabulary& vocab_;
  std::uint64_t seed_;
  int dim_;
  std::vector<int> quality_;  // 0 random, 1 case-folded match, 2 exact match
  std::vector<std::string_view> fields_;
  std::size_t line_no_ = 0;
  WordEmbeddingMatrix m_;
};

}  // namespace

WordEmbeddingMatrix parse_static_vectors(std::string_view text, const corpus::Vocabulary& vocab,
                                         std::uint64_t seed, int dim) {
  VectorFileReader reader(vocab, seed, dim);
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    reader.feed(text.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return reader.finish();
}

WordEmbeddingMatrix load_static_vectors(const std::filesystem::path& path,
                                        const corpus::Vocabulary& vocab, std::uint64_t seed,
                                        int dim) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word vector file " + path.string());
  VectorFileReader reader(vocab, seed, dim);
  std::string line;
  while (std::getline(in, line)) reader.feed(line);
  return reader.finish();
}

WordEmbeddingMatrix random_word_matrix(const corpus::Vocabulary& vocab, int dim,
                                       std::uint64_t seed) {
  return {uniform_rows(static_cast<Eigen::Index>(vocab.size()), dim, seed), 0};
}

Vector position_weights(std::size_t m, std::size_t aspect_start, std::size_t aspect_len) {
  Vector p(static_cast<Eigen::Index>(m));
  const std::size_t last = aspect_start + aspect_len - 1;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t dist = 0;
    if (i < aspect_start) dist = aspect_start - i;
    else if (i > last) dist = i - last;
    p(static_cast<Eigen::Index>(i)) = 1.0 - static_cast<double>(dist) / static_cast<double>(m);
  }
  return p;
}

Matrix knowledge_matrix(const corpus::Vocabulary& vocab, const kge::KnowledgeTable& table,
                        std::vector<bool>* oov) {
  Matrix k = Matrix::Zero(static_cast<Eigen::Index>(vocab.size()), table.dim());
  if (oov) oov->assign(vocab.size(), true);
  for (std::size_t v = 2; v < vocab.size(); ++v) {
    auto hit = kge::word_to_entity(vocab.token(static_cast<int>(v)), table);
    if (hit.oov) continue;
    k.row(static_cast<Eigen::Index>(v)) = hit.vector;
    if (oov) (*oov)[v] = false;
  }
  return k;
}

EmbeddedInstance embed_instance(const corpus::Instance& inst, const corpus::Vocabulary& vocab,
                                const Matrix& word_matrix, const kge::KnowledgeTable& knowledge,
                                bool position) {
  const auto m = static_cast<Eigen::Index>(inst.tokens.size());
  const auto n = static_cast<Eigen::Index>(inst.aspect_len);
  const auto start = static_cast<Eigen::Index>(inst.aspect_start);
  const auto ids = vocab.encode(inst.tokens);

  EmbeddedInstance out;
  out.sentence.resize(m, word_matrix.cols());
  for (Eigen::Index i = 0; i < m; ++i) out.sentence.row(i) = word_matrix.row(ids[static_cast<std::size_t>(i)]);
  out.aspect = out.sentence.middleRows(start, n);
  if (position)
    out.sentence = position_weights(inst.tokens.size(), inst.aspect_start, inst.aspect_len)
                       .asDiagonal() * out.sentence;

  out.knowledge.resize(m, knowledge.dim());
  out.oov_mask.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto k = static_cast<std::size_t>(i);
    // Out-of-vocabulary words share the UNK row, which carries no knowledge.
    if (ids[k] == corpus::Vocabulary::kUnk) {
      out.knowledge.row(i).setZero();
      out.oov_mask[k] = true;
      continue;
    }
    auto hit = kge::word_to_entity(inst.tokens[k], knowledge);
    out.knowledge.row(i) = hit.vector;
    out.oov_mask[k] = hit.oov;
  }
  out.aspect_knowledge = out.knowledge.middleRows(start, n);
  return out;
}

}  // namespace kgan::embeddings
