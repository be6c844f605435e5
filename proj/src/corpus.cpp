#include "kgan/corpus.hpp"

#include <algorithm>
#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cctype>
#include <charconv>
#include <map>
#include <sstream>

#include "kgan/error.hpp"

namespace kgan::corpus {

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

bool is_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

// Byte offset of the `cp`-th code point of a UTF-8 string.
std::size_t codepoint_to_byte(std::string_view text, std::size_t cp) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if ((c & 0xC0) == 0x80) continue;
    if (count == cp) return i;
    ++count;
  }
  if (count == cp) return text.size();
  throw AlignmentError("character offset " + std::to_string(cp) + " beyond end of text");
}

std::vector<TokenSpan> whitespace_tokens(std::string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    const auto begin = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    out.push_back({std::string(text.substr(begin, i - begin)), begin, i});
  }
  return out;
}

std::optional<std::pair<std::size_t, std::size_t>> exact_cover(
    const std::vector<TokenSpan>& tokens, std::size_t from, std::size_t to) {
  std::optional<std::size_t> first;
  for (std::size_t k = 0; k < tokens.size(); ++k) {
    if (tokens[k].begin == from) first = k;
    if (first && tokens[k].end == to) return std::make_pair(*first, k - *first + 1);
    if (tokens[k].begin > to) break;
  }
  return std::nullopt;
}

using boost::property_tree::ptree;

std::string attr(const ptree& node, const std::string& key) {
  auto v = node.get_optional<std::string>("<xmlattr>." + key);
  return v ? *v : std::string();
}

void collect(const ptree& node, const std::string& tag, std::vector<const ptree*>& out) {
  for (const auto& [name, child] : node) {
    if (name == tag) {
      out.push_back(&child);
    } else if (name != "<xmlattr>") {
      collect(child, tag, out);
    }
  }
}

std::size_t parse_offset(const std::string& value, const std::string& sentence_id) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size())
    throw AlignmentError("sentence " + sentence_id + ": bad character offset '" + value + "'");
  return v;
}

struct RawAspect {
  std::size_t from = 0;
  std::size_t to = 0;
  std::string polarity;
};

}  // namespace

std::string_view polarity_name(Polarity p) {
  switch (p) {
    case Polarity::kPositive: return "positive";
    case Polarity::kNeutral: return "neutral";
    case Polarity::kNegative: return "negative";
  }
  return "?";
}

Polarity polarity_from_name(std::string_view name) {
  const auto n = lower_ascii(trim(name));
  if (n == "positive") return Polarity::kPositive;
  if (n == "neutral") return Polarity::kNeutral;
  if (n == "negative") return Polarity::kNegative;
  throw LabelError("unknown polarity '" + std::string(name) + "'");
}

Polarity polarity_from_index(int index) {
  if (index < 0 || index >= kNumClasses)
    throw LabelError("polarity id out of range: " + std::to_string(index));
  return static_cast<Polarity>(index);
}

void validate(const Instance& inst) {
  if (inst.tokens.empty()) throw DataError("instance " + inst.id + ": no tokens");
  for (const auto& t : inst.tokens)
    if (t.empty()) throw DataError("instance " + inst.id + ": empty token");
  if (inst.aspect_len == 0 || inst.aspect_start + inst.aspect_len > inst.tokens.size())
    throw DataError("instance " + inst.id + ": aspect span out of range");
  polarity_from_index(static_cast<int>(inst.polarity));
}

std::string_view dataset_name(DatasetName name) {
  switch (name) {
    case DatasetName::kLaptop14: return "Laptop14";
    case DatasetName::kRestaurant14: return "Restaurant14";
    case DatasetName::kTwitter: return "Twitter";
    case DatasetName::kRestaurant15: return "Restaurant15";
    case DatasetName::kRestaurant16: return "Restaurant16";
  }
  return "?";
}

DatasetName dataset_from_name(std::string_view name) {
  const auto n = lower_ascii(name);
  for (auto d : {DatasetName::kLaptop14, DatasetName::kRestaurant14, DatasetName::kTwitter,
                 DatasetName::kRestaurant15, DatasetName::kRestaurant16}) {
    if (lower_ascii(dataset_name(d)) == n) return d;
  }
  throw ConfigError("unknown dataset '" + std::string(name) + "'");
}

std::string_view split_name(Split split) { return split == Split::kTrain ? "train" : "test"; }

ClassCounts dataset_stats(std::span<const Instance> instances) {
  ClassCounts c;
  for (const auto& inst : instances) {
    switch (inst.polarity) {
      case Polarity::kPositive: ++c.positive; break;
      case Polarity::kNegative: ++c.negative; break;
      case Polarity::kNeutral: ++c.neutral; break;
    }
  }
  return c;
}

ClassCounts reference_counts(DatasetName name, Split split) {
  const bool train = split == Split::kTrain;
  switch (name) {
    case DatasetName::kLaptop14: return train ? ClassCounts{980, 858, 454} : ClassCounts{340, 128, 171};
    case DatasetName::kRestaurant14: return train ? ClassCounts{2159, 800, 632} : ClassCounts{730, 195, 196};
    case DatasetName::kTwitter: return train ? ClassCounts{1567, 1563, 3127} : ClassCounts{174, 174, 346};
    case DatasetName::kRestaurant15: return train ? ClassCounts{912, 256, 36} : ClassCounts{326, 182, 34};
    case DatasetName::kRestaurant16: return train ? ClassCounts{1240, 439, 69} : ClassCounts{469, 117, 30};
  }
  return {};
}

// ---------------------------------------------------------------------------

std::vector<TokenSpan> tokenize_with_offsets(std::string_view text) {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
    } else if (is_punct(c)) {
      out.push_back({std::string(1, c), i, i + 1});
      ++i;
    } else {
      const auto begin = i;
      while (i < text.size() && !is_space(text[i]) && !is_punct(text[i])) ++i;
      out.push_back({lower_ascii(text.substr(begin, i - begin)), begin, i});
    }
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  for (auto& t : tokenize_with_offsets(text)) out.push_back(std::move(t.text));
  return out;
}

std::pair<std::size_t, std::size_t> align_span(std::string_view text, std::size_t from,
                                               std::size_t to, std::string_view sentence_id) {
  const std::string sid(sentence_id);
  if (from >= to) throw AlignmentError("sentence " + sid + ": empty aspect span");
  std::size_t b = codepoint_to_byte(text, from);
  std::size_t e = codepoint_to_byte(text, to);
  while (b < e && is_space(text[b])) ++b;
  while (e > b && is_space(text[e - 1])) --e;
  if (b == e) throw AlignmentError("sentence " + sid + ": blank aspect span");

  const auto tokens = tokenize_with_offsets(text);
  if (auto hit = exact_cover(tokens, b, e)) return *hit;

  // Retry on whitespace tokens and map back onto the punctuation-split tokens
  // they contain.
  const auto ws = whitespace_tokens(text);
  if (auto hit = exact_cover(ws, b, e)) {
    const auto lo = ws[hit->first].begin;
    const auto hi = ws[hit->first + hit->second - 1].end;
    std::optional<std::size_t> start;
    std::size_t len = 0;
    for (std::size_t k = 0; k < tokens.size(); ++k) {
      if (tokens[k].begin >= lo && tokens[k].end <= hi) {
        if (!start) start = k;
        ++len;
      }
    }
    if (start) return {*start, len};
  }
  throw AlignmentError("sentence " + sid + ": aspect span [" + std::to_string(from) + ", " +
                       std::to_string(to) + ") does not fall on token boundaries");
}

// ---------------------------------------------------------------------------

std::vector<Instance> parse_semeval(std::string_view xml, SemEvalSchema schema) {
  if (trim(xml).empty()) return {};
  ptree tree;
  try {
    std::istringstream in{std::string(xml)};
    boost::property_tree::read_xml(in, tree);
  } catch (const boost::property_tree::xml_parser_error& e) {
    throw ParseError("malformed XML at line " + std::to_string(e.line()) + ": " + e.message());
  }

  std::vector<const ptree*> sentences;
  collect(tree, "sentence", sentences);

  std::vector<Instance> out;
  for (const ptree* s : sentences) {
    const std::string sid = attr(*s, "id");
    const std::string text = s->get<std::string>("text", "");

    std::vector<RawAspect> aspects;
    if (schema == SemEvalSchema::kV2014) {
      if (auto terms = s->get_child_optional("aspectTerms")) {
        for (const auto& [name, term] : *terms) {
          if (name != "aspectTerm") continue;
          aspects.push_back({parse_offset(attr(term, "from"), sid),
                             parse_offset(attr(term, "to"), sid), attr(term, "polarity")});
        }
      }
    } else if (auto ops = s->get_child_optional("Opinions")) {
      // The same target span recurs once per category; keep one copy and drop
      // spans annotated with disagreeing polarities.
      std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;
      std::vector<bool> conflicting;
      for (const auto& [name, op] : *ops) {
        if (name != "Opinion") continue;
        const auto target = attr(op, "target");
        if (target.empty() || target == "NULL") continue;
        RawAspect a{parse_offset(attr(op, "from"), sid), parse_offset(attr(op, "to"), sid),
                    attr(op, "polarity")};
        const auto key = std::make_pair(a.from, a.to);
        if (auto it = seen.find(key); it != seen.end()) {
          if (lower_ascii(aspects[it->second].polarity) != lower_ascii(a.polarity))
            conflicting[it->second] = true;
          continue;
        }
        seen.emplace(key, aspects.size());
        aspects.push_back(std::move(a));
        conflicting.push_back(false);
      }
      for (std::size_t k = 0; k < aspects.size(); ++k)
        if (conflicting[k]) aspects[k].polarity = "conflict";
    }

    std::size_t ordinal = 0;
    for (const auto& a : aspects) {
      const auto pol = lower_ascii(trim(a.polarity));
      if (pol == "conflict") continue;
      Instance inst;
      inst.tokens = tokenize(text);
      auto [start, len] = align_span(text, a.from, a.to, sid);
      inst.aspect_start = start;
      inst.aspect_len = len;
      inst.polarity = polarity_from_name(pol);
      inst.id = sid + "#" + std::to_string(ordinal++);
      validate(inst);
      out.push_back(std::move(inst));
    }
  }
  return out;
}

std::vector<Instance> parse_twitter(std::string_view text) {
  auto lines = split_lines(text);
  while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.size() % 3 != 0) {
    throw FormatError("twitter file: truncated record " + std::to_string(lines.size() / 3) +
                      " (" + std::to_string(lines.size()) + " lines is not a multiple of 3)");
  }
  std::vector<Instance> out;
  out.reserve(lines.size() / 3);
  for (std::size_t r = 0; r < lines.size() / 3; ++r) {
    const auto sentence = lines[3 * r];
    const auto aspect_text = trim(lines[3 * r + 1]);
    const auto label = trim(lines[3 * r + 2]);
    const auto ph = sentence.find("$T$");
    if (ph == std::string_view::npos)
      throw FormatError("twitter record " + std::to_string(r) + ": missing $T$ placeholder");

    Polarity pol;
    if (label == "1") pol = Polarity::kPositive;
    else if (label == "0") pol = Polarity::kNeutral;
    else if (label == "-1") pol = Polarity::kNegative;
    else throw LabelError("twitter record " + std::to_string(r) + ": unknown label '" + std::string(label) + "'");

    std::string rest(sentence.substr(ph + 3));
    for (auto p = rest.find("$T$"); p != std::string::npos; p = rest.find("$T$"))
      rest.replace(p, 3, aspect_text);

    Instance inst;
    inst.tokens = tokenize(sentence.substr(0, ph));
    inst.aspect_start = inst.tokens.size();
    auto asp = tokenize(aspect_text);
    if (asp.empty()) throw FormatError("twitter record " + std::to_string(r) + ": empty aspect");
    inst.aspect_len = asp.size();
    inst.tokens.insert(inst.tokens.end(), asp.begin(), asp.end());
    auto tail = tokenize(rest);
    inst.tokens.insert(inst.tokens.end(), tail.begin(), tail.end());
    inst.polarity = pol;
    inst.id = "twitter-" + std::to_string(r);
    validate(inst);
    out.push_back(std::move(inst));
  }
  return out;
}

std::string to_tsv(std::span<const Instance> instances) {
  std::string out;
  for (const auto& inst : instances) {
    for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
      if (i) out += ' ';
      out += inst.tokens[i];
    }
    out += '\t' + std::to_string(inst.aspect_start) + '\t' + std::to_string(inst.aspect_len) +
           '\t' + std::to_string(static_cast<int>(inst.polarity)) + '\t' + inst.id + '\n';
  }
  return out;
}

std::vector<Instance> parse_tsv(std::string_view text) {
  std::vector<Instance> out;
  const auto lines = split_lines(text);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto line = lines[ln];
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t pos = 0;
    while (true) {
      auto tab = line.find('\t', pos);
      fields.push_back(line.substr(pos, tab == std::string_view::npos ? line.npos : tab - pos));
      if (tab == std::string_view::npos) break;
      pos = tab + 1;
    }
    const auto where = "tsv line " + std::to_string(ln + 1);
    if (fields.size() != 5) throw FormatError(where + ": expected 5 fields");
    auto to_int = [&](std::string_view f) {
      long long v = 0;
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size() || v < 0)
        throw FormatError(where + ": bad integer '" + std::string(f) + "'");
      return v;
    };
    Instance inst;
    for (const auto& t : whitespace_tokens(fields[0])) inst.tokens.push_back(t.text);
    inst.aspect_start = static_cast<std::size_t>(to_int(fields[1]));
    inst.aspect_len = static_cast<std::size_t>(to_int(fields[2]));
    inst.polarity = polarity_from_index(static_cast<int>(to_int(fields[3])));
    inst.id = std::string(fields[4]);
    validate(inst);
    out.push_back(std::move(inst));
  }
  return out;
}

// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
  add(std::string(kPadToken));
  add(std::string(kUnkToken));
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = index_.try_emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

int Vocabulary::index(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::optional<int> Vocabulary::find(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::vector<int> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(index(t));
  return ids;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) out += t + '\n';
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text) {
  Vocabulary v;
  const auto lines = split_lines(text);
  if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kUnkToken)
    throw FormatError("vocabulary file must start with <pad> and <unk>");
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    if (v.add(std::string(lines[i])) != static_cast<int>(i))
      throw FormatError("vocabulary file has a duplicate token at line " + std::to_string(i + 1));
  }
  return v;
}

Vocabulary build_vocab(std::span<const Dataset> datasets) {
  Vocabulary v;
  for (const auto& d : datasets)
    for (const auto& inst : d.instances)
      for (const auto& t : inst.tokens) v.add(t);
  return v;
}

}  // namespace kgan::corpus
