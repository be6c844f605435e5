#include "kgan/depparse.hpp"

#include <charconv>
#include <sstream>

#include "kgan/error.hpp"

namespace kgan::depparse {

namespace {

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto k = line.find(sep, pos);
    out.push_back(line.substr(pos, k == std::string_view::npos ? line.npos : k - pos));
    if (k == std::string_view::npos) break;
    pos = k + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

int to_int(std::string_view f, const std::string& where) {
  int v = 0;
  auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
  if (ec != std::errc() || p != f.data() + f.size())
    throw FormatError(where + ": bad integer '" + std::string(f) + "'");
  return v;
}

}  // namespace

void validate_tree(const DependencyParse& parse, std::string_view sentence_id) {
  const std::string sid(sentence_id);
  const int n = static_cast<int>(parse.heads.size());
  int roots = 0;
  for (int h : parse.heads) {
    if (h == kRoot) ++roots;
    else if (h < 0 || h >= n) throw TreeError("sentence " + sid + ": head index out of range");
  }
  if (roots != 1)
    throw TreeError("sentence " + sid + ": expected one root, found " + std::to_string(roots));
  // Every token must reach the root within n steps.
  for (int i = 0; i < n; ++i) {
    int cur = i;
    int steps = 0;
    while (parse.heads[static_cast<std::size_t>(cur)] != kRoot) {
      cur = parse.heads[static_cast<std::size_t>(cur)];
      if (++steps > n) throw TreeError("sentence " + sid + ": cyclic head assignment");
    }
  }
}

std::map<std::string, DependencyParse> load_conllu(std::string_view text) {
  std::map<std::string, DependencyParse> out;
  std::optional<std::string> sid;
  DependencyParse cur;
  std::size_t line_no = 0;
  std::size_t block_start = 0;

  auto flush = [&] {
    if (cur.heads.empty() && !sid) return;
    if (!sid)
      throw FormatError("conllu block at line " + std::to_string(block_start) + " has no sent_id");
    if (cur.heads.empty()) throw FormatError("conllu sentence " + *sid + " has no tokens");
    validate_tree(cur, *sid);
    if (!out.emplace(*sid, std::move(cur)).second)
      throw FormatError("conllu: duplicate sent_id " + *sid);
    cur = DependencyParse{};
    sid.reset();
  };

  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;

    if (line.empty()) {
      flush();
      continue;
    }
    if (cur.heads.empty() && !sid) block_start = line_no;
    if (line.front() == '#') {
      auto body = trim(line.substr(1));
      for (std::string_view key : {"sent_id", "id"}) {
        if (body.substr(0, key.size()) == key) {
          auto rest = trim(body.substr(key.size()));
          if (!rest.empty() && rest.front() == '=') {
            sid = std::string(trim(rest.substr(1)));
            break;
          }
        }
      }
      continue;
    }
    const auto where = "conllu line " + std::to_string(line_no);
    auto cols = split(line, '\t');
    if (cols.size() != 10) throw FormatError(where + ": expected 10 tab-separated columns");
    if (cols[0].find_first_of("-.") != std::string_view::npos) continue;
    const int id = to_int(cols[0], where);
    if (id != static_cast<int>(cur.heads.size()) + 1)
      throw FormatError(where + ": token ids must be consecutive from 1");
    const int head = to_int(cols[6], where);
    cur.forms.emplace_back(cols[1]);
    cur.heads.push_back(head - 1);  // 0 (root) becomes kRoot
    cur.labels.emplace_back(cols[7]);
  }
  flush();
  return out;
}

void check_alignment(const DependencyParse& parse, std::size_t token_count,
                     std::string_view sentence_id) {
  if (parse.size() != token_count) {
    throw AlignmentError("sentence " + std::string(sentence_id) + ": parse has " +
                         std::to_string(parse.size()) + " tokens, corpus has " +
                         std::to_string(token_count));
  }
}

AdjacencyMatrix build_adjacency(const DependencyParse& parse, bool symmetrize) {
  const auto m = static_cast<Eigen::Index>(parse.size());
  Matrix a = Matrix::Identity(m, m);
  for (Eigen::Index child = 0; child < m; ++child) {
    const int head = parse.heads[static_cast<std::size_t>(child)];
    if (head == kRoot) continue;
    a(head, child) = 1.0;
    if (symmetrize) a(child, head) = 1.0;
  }
  return AdjacencyMatrix(std::move(a));
}

DependencyParse chain_parse(std::size_t length) {
  DependencyParse p;
  for (std::size_t i = 0; i < length; ++i) {
    p.forms.push_back("w" + std::to_string(i));
    p.heads.push_back(i == 0 ? kRoot : static_cast<int>(i) - 1);
    p.labels.push_back(i == 0 ? "root" : "dep");
  }
  return p;
}

std::string to_conllu(std::string_view sentence_id, const DependencyParse& parse) {
  std::string out = "# sent_id = " + std::string(sentence_id) + "\n";
  for (std::size_t i = 0; i < parse.size(); ++i) {
    const auto form = i < parse.forms.size() ? parse.forms[i] : std::string("_");
    const auto label = i < parse.labels.size() ? parse.labels[i] : std::string("dep");
    out += std::to_string(i + 1) + '\t' + form + "\t_\t_\t_\t_\t" +
           std::to_string(parse.heads[i] + 1) + '\t' + label + "\t_\t_\n";
  }
  return out + "\n";
}

std::string serialize_adjacency(const std::vector<std::pair<std::string, AdjacencyMatrix>>& items) {
  std::string out;
  for (const auto& [id, adj] : items) {
    out += id + ' ' + std::to_string(adj.size()) + '\n';
    for (std::size_t i = 0; i < adj.size(); ++i) {
      for (std::size_t j = 0; j < adj.size(); ++j) {
        if (j) out += ' ';
        out += adj(i, j) != 0.0 ? '1' : '0';
      }
      out += '\n';
    }
  }
  return out;
}

std::vector<std::pair<std::string, AdjacencyMatrix>> parse_adjacency(std::string_view text) {
  std::vector<std::pair<std::string, AdjacencyMatrix>> out;
  std::istringstream in{std::string(text)};
  std::string id;
  std::size_t m = 0;
  while (in >> id >> m) {
    Matrix a(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        int v = -1;
        if (!(in >> v) || (v != 0 && v != 1))
          throw FormatError("adjacency cache: bad entry for " + id);
        a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      }
    }
    out.emplace_back(id, AdjacencyMatrix(std::move(a)));
  }
  if (!in.eof()) throw FormatError("adjacency cache: trailing garbage after " + id);
  return out;
}

}  // namespace kgan::depparse
