#include "kgan/kge.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>
#include <set>
#include <sstream>

#include "kgan/error.hpp"
#include "kgan/io.hpp"

namespace kgan::kge {

namespace {

std::uint64_t triple_key(const Triple& t) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t.head)) << 40) ^
         (static_cast<std::uint64_t>(static_cast<std::uint32_t>(t.relation)) << 20) ^
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(t.tail));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double softplus(double x) {
  return x > 30 ? x : std::log1p(std::exp(x));
}

}  // namespace

// ---------------------------------------------------------------------------

int KnowledgeGraph::add_entity(const std::string& name) {
  auto [it, inserted] = entity_index_.try_emplace(name, static_cast<int>(entities_.size()));
  if (inserted) entities_.push_back(name);
  return it->second;
}

int KnowledgeGraph::add_relation(const std::string& name) {
  auto [it, inserted] = relation_index_.try_emplace(name, static_cast<int>(relations_.size()));
  if (inserted) relations_.push_back(name);
  return it->second;
}

bool KnowledgeGraph::add_triple(const std::string& head, const std::string& relation,
                                const std::string& tail) {
  const int h = add_entity(head);
  const int r = add_relation(relation);
  const int t = add_entity(tail);
  return add_triple(Triple{h, r, t});
}

bool KnowledgeGraph::add_triple(Triple t) {
  const auto key = triple_key(t);
  auto it = std::lower_bound(triple_keys_.begin(), triple_keys_.end(), key);
  if (it != triple_keys_.end() && *it == key) return false;
  triple_keys_.insert(it, key);
  triples_.push_back(t);
  return true;
}

std::optional<int> KnowledgeGraph::entity_id(const std::string& name) const {
  auto it = entity_index_.find(name);
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

void KnowledgeGraph::validate() const {
  const int ne = static_cast<int>(entities_.size());
  const int nr = static_cast<int>(relations_.size());
  std::set<Triple> seen;
  for (const auto& t : triples_) {
    if (t.head < 0 || t.head >= ne || t.tail < 0 || t.tail >= ne || t.relation < 0 ||
        t.relation >= nr)
      throw DataError("knowledge graph: triple id out of range");
    if (!seen.insert(t).second) throw DataError("knowledge graph: duplicate triple");
  }
}

KnowledgeGraph parse_triples(std::string_view text) {
  KnowledgeGraph g;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (trim(line).empty() || trim(line).front() == '#') continue;
    std::vector<std::string> f;
    std::size_t p = 0;
    while (true) {
      auto tab = line.find('\t', p);
      f.emplace_back(trim(line.substr(p, tab == std::string_view::npos ? line.npos : tab - p)));
      if (tab == std::string_view::npos) break;
      p = tab + 1;
    }
    if (f.size() != 3 || f[0].empty() || f[1].empty() || f[2].empty())
      throw FormatError("triple file line " + std::to_string(line_no) +
                        ": expected head<TAB>relation<TAB>tail");
    g.add_triple(f[0], f[1], f[2]);
  }
  return g;
}

KnowledgeGraph make_chain_graph(int entities, int relations) {
  KnowledgeGraph g;
  for (int i = 0; i < entities; ++i) g.add_entity("e" + std::to_string(i));
  for (int r = 0; r < std::max(relations, 1); ++r) g.add_relation("r" + std::to_string(r));
  for (int i = 0; i + 1 < entities; ++i) g.add_triple(Triple{i, i % std::max(relations, 1), i + 1});
  return g;
}

KnowledgeGraph make_hierarchy_graph(int roots, int parents_per_root, int children_per_parent) {
  KnowledgeGraph g;
  const int parents = roots * parents_per_root;
  for (int p = 0; p < parents; ++p)
    g.add_triple("p" + std::to_string(p), "part_of", "root" + std::to_string(p % roots));
  for (int c = 0; c < parents * children_per_parent; ++c)
    g.add_triple("c" + std::to_string(c), "member_of", "p" + std::to_string(c / children_per_parent));
  return g;
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kTransE: return "TransE";
    case Method::kDistMult: return "DistMult";
    case Method::kComplEx: return "ComplEx";
    case Method::kAnalogy: return "ANALOGY";
  }
  return "?";
}

Method method_from_name(std::string_view name) {
  std::string n(name);
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  if (n == "transe") return Method::kTransE;
  if (n == "distmult") return Method::kDistMult;
  if (n == "complex") return Method::kComplEx;
  if (n == "analogy") return Method::kAnalogy;
  throw ConfigError("unknown KGE method '" + std::string(name) + "'");
}

int resolve_complex_dim(Method method, int dim, int complex_dim) {
  if (dim <= 0) throw ConfigError("KGE dim must be positive");
  switch (method) {
    case Method::kTransE:
    case Method::kDistMult:
      return 0;
    case Method::kComplEx:
      if (dim % 2 != 0) throw ConfigError("ComplEx needs an even dim (real and imaginary halves)");
      return dim;
    case Method::kAnalogy: {
      const int c = complex_dim < 0 ? dim / 2 : complex_dim;
      if (c > dim) throw ConfigError("ANALOGY complex block larger than dim");
      if (c % 2 != 0)
        throw ConfigError("ANALOGY complex block dimension " + std::to_string(c) +
                          " is odd; it must hold real and imaginary halves");
      return c;
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Scoring

namespace {

double complex_score(const auto& h, const auto& r, const auto& t) {
  const auto k = h.size() / 2;
  const auto hr = h.head(k), hi = h.tail(k);
  const auto rr = r.head(k), ri = r.tail(k);
  const auto tr = t.head(k), ti = t.tail(k);
  return (hr.cwiseProduct(rr).cwiseProduct(tr) + hi.cwiseProduct(rr).cwiseProduct(ti) +
          hr.cwiseProduct(ri).cwiseProduct(ti) - hi.cwiseProduct(ri).cwiseProduct(tr))
      .sum();
}

void complex_grad(const auto& h, const auto& r, const auto& t, auto gh, auto gr, auto gt) {
  const auto k = h.size() / 2;
  const auto hr = h.head(k), hi = h.tail(k);
  const auto rr = r.head(k), ri = r.tail(k);
  const auto tr = t.head(k), ti = t.tail(k);
  gh.head(k) = rr.cwiseProduct(tr) + ri.cwiseProduct(ti);
  gh.tail(k) = rr.cwiseProduct(ti) - ri.cwiseProduct(tr);
  gr.head(k) = hr.cwiseProduct(tr) + hi.cwiseProduct(ti);
  gr.tail(k) = hr.cwiseProduct(ti) - hi.cwiseProduct(tr);
  gt.head(k) = hr.cwiseProduct(rr) - hi.cwiseProduct(ri);
  gt.tail(k) = hi.cwiseProduct(rr) + hr.cwiseProduct(ri);
}

}  // namespace

double score_vectors(Method method, int complex_dim, const RowVector& h, const RowVector& r,
                     const RowVector& t) {
  switch (method) {
    case Method::kTransE:
      return -(h + r - t).norm();
    case Method::kDistMult:
      return h.cwiseProduct(r).cwiseProduct(t).sum();
    case Method::kComplEx:
      return complex_score(h, r, t);
    case Method::kAnalogy: {
      const auto real = h.size() - complex_dim;
      const double s = h.head(real).cwiseProduct(r.head(real)).cwiseProduct(t.head(real)).sum();
      if (complex_dim == 0) return s;
      return s + complex_score(h.tail(complex_dim), r.tail(complex_dim), t.tail(complex_dim));
    }
  }
  return 0.0;
}

ScoreGradient score_gradient(Method method, int complex_dim, const RowVector& h,
                             const RowVector& r, const RowVector& t) {
  ScoreGradient g{RowVector::Zero(h.size()), RowVector::Zero(r.size()), RowVector::Zero(t.size())};
  switch (method) {
    case Method::kTransE: {
      const RowVector d = h + r - t;
      const double n = d.norm();
      if (n > 0) {
        g.head = -d / n;
        g.relation = -d / n;
        g.tail = d / n;
      }
      break;
    }
    case Method::kDistMult:
      g.head = r.cwiseProduct(t);
      g.relation = h.cwiseProduct(t);
      g.tail = h.cwiseProduct(r);
      break;
    case Method::kComplEx:
      complex_grad(h, r, t, g.head.head(h.size()), g.relation.head(h.size()), g.tail.head(h.size()));
      break;
    case Method::kAnalogy: {
      const auto real = h.size() - complex_dim;
      g.head.head(real) = r.head(real).cwiseProduct(t.head(real));
      g.relation.head(real) = h.head(real).cwiseProduct(t.head(real));
      g.tail.head(real) = h.head(real).cwiseProduct(r.head(real));
      if (complex_dim > 0)
        complex_grad(h.tail(complex_dim), r.tail(complex_dim), t.tail(complex_dim),
                     g.head.tail(complex_dim), g.relation.tail(complex_dim),
                     g.tail.tail(complex_dim));
      break;
    }
  }
  return g;
}

double score(const KgeModel& model, const Triple& t) {
  const auto ne = model.entity_emb.rows();
  const auto nr = model.relation_emb.rows();
  if (t.head < 0 || t.head >= ne || t.tail < 0 || t.tail >= ne || t.relation < 0 ||
      t.relation >= nr)
    throw DataError("score: triple id out of range");
  return score_vectors(model.method, model.complex_dim, model.entity_emb.row(t.head),
                       model.relation_emb.row(t.relation), model.entity_emb.row(t.tail));
}

// ---------------------------------------------------------------------------
// Training

KgeModel train_kge(const KnowledgeGraph& graph, const TrainOptions& opt,
                   std::vector<double>* loss_history) {
  if (graph.triples().empty() || graph.entities().empty())
    throw DataError("train_kge: empty knowledge graph");
  if (opt.neg_ratio < 1) throw ConfigError("neg_ratio must be at least 1");
  if (opt.lr < 0) throw ConfigError("KGE learning rate must be non-negative");

  KgeModel model;
  model.method = opt.method;
  model.dim = opt.dim;
  model.complex_dim = resolve_complex_dim(opt.method, opt.dim, opt.complex_dim);

  std::mt19937_64 rng(opt.seed);
  const double bound = 6.0 / std::sqrt(static_cast<double>(opt.dim));
  std::uniform_real_distribution<double> init(-bound, bound);
  const auto ne = static_cast<Eigen::Index>(graph.entities().size());
  const auto nr = static_cast<Eigen::Index>(graph.relations().size());
  model.entity_emb = Matrix::NullaryExpr(ne, opt.dim, [&] { return init(rng); });
  model.relation_emb = Matrix::NullaryExpr(nr, opt.dim, [&] { return init(rng); });

  const bool transe = opt.method == Method::kTransE;
  if (transe) {
    model.entity_emb.rowwise().normalize();
    model.relation_emb.rowwise().normalize();
  }

  std::set<Triple> known(graph.triples().begin(), graph.triples().end());
  std::vector<std::size_t> order(graph.triples().size());
  std::uniform_int_distribution<int> pick_entity(0, static_cast<int>(ne) - 1);
  std::bernoulli_distribution coin(0.5);

  auto corrupt = [&](const Triple& pos) {
    Triple neg = pos;
    for (int attempt = 0; attempt < 10; ++attempt) {
      neg = pos;
      if (coin(rng)) neg.head = pick_entity(rng);
      else neg.tail = pick_entity(rng);
      if (!known.contains(neg)) break;
    }
    return neg;
  };

  auto apply = [&](const Triple& t, double coeff) {
    const RowVector h = model.entity_emb.row(t.head);
    const RowVector r = model.relation_emb.row(t.relation);
    const RowVector tl = model.entity_emb.row(t.tail);
    const auto g = score_gradient(model.method, model.complex_dim, h, r, tl);
    // coeff is d(loss)/d(score); plain SGD step.
    model.entity_emb.row(t.head) -= opt.lr * coeff * g.head;
    model.relation_emb.row(t.relation) -= opt.lr * coeff * g.relation;
    model.entity_emb.row(t.tail) -= opt.lr * coeff * g.tail;
  };

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (auto idx : order) {
      const Triple pos = graph.triples()[idx];
      for (int k = 0; k < opt.neg_ratio; ++k) {
        const Triple neg = corrupt(pos);
        const double sp = score(model, pos);
        const double sn = score(model, neg);
        if (transe) {
          const double loss = opt.margin - sp + sn;
          if (loss > 0) {
            total += loss;
            apply(pos, -1.0);
            apply(neg, 1.0);
          }
          for (int e : {pos.head, pos.tail, neg.head, neg.tail}) {
            const double n = model.entity_emb.row(e).norm();
            if (n > 0) model.entity_emb.row(e) /= n;
          }
        } else {
          total += softplus(-sp) / opt.neg_ratio + softplus(sn);
          apply(pos, -sigmoid(-sp) / opt.neg_ratio);
          apply(neg, sigmoid(sn));
        }
      }
    }
    if (loss_history) loss_history->push_back(total / static_cast<double>(order.size()));
    if (!model.entity_emb.allFinite() || !model.relation_emb.allFinite())
      throw NumericError("train_kge: non-finite embeddings at epoch " + std::to_string(epoch));
  }
  return model;
}

LinkPredictionReport link_prediction_eval(const KgeModel& model, const KnowledgeGraph& graph) {
  return link_prediction_eval(model, graph, graph.triples());
}

LinkPredictionReport link_prediction_eval(const KgeModel& model, const KnowledgeGraph& graph,
                                          const std::vector<Triple>& queries) {
  LinkPredictionReport rep;
  if (queries.empty()) return rep;
  std::set<Triple> known(graph.triples().begin(), graph.triples().end());
  const int ne = static_cast<int>(model.entity_emb.rows());
  for (const auto& q : queries) {
    const double truth = score(model, q);
    std::size_t rank = 1;
    for (int e = 0; e < ne; ++e) {
      if (e == q.tail) continue;
      const Triple cand{q.head, q.relation, e};
      if (known.contains(cand)) continue;
      if (score(model, cand) >= truth) ++rank;
    }
    rep.mrr += 1.0 / static_cast<double>(rank);
    rep.hits_at_1 += rank <= 1 ? 1.0 : 0.0;
    rep.hits_at_10 += rank <= 10 ? 1.0 : 0.0;
  }
  rep.count = queries.size();
  const double n = static_cast<double>(queries.size());
  rep.mrr /= n;
  rep.hits_at_1 /= n;
  rep.hits_at_10 /= n;
  return rep;
}

// ---------------------------------------------------------------------------
// Knowledge tables

std::string normalize_surface(std::string_view s) {
  std::string out;
  for (char c : trim(s)) {
    if (c == '_') c = ' ';
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    out += c;
  }
  return out;
}

KnowledgeTable::KnowledgeTable(std::vector<std::string> names, Matrix vectors)
    : names_(std::move(names)), vectors_(std::move(vectors)) {
  if (static_cast<Eigen::Index>(names_.size()) != vectors_.rows())
    throw DimensionError("knowledge table: name count does not match row count");
  for (std::size_t i = 0; i < names_.size(); ++i) index_name(names_[i], static_cast<int>(i));
}

void KnowledgeTable::index_name(const std::string& name, int row) {
  add_alias(name, row);
  // WordNet synset ids such as "fish_genus.n.01" also answer to their lemma.
  const auto last = name.rfind('.');
  if (last == std::string::npos || last == 0) return;
  const auto prev = name.rfind('.', last - 1);
  if (prev == std::string::npos || prev == 0) return;
  const auto pos = name.substr(prev + 1, last - prev - 1);
  const auto sense = name.substr(last + 1);
  const bool numeric = !sense.empty() && std::all_of(sense.begin(), sense.end(), [](char c) {
    return std::isdigit(static_cast<unsigned char>(c));
  });
  if (numeric && pos.size() == 1 && std::string_view("nvasr").find(pos[0]) != std::string_view::npos)
    add_alias(name.substr(0, prev), row);
}

void KnowledgeTable::add_alias(const std::string& alias, int row) {
  auto& rows = aliases_[normalize_surface(alias)];
  if (std::find(rows.begin(), rows.end(), row) == rows.end()) rows.push_back(row);
}

const std::vector<int>* KnowledgeTable::lookup(const std::string& token) const {
  auto it = aliases_.find(normalize_surface(token));
  return it == aliases_.end() ? nullptr : &it->second;
}

void KnowledgeTable::require_dim(int expected) const {
  if (dim() != expected)
    throw DimensionError("knowledge embedding dim " + std::to_string(dim()) +
                         " does not match configured dim " + std::to_string(expected));
}

KnowledgeTable entity_table(const KgeModel& model, const KnowledgeGraph& graph) {
  return KnowledgeTable(graph.entities(), model.entity_emb);
}

std::string export_embeddings(const KnowledgeTable& table) {
  std::string out = std::to_string(table.size()) + ' ' + std::to_string(table.dim()) + '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& name = table.names()[i];
    if (name.find_first_of("\n\r\t") != std::string::npos)
      throw FormatError("entity name contains a tab or newline: " + name);
    out += name;
    for (Eigen::Index j = 0; j < table.vectors().cols(); ++j)
      out += ' ' + io::format_double(table.vectors()(static_cast<Eigen::Index>(i), j));
    out += '\n';
  }
  return out;
}

KnowledgeTable parse_embeddings(std::string_view text) {
  std::size_t pos = text.find('\n');
  const auto header = trim(text.substr(0, pos));
  std::istringstream hs{std::string(header)};
  long long count = -1, dim = -1;
  std::string extra;
  if (!(hs >> count >> dim) || (hs >> extra) || count < 0 || dim <= 0)
    throw FormatError("unknown embedding format: expected a 'count dim' header line");

  std::vector<std::string> names;
  Matrix vectors(count, dim);
  std::size_t line_no = 1;
  while (pos != std::string_view::npos && pos < text.size()) {
    const auto start = pos + 1;
    pos = text.find('\n', start);
    auto line = trim(text.substr(start, pos == std::string_view::npos ? text.npos : pos - start));
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string_view> fields;
    std::size_t p = 0;
    while (p < line.size()) {
      auto sp = line.find(' ', p);
      if (sp == std::string_view::npos) sp = line.size();
      if (sp > p) fields.push_back(line.substr(p, sp - p));
      p = sp + 1;
    }
    if (fields.size() < static_cast<std::size_t>(dim) + 1)
      throw DimensionError("embedding line " + std::to_string(line_no) + ": expected " +
                           std::to_string(dim) + " values");
    if (static_cast<long long>(names.size()) >= count)
      throw FormatError("embedding file has more rows than its header count");
    const auto first_value = fields.size() - static_cast<std::size_t>(dim);
    std::string name;
    for (std::size_t k = 0; k < first_value; ++k) name += (k ? " " : "") + std::string(fields[k]);
    const auto row = static_cast<Eigen::Index>(names.size());
    for (long long j = 0; j < dim; ++j) {
      const auto f = fields[first_value + static_cast<std::size_t>(j)];
      double v = 0;
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || ptr != f.data() + f.size())
        throw FormatError("embedding line " + std::to_string(line_no) + ": bad number '" +
                          std::string(f) + "'");
      vectors(row, j) = v;
    }
    names.push_back(std::move(name));
  }
  if (static_cast<long long>(names.size()) != count)
    throw FormatError("embedding file header promises " + std::to_string(count) + " rows, found " +
                      std::to_string(names.size()));
  return KnowledgeTable(std::move(names), std::move(vectors));
}

void save_embeddings(const std::filesystem::path& path, const KnowledgeTable& table,
                     const std::string& metadata_json) {
  io::write_file(path, export_embeddings(table));
  auto sidecar = path;
  sidecar += ".json";
  io::write_file(sidecar, metadata_json);
}

KnowledgeTable load_pretrained(const std::filesystem::path& path, int expected_dim) {
  auto table = parse_embeddings(io::read_file(path));
  auto sidecar = path;
  sidecar += ".json";
  if (std::filesystem::exists(sidecar)) {
    nlohmann::json meta;
    try {
      meta = nlohmann::json::parse(io::read_file(sidecar));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("embedding metadata " + sidecar.string() + ": " + e.what());
    }
    if (meta.contains("dim") && meta["dim"].get<int>() != table.dim())
      throw DimensionError("embedding metadata dim disagrees with " + path.string());
  }
  if (expected_dim > 0) table.require_dim(expected_dim);
  return table;
}

void load_aliases(KnowledgeTable& table, std::string_view text) {
  std::unordered_map<std::string, int> rows;
  for (std::size_t i = 0; i < table.names().size(); ++i)
    rows.emplace(table.names()[i], static_cast<int>(i));
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw FormatError("alias line without a tab");
    const std::string entity(trim(line.substr(0, tab)));
    if (auto it = rows.find(entity); it != rows.end())
      table.add_alias(std::string(trim(line.substr(tab + 1))), it->second);
  }
}

EntityLookup word_to_entity(const std::string& token, const KnowledgeTable& table) {
  EntityLookup out{RowVector::Zero(table.dim()), true};
  const auto* rows = table.lookup(token);
  if (!rows || rows->empty()) return out;
  for (int r : *rows) out.vector += table.vectors().row(r);
  out.vector /= static_cast<double>(rows->size());
  out.oov = false;
  return out;
}

}  // namespace kgan::kge
