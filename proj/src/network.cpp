#include "kgan/network.hpp"

#include <cmath>
#include <functional>
#include <json.hpp>

#include "kgan/embeddings.hpp"
#include "kgan/error.hpp"

namespace kgan::network {

using nn::Var;
using json = nlohmann::json;

std::string_view fusion_name(Fusion f) {
  switch (f) {
    case Fusion::kHierarchical: return "hierarchical";
    case Fusion::kConcat: return "concat";
    case Fusion::kSum: return "sum";
    case Fusion::kAttention: return "attention";
    case Fusion::kVoting: return "voting";
  }
  return "?";
}

Fusion fusion_from_name(std::string_view name) {
  for (auto f : {Fusion::kHierarchical, Fusion::kConcat, Fusion::kSum, Fusion::kAttention,
                 Fusion::kVoting})
    if (fusion_name(f) == name) return f;
  throw ConfigError("unknown fusion strategy '" + std::string(name) +
                    "' (expected hierarchical, concat, sum, attention or voting)");
}

std::string BranchSet::code() const {
  std::string s;
  if (context) s += 'c';
  if (syntax) s += 's';
  if (knowledge) s += 'k';
  return s;
}

BranchSet BranchSet::from_code(std::string_view code) {
  BranchSet b{false, false, false};
  for (char c : code) {
    bool* slot = c == 'c' ? &b.context : c == 's' ? &b.syntax : c == 'k' ? &b.knowledge : nullptr;
    if (!slot || *slot)
      throw ConfigError("branch set '" + std::string(code) + "' must use each of c, s, k at most once");
    *slot = true;
  }
  if (b.count() == 0) throw ConfigError("branch set is empty");
  return b;
}

void KganConfig::validate() const {
  if (d_w < 1 || d_k < 1 || hidden < 1) throw ConfigError("d_w, d_k and hidden must be positive");
  if (n_classes != 3) throw ConfigError("n_classes must be 3");
  if (gcn_layers < 1) throw ConfigError("gcn_layers must be at least 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (branches.count() == 0) throw ConfigError("at least one branch is required");
  if (fusion == Fusion::kHierarchical && !branches.all())
    throw ConfigError("hierarchical fusion needs all three branches (got '" + branches.code() + "')");
}

std::string KganConfig::to_json() const {
  json j = {{"d_w", d_w},
            {"d_k", d_k},
            {"hidden", hidden},
            {"n_classes", n_classes},
            {"gcn_layers", gcn_layers},
            {"dropout", dropout},
            {"branches", branches.code()},
            {"fusion", std::string(fusion_name(fusion))},
            {"symmetrize", symmetrize},
            {"position", position},
            {"seed", seed}};
  return j.dump();
}

KganConfig KganConfig::from_json(std::string_view text) {
  KganConfig c;
  try {
    const auto j = json::parse(text);
    c.d_w = j.at("d_w").get<int>();
    c.d_k = j.at("d_k").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.n_classes = j.at("n_classes").get<int>();
    c.gcn_layers = j.at("gcn_layers").get<int>();
    c.dropout = j.at("dropout").get<double>();
    c.branches = BranchSet::from_code(j.at("branches").get<std::string>());
    c.fusion = fusion_from_name(j.at("fusion").get<std::string>());
    c.symmetrize = j.at("symmetrize").get<bool>();
    c.position = j.at("position").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

ModelInput make_input(const corpus::Instance& instance, const corpus::Vocabulary& vocab,
                      const depparse::AdjacencyMatrix& adjacency, bool position) {
  const auto m = instance.tokens.size();
  if (adjacency.size() != m)
    throw AlignmentError("instance " + instance.id + ": adjacency is " +
                         std::to_string(adjacency.size()) + "x" + std::to_string(adjacency.size()) +
                         " but the sentence has " + std::to_string(m) + " tokens");
  ModelInput in;
  in.ids = vocab.encode(instance.tokens);
  in.aspect_start = instance.aspect_start;
  in.aspect_len = instance.aspect_len;
  in.position = position ? embeddings::position_weights(m, instance.aspect_start, instance.aspect_len)
                         : Vector::Ones(static_cast<Eigen::Index>(m));
  in.adjacency = adjacency.dense();
  in.gold = static_cast<int>(instance.polarity);
  return in;
}

Matrix normalized_adjacency(const Matrix& a) {
  const Vector d = a.rowwise().sum();
  return (1.0 / (d.array() + 1.0)).matrix().asDiagonal() * a;
}

Matrix gcn_layer(const Matrix& h, const Matrix& a, const Matrix& w, const RowVector& b) {
  if (a.rows() != h.rows() || a.cols() != h.rows() || w.rows() != h.cols() || b.size() != w.cols())
    throw DimensionError("gcn_layer: inconsistent shapes");
  Matrix out = (normalized_adjacency(a) * h * w).rowwise() + b;
  return out.cwiseMax(0.0);
}

RowVector softmax(const RowVector& logits) {
  const RowVector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

// ---------------------------------------------------------------------------

namespace {

Matrix xavier(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-a, a);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

Matrix uniform(Eigen::Index rows, Eigen::Index cols, double a, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-a, a);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
  return m;
}

const char* const kBranchNames[3] = {"context", "syntax", "knowledge"};

}  // namespace

KganModel::KganModel(const KganConfig& config, const Matrix& word_embeddings, Matrix knowledge)
    : config_(config), knowledge_(std::move(knowledge)) {
  config_.validate();
  if (word_embeddings.cols() != config_.d_w)
    throw DimensionError("word embeddings have dimension " + std::to_string(word_embeddings.cols()) +
                         " but the model expects d_w = " + std::to_string(config_.d_w));
  if (config_.branches.knowledge && knowledge_.cols() != config_.d_k)
    throw DimensionError("knowledge embeddings have dimension " + std::to_string(knowledge_.cols()) +
                         " but the model expects d_k = " + std::to_string(config_.d_k));
  if (config_.branches.knowledge && knowledge_.rows() != word_embeddings.rows())
    throw DimensionError("knowledge matrix and word embeddings cover different vocabularies");
  if (!config_.branches.knowledge) knowledge_.resize(0, 0);

  std::mt19937_64 rng(config_.seed);
  const auto H = config_.hidden;
  const auto dr = config_.d_r();
  const auto C = config_.n_classes;
  const auto& br = config_.branches;

  add("embedding.word", word_embeddings);
  params_.back().frozen_rows = {corpus::Vocabulary::kPad};
  params_.back().value.row(corpus::Vocabulary::kPad).setZero();

  const double lstm_a = 1.0 / std::sqrt(static_cast<double>(H));
  auto add_lstm = [&](const std::string& prefix) {
    for (const char* dir : {"fwd", "bwd"}) {
      add(prefix + "." + dir + ".wx", uniform(config_.d_w, 4 * H, lstm_a, rng));
      add(prefix + "." + dir + ".wh", uniform(H, 4 * H, lstm_a, rng));
      add(prefix + "." + dir + ".b", uniform(1, 4 * H, lstm_a, rng));
    }
  };
  add_lstm("encoder.sentence");
  if (br.context || br.knowledge) add_lstm("encoder.aspect");

  if (br.context) add("context.attention", xavier(dr, dr, rng));
  if (br.syntax) {
    for (int l = 0; l < config_.gcn_layers; ++l) {
      add("syntax.gcn" + std::to_string(l) + ".weight", xavier(dr, dr, rng));
      add("syntax.gcn" + std::to_string(l) + ".bias", Matrix::Zero(1, dr));
    }
  }
  if (br.knowledge) {
    const auto g = dr + config_.d_k;
    add("knowledge.attention", xavier(g, g, rng));
    add("knowledge.proj.weight", xavier(g, dr, rng));
    add("knowledge.proj.bias", Matrix::Zero(1, dr));
  }

  auto add_linear = [&](const std::string& prefix, Eigen::Index in, Eigen::Index out) {
    add(prefix + ".weight", xavier(in, out, rng));
    add(prefix + ".bias", Matrix::Zero(1, out));
  };
  const bool active[3] = {br.context, br.syntax, br.knowledge};
  switch (config_.fusion) {
    case Fusion::kHierarchical:
      add_linear("fusion.local_cs", 2 * dr, C);
      add_linear("fusion.local_ck", 2 * dr, C);
      add_linear("fusion.local_sk", 2 * dr, C);
      add_linear("fusion.conv", 9, C);
      break;
    case Fusion::kConcat:
      add_linear("fusion.concat", br.count() * dr, C);
      break;
    case Fusion::kSum:
      for (int b = 0; b < 3; ++b)
        if (active[b]) add_linear(std::string("fusion.sum.") + kBranchNames[b], dr, C);
      break;
    case Fusion::kAttention:
      add_linear("fusion.attention", dr, C);
      break;
    case Fusion::kVoting:
      for (int b = 0; b < 3; ++b)
        if (active[b]) add_linear(std::string("fusion.vote.") + kBranchNames[b], dr, C);
      break;
  }
}

void KganModel::add(std::string name, Matrix value) {
  nn::Parameter p;
  p.name = std::move(name);
  p.value = std::move(value);
  params_.push_back(std::move(p));
}

std::size_t KganModel::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].name == name) return i;
  throw std::out_of_range("no parameter named " + std::string(name));
}

nn::Parameter& KganModel::parameter(std::string_view name) { return params_[index_of(name)]; }
const nn::Parameter& KganModel::parameter(std::string_view name) const {
  return params_[index_of(name)];
}

bool KganModel::has_parameter(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

std::size_t KganModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

void KganModel::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void KganModel::load_values(const KganModel& other) {
  if (other.params_.size() != params_.size())
    throw DimensionError("load_values: models have different parameter sets");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name ||
        params_[i].value.rows() != other.params_[i].value.rows() ||
        params_[i].value.cols() != other.params_[i].value.cols())
      throw DimensionError("load_values: parameter " + params_[i].name + " does not match");
    params_[i].value = other.params_[i].value;
  }
}

// Binds parameters to tape leaves: trainable leaves in training mode, plain
// constants when only values are needed.
struct KganModel::Binder {
  nn::Tape& tape;
  const KganModel& model;
  std::vector<nn::Parameter>* trainable;
  std::vector<Var> cache;

  Var operator()(std::string_view name) {
    const auto i = model.index_of(name);
    if (cache.empty()) cache.resize(model.params_.size());
    if (!cache[i].valid())
      cache[i] = trainable ? tape.parameter((*trainable)[i]) : tape.constant_ref(model.params_[i].value);
    return cache[i];
  }
};

namespace {

using ParamFn = std::function<Var(const std::string&)>;

/// Softmax over a column of scores, returned as a 1 x m row.
Var attention_row(Var scores) { return nn::softmax_rows(nn::transpose(scores)); }

Var encode(const ParamFn& p, const std::string& prefix, Var x) {
  return bilstm(x, p(prefix + ".fwd.wx"), p(prefix + ".fwd.wh"), p(prefix + ".fwd.b"),
                p(prefix + ".bwd.wx"), p(prefix + ".bwd.wh"), p(prefix + ".bwd.b"));
}

Linear linear_of(const ParamFn& p, const std::string& prefix) {
  return Linear{p(prefix + ".weight"), p(prefix + ".bias")};
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - rate);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng) < rate ? 0.0 : keep;
  return m;
}

Vector to_vector(const Matrix& row) { return row.row(0).transpose(); }

}  // namespace

Var Linear::operator()(Var x) const { return nn::add_row(nn::matmul(x, weight), bias); }

Var bilstm(Var x, Var fwd_wx, Var fwd_wh, Var fwd_b, Var bwd_wx, Var bwd_wh, Var bwd_b) {
  Var f = nn::lstm(x, fwd_wx, fwd_wh, fwd_b, false);
  Var b = nn::lstm(x, bwd_wx, bwd_wh, bwd_b, true);
  return nn::concat_cols({f, b});
}

BranchOutput context_branch(Var hs, Var ht, Var w_a) {
  const double d = static_cast<double>(hs.cols());
  Var self = nn::softmax_rows(nn::scale(nn::matmul(hs, nn::transpose(hs)), 1.0 / std::sqrt(d)));
  Var hp = nn::matmul(self, hs);
  Var scores = nn::matmul(nn::matmul(hp, w_a), nn::transpose(nn::mean_rows(ht)));
  Var alpha = attention_row(scores);
  return {nn::matmul(alpha, hp), alpha};
}

BranchOutput syntax_branch(Var hs, const Matrix& adjacency, std::size_t aspect_start,
                           std::size_t aspect_len, std::span<const GcnWeights> layers) {
  const auto m = hs.rows();
  const auto start = static_cast<Eigen::Index>(aspect_start);
  const auto n = static_cast<Eigen::Index>(aspect_len);
  if (adjacency.rows() != m || adjacency.cols() != m || start + n > m)
    throw DimensionError("syntax branch: adjacency or aspect span does not match the sentence");
  const Matrix a_norm = normalized_adjacency(adjacency);
  Var h = hs;
  for (const auto& layer : layers)
    h = nn::relu(nn::add_row(nn::left_multiply(a_norm, nn::matmul(h, layer.weight)), layer.bias));
  Matrix keep = Matrix::Zero(m, h.cols());
  keep.middleRows(start, n).setOnes();
  Var aspect_sum = nn::sum_rows(nn::mask(h, keep));
  Var alpha = attention_row(nn::matmul(hs, nn::transpose(aspect_sum)));
  return {nn::matmul(alpha, hs), alpha};
}

BranchOutput knowledge_branch(Var hs, Var k, Var kt, Var ht, Var w_k, Var proj_w, Var proj_b) {
  Var g = nn::concat_cols({hs, k});
  Var q = nn::concat_cols({nn::mean_rows(ht), nn::mean_rows(kt)});
  Var gamma = attention_row(nn::matmul(nn::matmul(g, w_k), nn::transpose(q)));
  Var pooled = nn::matmul(gamma, g);
  return {Linear{proj_w, proj_b}(pooled), gamma};
}

Var fuse_hierarchical(Var rc, Var rs, Var rk, const Linear& cs, const Linear& ck, const Linear& sk,
                      const Linear& conv) {
  Var stacked = nn::concat_rows({cs(nn::concat_cols({rc, rs})), ck(nn::concat_cols({rc, rk})),
                                 sk(nn::concat_cols({rs, rk}))});
  return conv(nn::flatten(stacked));
}

Var KganModel::forward(nn::Tape& tape, const ModelInput& input, std::mt19937_64* dropout_rng,
                       AttentionRecord* attention) {
  Binder bind{tape, *this, &params_, {}};
  return forward_impl(tape, bind, input, dropout_rng, attention);
}

Prediction KganModel::predict(const ModelInput& input) const {
  nn::Tape tape;
  Binder bind{tape, *this, nullptr, {}};
  Prediction out;
  Var logits = forward_impl(tape, bind, input, nullptr, &out.attention);
  out.logits = logits.value().row(0);
  out.probabilities = softmax(out.logits);
  Eigen::Index best = 0;
  out.probabilities.maxCoeff(&best);
  out.label = static_cast<int>(best);
  return out;
}

Var KganModel::forward_impl(nn::Tape& tape, Binder& bind, const ModelInput& input,
                            std::mt19937_64* dropout_rng, AttentionRecord* attention) const {
  const auto m = static_cast<Eigen::Index>(input.ids.size());
  const auto start = static_cast<Eigen::Index>(input.aspect_start);
  const auto n = static_cast<Eigen::Index>(input.aspect_len);
  if (m == 0 || n == 0 || start + n > m) throw DimensionError("forward: invalid aspect span");
  if (input.position.size() != m || input.adjacency.rows() != m || input.adjacency.cols() != m)
    throw DimensionError("forward: position weights or adjacency do not match the sentence length");
  const auto& br = config_.branches;
  const ParamFn p = [&bind](const std::string& name) { return bind(name); };

  // X_s is position weighted, X_t is raw; dropout applies to both.
  std::vector<int> aspect_ids(input.ids.begin() + start, input.ids.begin() + start + n);
  Var E = p("embedding.word");
  Var xs = nn::scale_rows(nn::gather_rows(E, input.ids), input.position);
  Var xt = nn::gather_rows(E, std::move(aspect_ids));
  if (dropout_rng && config_.dropout > 0.0) {
    xs = nn::mask(xs, dropout_mask(xs.rows(), xs.cols(), config_.dropout, *dropout_rng));
    xt = nn::mask(xt, dropout_mask(xt.rows(), xt.cols(), config_.dropout, *dropout_rng));
  }

  Var hs = encode(p, "encoder.sentence", xs);
  Var ht;
  if (br.context || br.knowledge) ht = encode(p, "encoder.aspect", xt);

  std::vector<Var> views;  // c, s, k order
  Var rc, rs, rk;
  if (br.context) {
    auto out = context_branch(hs, ht, p("context.attention"));
    rc = out.representation;
    if (attention) attention->context = to_vector(out.weights.value());
    views.push_back(rc);
  }
  if (br.syntax) {
    std::vector<GcnWeights> layers;
    for (int l = 0; l < config_.gcn_layers; ++l) {
      const auto pre = "syntax.gcn" + std::to_string(l);
      layers.push_back({p(pre + ".weight"), p(pre + ".bias")});
    }
    auto out = syntax_branch(hs, input.adjacency, input.aspect_start, input.aspect_len, layers);
    rs = out.representation;
    if (attention) attention->syntax = to_vector(out.weights.value());
    views.push_back(rs);
  }
  if (br.knowledge) {
    Var k = nn::gather_rows(tape.constant_ref(knowledge_), input.ids);
    auto out = knowledge_branch(hs, k, nn::slice_rows(k, start, n), ht, p("knowledge.attention"),
                                p("knowledge.proj.weight"), p("knowledge.proj.bias"));
    rk = out.representation;
    if (attention) attention->knowledge = to_vector(out.weights.value());
    views.push_back(rk);
  }

  switch (config_.fusion) {
    case Fusion::kHierarchical:
      return fuse_hierarchical(rc, rs, rk, linear_of(p, "fusion.local_cs"),
                               linear_of(p, "fusion.local_ck"), linear_of(p, "fusion.local_sk"),
                               linear_of(p, "fusion.conv"));
    case Fusion::kConcat:
      return linear_of(p, "fusion.concat")(nn::concat_cols(std::span<const Var>(views)));
    case Fusion::kSum:
    case Fusion::kVoting: {
      // One head per view; SUM adds their logits, VOTING averages their
      // class probabilities and returns the log of the average.
      const bool vote = config_.fusion == Fusion::kVoting;
      const std::string prefix = vote ? "fusion.vote." : "fusion.sum.";
      const bool active[3] = {br.context, br.syntax, br.knowledge};
      Var total;
      std::size_t v = 0;
      for (int b = 0; b < 3; ++b) {
        if (!active[b]) continue;
        Var out = linear_of(p, prefix + kBranchNames[b])(views[v++]);
        if (vote) out = nn::softmax_rows(out);
        total = total.valid() ? nn::add(total, out) : out;
      }
      if (!vote) return total;
      return nn::log(nn::scale(total, 1.0 / static_cast<double>(views.size())));
    }
    case Fusion::kAttention: {
      // Views are keys and values; each view as a query scores all views and
      // the scores are summed before the softmax, which equals querying with
      // the sum of the views.
      Var values = nn::concat_rows(std::span<const Var>(views));
      Var scores = nn::scale(nn::matmul(values, nn::transpose(nn::sum_rows(values))),
                             1.0 / std::sqrt(static_cast<double>(config_.d_r())));
      return linear_of(p, "fusion.attention")(nn::matmul(attention_row(scores), values));
    }
  }
  throw ConfigError("unhandled fusion strategy");
}

}  // namespace kgan::network
