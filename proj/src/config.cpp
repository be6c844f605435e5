#include "kgan/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <json.hpp>
#include <sstream>

#include "kgan/error.hpp"
#include "kgan/io.hpp"

namespace kgan::config {

using ojson = nlohmann::ordered_json;

namespace {

const std::vector<KeyInfo>& keys() {
  static const std::vector<KeyInfo> k = {
      {"dataset.name", "\"laptop14\"", "laptop14, restaurant14, twitter, restaurant15, restaurant16 or custom"},
      {"dataset.format", "\"semeval2014\"", "semeval2014, semeval2015 (also 2016), twitter or tsv"},
      {"dataset.train", "\"\"", "training split file"},
      {"dataset.test", "\"\"", "test split file"},
      {"dataset.train_parses", "\"\"", "CoNLL-U parses of the training sentences"},
      {"dataset.test_parses", "\"\"", "CoNLL-U parses of the test sentences"},
      {"dataset.check_stats", "true", "fail when class counts differ from the published table"},
      {"dataset.subset", "0", "use only the first N training instances (0 = all)"},
      {"embeddings.words", "\"\"", "word vectors (\"token v1 .. vd\"); empty = random init"},
      {"embeddings.knowledge", "\"\"", "entity embedding table (\"count dim\" header)"},
      {"embeddings.aliases", "\"\"", "optional entity<TAB>alias file"},
      {"embeddings.seed", "14", "seed for rows missing from the word vectors"},
      {"model.d_w", "300", "word embedding width"},
      {"model.d_k", "100", "knowledge embedding width"},
      {"model.hidden", "300", "LSTM hidden size per direction"},
      {"model.gcn_layers", "2", "stacked GCN layers in the syntax branch"},
      {"model.dropout", "0.5", "dropout on word embeddings"},
      {"model.branches", "\"csk\"", "active branches: letters of c (context), s (syntax), k (knowledge)"},
      {"model.fusion", "\"hierarchical\"", "hierarchical, concat, sum, attention or voting"},
      {"model.symmetrize", "true", "undirected dependency adjacency"},
      {"model.position", "true", "position weighting of the sentence embeddings"},
      {"train.lr", "0.001", "Adam learning rate"},
      {"train.batch_size", "0", "0 = 64 for restaurant14, 32 otherwise"},
      {"train.epochs", "50", "training epochs"},
      {"train.seed", "14", "seed for initialization, shuffling, dropout and noise"},
      {"train.beta1", "0.9", "Adam beta1"},
      {"train.beta2", "0.999", "Adam beta2"},
      {"train.eps", "1e-08", "Adam epsilon"},
      {"train.eval_every", "1", "evaluate every N epochs"},
      {"train.noise_ratio", "0.0", "fraction of knowledge rows replaced by noise"},
      {"train.clip_norm", "5.0", "global gradient norm clip (0 = off)"},
      {"train.selection", "\"best_test\"", "best_test or held_out"},
      {"train.holdout_fraction", "0.1", "dev fraction for held_out selection"},
      {"train.record_wall_time", "false", "store per-epoch wall time in the run record"},
      {"kge.triples", "\"\"", "head<TAB>relation<TAB>tail file"},
      {"kge.method", "\"transe\"", "transe, distmult, complex or analogy"},
      {"kge.dim", "100", "embedding width"},
      {"kge.complex_dim", "-1", "ANALOGY complex block width (-1 = dim/2)"},
      {"kge.epochs", "100", "training epochs"},
      {"kge.lr", "0.01", "learning rate"},
      {"kge.margin", "1.0", "ranking margin"},
      {"kge.neg_ratio", "1", "negative samples per positive"},
      {"kge.seed", "14", "seed"},
      {"kge.output", "\"entities.txt\"", "embedding file name inside <output_dir>/kge"},
      {"experiment.kind", "\"branches\"", "ablate: branches, fusion or kge"},
      {"experiment.seeds", "[14,15,16]", "seeds of every experiment cell"},
      {"experiment.ratios", "[0.0,0.01,0.02,0.05,0.1,0.2]", "noise ratios of the sweep"},
      {"experiment.kge_tables", "{}", "label -> entity table, for kind=kge"},
      {"experiment.headline", "true", "also run the full model with hierarchical fusion"},
      {"experiment.checkpoint", "\"\"", "checkpoint for eval/cases (empty = <output_dir>/train/best.ckpt)"},
      {"experiment.cases", "[]", "instance ids to export (empty = first max_cases)"},
      {"experiment.max_cases", "20", "number of exported cases when none are listed"},
      {"output_dir", "\"runs\"", "output directory, relative to $KGAN_OUTPUT_ROOT when set"},
  };
  return k;
}

const std::vector<std::string> kPathKeys = {
    "dataset.train",     "dataset.test",       "dataset.train_parses", "dataset.test_parses",
    "embeddings.words",  "embeddings.knowledge", "embeddings.aliases", "kge.triples",
    "experiment.checkpoint"};

ojson::json_pointer pointer(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  for (std::string part; std::getline(ss, part, '.');) p += "/" + part;
  return ojson::json_pointer(p);
}

ojson defaults() {
  ojson d = ojson::object();
  for (const auto& k : keys()) d[pointer(k.key)] = ojson::parse(k.default_value);
  return d;
}

bool compatible(const ojson& want, const ojson& got) {
  if (want.is_number_float()) return got.is_number();
  if (want.is_number_integer()) return got.is_number_integer();
  if (want.is_array()) {
    if (!got.is_array()) return false;
    if (want.empty()) return std::all_of(got.begin(), got.end(), [](const ojson& x) { return x.is_string(); });
    for (const auto& x : got)
      if (!compatible(want.front(), x)) return false;
    return true;
  }
  return want.type() == got.type();
}

// Copies `src` onto `dst` key by key; `dst` holds the defaults and so
// defines the allowed keys.
void merge(ojson& dst, const ojson& src, const std::string& prefix) {
  if (!src.is_object()) throw ConfigError("config: '" + prefix + "' must be an object");
  for (const auto& [key, value] : src.items()) {
    const auto name = prefix.empty() ? key : prefix + "." + key;
    if (!dst.contains(key)) throw ConfigError("config: unknown key '" + name + "'");
    auto& slot = dst[key];
    if (name == "experiment.kge_tables") {
      if (!value.is_object()) throw ConfigError("config: '" + name + "' must map labels to paths");
      for (const auto& [label, path] : value.items()) {
        if (!path.is_string()) throw ConfigError("config: '" + name + "." + label + "' must be a path");
        slot[label] = path;
      }
    } else if (slot.is_object()) {
      merge(slot, value, name);
    } else {
      if (!compatible(slot, value))
        throw ConfigError("config: '" + name + "' expects " + std::string(slot.type_name()) +
                          " like " + slot.dump() + ", got " + value.dump());
      slot = value;
    }
  }
}

void resolve_paths(ojson& j, const ojson& touched, const fs::path& base) {
  auto fix = [&](ojson& v) {
    const auto s = v.get<std::string>();
    if (!s.empty() && fs::path(s).is_relative()) v = (base / s).lexically_normal().string();
  };
  for (const auto& key : kPathKeys) {
    const auto p = pointer(key);
    if (touched.contains(p)) fix(j[p]);
  }
  const auto tables = pointer("experiment.kge_tables");
  if (touched.contains(tables))
    for (auto& [label, path] : j[tables].items())
      if (touched.at(tables).contains(label)) fix(path);
}

DatasetFormat format_from_name(const std::string& s) {
  if (s == "semeval2014") return DatasetFormat::kSemEval2014;
  if (s == "semeval2015" || s == "semeval2016") return DatasetFormat::kSemEval2015;
  if (s == "twitter") return DatasetFormat::kTwitter;
  if (s == "tsv") return DatasetFormat::kTsv;
  throw ConfigError("dataset.format must be semeval2014, semeval2015, twitter or tsv, got '" + s + "'");
}

ExperimentKind kind_from_name(const std::string& s) {
  if (s == "branches") return ExperimentKind::kBranches;
  if (s == "fusion") return ExperimentKind::kFusion;
  if (s == "kge") return ExperimentKind::kKge;
  throw ConfigError("experiment.kind must be branches, fusion or kge, got '" + s + "'");
}

template <typename T>
T get(const ojson& j, const char* key) {
  return j.at(pointer(key)).get<T>();
}

RunConfig build(const ojson& j) {
  RunConfig c;
  auto& d = c.dataset;
  d.name = get<std::string>(j, "dataset.name");
  (void)d.benchmark();
  d.format = format_from_name(get<std::string>(j, "dataset.format"));
  d.train = get<std::string>(j, "dataset.train");
  d.test = get<std::string>(j, "dataset.test");
  d.train_parses = get<std::string>(j, "dataset.train_parses");
  d.test_parses = get<std::string>(j, "dataset.test_parses");
  d.check_stats = get<bool>(j, "dataset.check_stats");
  const auto subset = get<long>(j, "dataset.subset");
  if (subset < 0) throw ConfigError("dataset.subset must be non-negative");
  d.subset = static_cast<std::size_t>(subset);

  auto& e = c.embeddings;
  e.words = get<std::string>(j, "embeddings.words");
  e.knowledge = get<std::string>(j, "embeddings.knowledge");
  e.aliases = get<std::string>(j, "embeddings.aliases");
  e.seed = get<std::uint64_t>(j, "embeddings.seed");

  auto& m = c.model;
  m.d_w = get<int>(j, "model.d_w");
  m.d_k = get<int>(j, "model.d_k");
  m.hidden = get<int>(j, "model.hidden");
  m.gcn_layers = get<int>(j, "model.gcn_layers");
  m.dropout = get<double>(j, "model.dropout");
  m.branches = network::BranchSet::from_code(get<std::string>(j, "model.branches"));
  m.fusion = network::fusion_from_name(get<std::string>(j, "model.fusion"));
  m.symmetrize = get<bool>(j, "model.symmetrize");
  m.position = get<bool>(j, "model.position");

  auto& t = c.train;
  t.lr = get<double>(j, "train.lr");
  t.batch_size = get<int>(j, "train.batch_size");
  t.epochs = get<int>(j, "train.epochs");
  t.seed = get<std::uint64_t>(j, "train.seed");
  t.beta1 = get<double>(j, "train.beta1");
  t.beta2 = get<double>(j, "train.beta2");
  t.eps = get<double>(j, "train.eps");
  t.eval_every = get<int>(j, "train.eval_every");
  t.noise_ratio = get<double>(j, "train.noise_ratio");
  t.clip_norm = get<double>(j, "train.clip_norm");
  const auto sel = get<std::string>(j, "train.selection");
  if (sel == "best_test") t.selection = training::Selection::kBestTest;
  else if (sel == "held_out") t.selection = training::Selection::kHeldOut;
  else throw ConfigError("train.selection must be best_test or held_out, got '" + sel + "'");
  t.holdout_fraction = get<double>(j, "train.holdout_fraction");
  t.record_wall_time = get<bool>(j, "train.record_wall_time");
  m.seed = t.seed;

  auto& k = c.kge;
  k.triples = get<std::string>(j, "kge.triples");
  k.options.method = kge::method_from_name(get<std::string>(j, "kge.method"));
  k.options.dim = get<int>(j, "kge.dim");
  k.options.complex_dim = get<int>(j, "kge.complex_dim");
  k.options.epochs = get<int>(j, "kge.epochs");
  k.options.lr = get<double>(j, "kge.lr");
  k.options.margin = get<double>(j, "kge.margin");
  k.options.neg_ratio = get<int>(j, "kge.neg_ratio");
  k.options.seed = get<std::uint64_t>(j, "kge.seed");
  k.output = get<std::string>(j, "kge.output");
  if (k.options.epochs < 1 || k.options.neg_ratio < 1 || !(k.options.lr > 0.0))
    throw ConfigError("kge: epochs and neg_ratio must be >= 1 and lr positive");
  kge::resolve_complex_dim(k.options.method, k.options.dim, k.options.complex_dim);
  if (k.output.empty() || fs::path(k.output).has_parent_path())
    throw ConfigError("kge.output must be a plain file name");

  auto& x = c.experiment;
  x.kind = kind_from_name(get<std::string>(j, "experiment.kind"));
  x.seeds = get<std::vector<std::uint64_t>>(j, "experiment.seeds");
  x.ratios = get<std::vector<double>>(j, "experiment.ratios");
  for (const auto& [label, path] : j.at(pointer("experiment.kge_tables")).items())
    x.kge_tables[label] = path.get<std::string>();
  x.headline = get<bool>(j, "experiment.headline");
  x.checkpoint = get<std::string>(j, "experiment.checkpoint");
  x.cases = get<std::vector<std::string>>(j, "experiment.cases");
  const auto max_cases = get<long>(j, "experiment.max_cases");
  if (max_cases < 1) throw ConfigError("experiment.max_cases must be at least 1");
  x.max_cases = static_cast<std::size_t>(max_cases);
  if (x.seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
  for (double r : x.ratios)
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("experiment.ratios must lie in [0, 1]");

  m.validate();
  c.train_config().validate();
  if (t.batch_size < 0) throw ConfigError("train.batch_size must be non-negative");

  fs::path out = get<std::string>(j, "output_dir");
  if (out.empty()) throw ConfigError("output_dir must not be empty");
  if (out.is_relative()) {
    const char* root = std::getenv("KGAN_OUTPUT_ROOT");
    out = (root && *root ? fs::path(root) : fs::current_path()) / out;
  }
  c.output_dir = out.lexically_normal();
  return c;
}

}  // namespace

std::optional<corpus::DatasetName> DatasetSection::benchmark() const {
  if (name == "custom") return std::nullopt;
  return corpus::dataset_from_name(name);
}

training::TrainConfig RunConfig::train_config() const {
  auto t = train;
  if (t.batch_size == 0) {
    const auto b = dataset.benchmark();
    t.batch_size = b ? training::default_batch_size(*b) : 32;
  }
  return t;
}

const std::vector<KeyInfo>& key_reference() { return keys(); }

std::string key_reference_text() {
  std::string out = "Config keys (file < --set overrides):\n";
  for (const auto& k : keys()) {
    std::string line = "  " + k.key + " = " + k.default_value;
    if (line.size() < 44) line.resize(44, ' ');
    out += line + "  " + k.description + "\n";
  }
  return out;
}

RunConfig parse(const std::string& text, const fs::path& base,
                const std::vector<std::string>& overrides) {
  ojson j = defaults();
  if (!text.empty()) {
    ojson file;
    try {
      file = ojson::parse(text, nullptr, true, true);
    } catch (const ojson::parse_error& e) {
      throw ConfigError(std::string("config file: ") + e.what());
    }
    merge(j, file, "");
    resolve_paths(j, file, base);
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + o + "' is not key=value");
    const auto key = o.substr(0, eq);
    const auto raw = o.substr(eq + 1);
    ojson value;
    try {
      value = ojson::parse(raw);
    } catch (const ojson::parse_error&) {
      value = raw;
    }
    const bool table_entry = key.rfind("experiment.kge_tables.", 0) == 0;
    if (!table_entry && !j.contains(pointer(key))) throw ConfigError("config: unknown key '" + key + "'");
    // Strings stay strings even when they look like numbers.
    if ((table_entry || j[pointer(key)].is_string()) && !value.is_string()) value = raw;
    ojson patch;
    patch[pointer(key)] = value;
    merge(j, patch, "");
    resolve_paths(j, patch, fs::current_path());
  }
  RunConfig c;
  try {
    c = build(j);
  } catch (const ojson::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  j["output_dir"] = c.output_dir.string();
  c.resolved_json = j.dump(2) + "\n";
  return c;
}

RunConfig load(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  if (!file) return parse("", fs::current_path(), overrides);
  if (!fs::exists(*file)) throw ConfigError("config file not found: " + file->string());
  const auto abs = fs::absolute(*file);
  return parse(io::read_file(abs), abs.parent_path(), overrides);
}

}  // namespace kgan::config
