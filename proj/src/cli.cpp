#include "kgan/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>

#include "kgan/config.hpp"
#include "kgan/embeddings.hpp"
#include "kgan/error.hpp"
#include "kgan/evaluation.hpp"
#include "kgan/io.hpp"

namespace kgan::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr std::string_view kManifestVersion = "1";

// ---------------------------------------------------------------------------
// Inputs

std::string hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::uint64_t h = io::fnv1a("");
  std::string chunk(1 << 20, '\0');
  while (in) {
    in.read(chunk.data(), static_cast<std::streamsize>(chunk.size()));
    const auto n = static_cast<std::size_t>(in.gcount());
    if (n == 0) break;
    h = io::fnv1a(io::hex64(h) + io::hex64(io::fnv1a(std::string_view(chunk.data(), n))));
  }
  return io::hex64(h);
}

void require_file(const fs::path& path, const std::string& key) {
  if (path.empty()) throw ConfigError(key + " is not set");
  if (!fs::is_regular_file(path)) throw DataError(key + ": file not found: " + path.string());
}

std::vector<corpus::Instance> load_split(const config::DatasetSection& d, const fs::path& path,
                                         const std::string& key) {
  require_file(path, key);
  const auto text = io::read_file(path);
  try {
    switch (d.format) {
      case config::DatasetFormat::kSemEval2014:
        return corpus::parse_semeval(text, corpus::SemEvalSchema::kV2014);
      case config::DatasetFormat::kSemEval2015:
        return corpus::parse_semeval(text, corpus::SemEvalSchema::kV2015_16);
      case config::DatasetFormat::kTwitter:
        return corpus::parse_twitter(text);
      case config::DatasetFormat::kTsv:
        return corpus::parse_tsv(text);
    }
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return {};
}

// Instances of one sentence share its parse: ids "<sentence>#<k>" fall back
// to the sentence id.
std::vector<depparse::DependencyParse> align_parses(
    const std::map<std::string, depparse::DependencyParse>& parses,
    const std::vector<corpus::Instance>& instances, const fs::path& source) {
  std::vector<depparse::DependencyParse> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) {
    auto it = parses.find(inst.id);
    if (it == parses.end()) {
      const auto hash = inst.id.rfind('#');
      if (hash != std::string::npos) it = parses.find(inst.id.substr(0, hash));
    }
    if (it == parses.end())
      throw AlignmentError(source.string() + ": no parse for sentence '" + inst.id + "'");
    depparse::check_alignment(it->second, inst.tokens.size(), inst.id);
    out.push_back(it->second);
  }
  return out;
}

std::vector<depparse::DependencyParse> load_parses(const fs::path& path, const std::string& key,
                                                   const std::vector<corpus::Instance>& instances,
                                                   const fs::path& tsv) {
  if (path.empty() || !fs::is_regular_file(path))
    throw DataError(key + ": parse file not found: " + (path.empty() ? "(unset)" : path.string()) +
                    ". Expected CoNLL-U with one '# sent_id' block per sentence; "
                    "tools/parse_adapter.py " + tsv.string() + " " +
                    (path.empty() ? "<out.conllu>" : path.string()) + " produces it");
  std::map<std::string, depparse::DependencyParse> parses;
  try {
    parses = depparse::load_conllu(io::read_file(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return align_parses(parses, instances, path);
}

kge::KnowledgeTable load_table(const fs::path& path, const fs::path& aliases) {
  auto table = kge::load_pretrained(path);
  if (!aliases.empty()) {
    require_file(aliases, "embeddings.aliases");
    kge::load_aliases(table, io::read_file(aliases));
  }
  return table;
}

std::string conllu_of(const std::vector<corpus::Instance>& instances,
                      const std::vector<depparse::DependencyParse>& parses) {
  std::string out;
  for (std::size_t i = 0; i < instances.size(); ++i) out += depparse::to_conllu(instances[i].id, parses[i]);
  return out;
}

std::string adjacency_of(const std::vector<corpus::Instance>& instances,
                         const std::vector<depparse::DependencyParse>& parses, bool symmetrize) {
  std::vector<std::pair<std::string, depparse::AdjacencyMatrix>> items;
  for (std::size_t i = 0; i < instances.size(); ++i)
    items.emplace_back(instances[i].id, depparse::build_adjacency(parses[i], symmetrize));
  return depparse::serialize_adjacency(items);
}

std::string stats_report(const config::DatasetSection& d, const std::vector<corpus::Instance>& train,
                         const std::vector<corpus::Instance>& test, bool* matches) {
  const auto bench = d.benchmark();
  const auto label = bench ? std::string(corpus::dataset_name(*bench)) : d.name;
  std::vector<std::pair<std::string, corpus::ClassCounts>> rows = {
      {label + "/train", corpus::dataset_stats(train)}, {label + "/test", corpus::dataset_stats(test)}};
  std::vector<std::pair<std::string, corpus::ClassCounts>> ref;
  *matches = true;
  if (bench) {
    ref = {{"", corpus::reference_counts(*bench, corpus::Split::kTrain)},
           {"", corpus::reference_counts(*bench, corpus::Split::kTest)}};
    *matches = rows[0].second == ref[0].second && rows[1].second == ref[1].second;
  }
  return evaluation::stats_table(rows, ref);
}

// ---------------------------------------------------------------------------
// Prepared cache

struct Prepared {
  evaluation::ExperimentInputs inputs;
  std::string hash;
  bool cache_hit = false;
};

fs::path prepared_dir(const config::RunConfig& c) { return c.output_dir / "prepared"; }

const std::vector<std::string> kPreparedFiles = {"train.tsv",    "test.tsv", "train.conllu",
                                                 "test.conllu", "vocab.txt", "words.bin"};

std::string input_hash(const config::RunConfig& c) {
  const auto& d = c.dataset;
  const auto& e = c.embeddings;
  json j = {{"version", kManifestVersion},
            {"name", d.name},
            {"format", int(d.format)},
            {"check_stats", d.check_stats},
            {"subset", d.subset},
            {"seed", e.seed},
            {"d_w", c.model.d_w},
            {"symmetrize", c.model.symmetrize}};
  // Missing files are reported by the loaders, with context.
  auto add = [&](const char* key, const fs::path& p) {
    j[key] = p.empty() ? "" : fs::is_regular_file(p) ? hash_file(p) : "missing";
  };
  add("train", d.train);
  add("test", d.test);
  add("train_parses", d.train_parses);
  add("test_parses", d.test_parses);
  add("words", e.words);
  add("knowledge", e.knowledge);
  add("aliases", e.aliases);
  return io::hex64(io::fnv1a(j.dump()));
}

evaluation::ExperimentInputs load_prepared(const fs::path& dir) {
  evaluation::ExperimentInputs in;
  in.vocab = corpus::Vocabulary::deserialize(io::read_file(dir / "vocab.txt"));
  in.train = corpus::parse_tsv(io::read_file(dir / "train.tsv"));
  in.test = corpus::parse_tsv(io::read_file(dir / "test.tsv"));
  in.train_parses = align_parses(depparse::load_conllu(io::read_file(dir / "train.conllu")), in.train,
                                 dir / "train.conllu");
  in.test_parses = align_parses(depparse::load_conllu(io::read_file(dir / "test.conllu")), in.test,
                                dir / "test.conllu");
  std::ifstream words(dir / "words.bin", std::ios::binary);
  if (!words) throw DataError("cannot read " + (dir / "words.bin").string());
  in.word_matrix = io::read_matrix(words);
  if (fs::exists(dir / "knowledge.txt")) {
    in.knowledge = kge::parse_embeddings(io::read_file(dir / "knowledge.txt"));
    if (fs::exists(dir / "aliases.txt")) kge::load_aliases(in.knowledge, io::read_file(dir / "aliases.txt"));
    const auto meta = json::parse(io::read_file(dir / "manifest.json"));
    in.knowledge_label = meta.at("knowledge_label").get<std::string>();
  }
  return in;
}

Prepared prepare(const config::RunConfig& c, std::ostream& out, bool verbose) {
  const auto dir = prepared_dir(c);
  const auto hash = input_hash(c);
  const auto manifest = dir / "manifest.json";
  if (fs::exists(manifest)) {
    bool hit = false;
    try {
      hit = json::parse(io::read_file(manifest)).at("input_hash").get<std::string>() == hash;
    } catch (const json::exception&) {
    }
    for (const auto& f : kPreparedFiles) hit = hit && fs::exists(dir / f);
    if (hit) {
      if (verbose) out << "prepare: cache hit " << hash << " in " << dir.string() << "\n";
      return {load_prepared(dir), hash, true};
    }
  }

  const auto& d = c.dataset;
  auto train = load_split(d, d.train, "dataset.train");
  auto test = load_split(d, d.test, "dataset.test");
  bool stats_ok = true;
  const auto stats = stats_report(d, train, test, &stats_ok);
  fs::create_directories(dir);
  io::write_file(dir / "stats.txt", stats);
  if (verbose) out << stats;
  if (!stats_ok && d.check_stats)
    throw AcceptanceError("class counts differ from the published statistics (set dataset.check_stats=false to continue)");
  if (d.subset > 0 && d.subset < train.size()) train.resize(d.subset);

  io::write_file(dir / "train.tsv", corpus::to_tsv(train));
  io::write_file(dir / "test.tsv", corpus::to_tsv(test));
  const auto train_parses = load_parses(d.train_parses, "dataset.train_parses", train, dir / "train.tsv");
  const auto test_parses = load_parses(d.test_parses, "dataset.test_parses", test, dir / "test.tsv");
  io::write_file(dir / "train.conllu", conllu_of(train, train_parses));
  io::write_file(dir / "test.conllu", conllu_of(test, test_parses));
  io::write_file(dir / "train.adj", adjacency_of(train, train_parses, c.model.symmetrize));
  io::write_file(dir / "test.adj", adjacency_of(test, test_parses, c.model.symmetrize));

  std::vector<corpus::Dataset> ds(2);
  ds[0].instances = train;
  ds[1].instances = test;
  const auto vocab = corpus::build_vocab(ds);
  io::write_file(dir / "vocab.txt", vocab.serialize());

  embeddings::WordEmbeddingMatrix words;
  if (c.embeddings.words.empty()) {
    words = embeddings::random_word_matrix(vocab, c.model.d_w, c.embeddings.seed);
  } else {
    require_file(c.embeddings.words, "embeddings.words");
    words = embeddings::load_static_vectors(c.embeddings.words, vocab, c.embeddings.seed, c.model.d_w);
  }
  {
    std::ostringstream blob;
    io::write_matrix(blob, words.weights);
    io::write_file(dir / "words.bin", blob.str());
  }

  json meta = {{"input_hash", hash},
               {"train_instances", train.size()},
               {"test_instances", test.size()},
               {"vocabulary", vocab.size()},
               {"word_vectors_found", words.found},
               {"knowledge_label", ""}};
  fs::remove(dir / "knowledge.txt");
  fs::remove(dir / "aliases.txt");
  if (!c.embeddings.knowledge.empty()) {
    require_file(c.embeddings.knowledge, "embeddings.knowledge");
    const auto table = load_table(c.embeddings.knowledge, c.embeddings.aliases);
    io::write_file(dir / "knowledge.txt", kge::export_embeddings(table));
    if (!c.embeddings.aliases.empty()) io::write_file(dir / "aliases.txt", io::read_file(c.embeddings.aliases));
    std::vector<bool> oov;
    embeddings::knowledge_matrix(vocab, table, &oov);
    meta["knowledge_label"] = c.embeddings.knowledge.stem().string();
    meta["knowledge_rows"] = table.size();
    meta["knowledge_dim"] = table.dim();
    meta["knowledge_matched_tokens"] = std::count(oov.begin(), oov.end(), false);
  }
  io::write_file(manifest, meta.dump(2) + "\n");
  if (verbose)
    out << "prepare: " << train.size() << " train / " << test.size() << " test instances, vocabulary "
        << vocab.size() << ", " << words.found << " pretrained word vectors -> " << dir.string() << "\n";
  return {load_prepared(dir), hash, false};
}

// ---------------------------------------------------------------------------
// Helpers for the run commands

fs::path run_dir(const config::RunConfig& c, const std::string& name) {
  const auto dir = c.output_dir / name;
  fs::create_directories(dir);
  io::write_file(dir / "config.json", c.resolved_json);
  return dir;
}

void require_knowledge(const network::KganConfig& m, const evaluation::ExperimentInputs& in) {
  if (m.branches.knowledge && in.knowledge.size() == 0)
    throw ConfigError("the knowledge branch is active but embeddings.knowledge is not set");
}

std::string format_report(const evaluation::MetricReport& r) {
  char line[200];
  std::string out;
  std::snprintf(line, sizeof line, "accuracy %.4f  macro_f1 %.4f  (n=%ld)\n", r.accuracy, r.macro_f1, r.total());
  out += line;
  const char* names[3] = {"positive", "neutral", "negative"};
  std::snprintf(line, sizeof line, "%-10s %9s %9s %9s   confusion (pred pos/neu/neg)\n", "class", "precision",
                "recall", "f1");
  out += line;
  for (int c = 0; c < 3; ++c) {
    std::snprintf(line, sizeof line, "%-10s %9.4f %9.4f %9.4f   %ld %ld %ld\n", names[c], r.precision[c],
                  r.recall[c], r.f1[c], r.confusion[c][0], r.confusion[c][1], r.confusion[c][2]);
    out += line;
  }
  return out;
}

fs::path checkpoint_path(const config::RunConfig& c) {
  return c.experiment.checkpoint.empty() ? c.output_dir / "train" / "best.ckpt" : c.experiment.checkpoint;
}

network::LoadedCheckpoint open_checkpoint(const config::RunConfig& c) {
  const auto path = checkpoint_path(c);
  if (!fs::is_regular_file(path))
    throw DataError("checkpoint not found: " + path.string() + " (run 'kgan train' or set experiment.checkpoint)");
  return network::load_checkpoint(path);
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_prepare(const config::RunConfig& c, std::ostream& out) {
  io::write_file(prepared_dir(c).parent_path() / "prepared.config.json", c.resolved_json);
  prepare(c, out, true);
  return 0;
}

int cmd_stats(const config::RunConfig& c, std::ostream& out) {
  const auto& d = c.dataset;
  const auto train = load_split(d, d.train, "dataset.train");
  const auto test = load_split(d, d.test, "dataset.test");
  bool ok = true;
  out << stats_report(d, train, test, &ok);
  return ok || !d.check_stats ? 0 : static_cast<int>(ExitCode::kAcceptance);
}

int cmd_kge_train(const config::RunConfig& c, std::ostream& out, std::ostream& err) {
  require_file(c.kge.triples, "kge.triples");
  kge::KnowledgeGraph graph;
  try {
    graph = kge::parse_triples(io::read_file(c.kge.triples));
  } catch (const DataError& e) {
    throw DataError(c.kge.triples.string() + ": " + e.what());
  }
  const auto dir = run_dir(c, "kge");
  std::vector<double> losses;
  const auto model = kge::train_kge(graph, c.kge.options, &losses);
  const auto report = kge::link_prediction_eval(model, graph);
  json meta = {{"method", std::string(kge::method_name(model.method))},
               {"dim", model.dim},
               {"complex_dim", model.complex_dim},
               {"epochs", c.kge.options.epochs},
               {"seed", c.kge.options.seed},
               {"entities", graph.entities().size()},
               {"relations", graph.relations().size()},
               {"triples", graph.triples().size()}};
  kge::save_embeddings(dir / c.kge.output, kge::entity_table(model, graph), meta.dump());
  json r = {{"mrr", report.mrr},
            {"hits_at_1", report.hits_at_1},
            {"hits_at_10", report.hits_at_10},
            {"queries", report.count},
            {"final_loss", losses.empty() ? 0.0 : losses.back()},
            {"loss_history", losses}};
  io::write_file(dir / "report.json", r.dump(2) + "\n");
  err << "kge-train: " << graph.entities().size() << " entities, " << graph.triples().size() << " triples\n";
  char line[160];
  std::snprintf(line, sizeof line, "%s dim %d: MRR %.4f  Hits@1 %.4f  Hits@10 %.4f\n",
                std::string(kge::method_name(model.method)).c_str(), model.dim, report.mrr,
                report.hits_at_1, report.hits_at_10);
  out << line << "embeddings: " << (dir / c.kge.output).string() << "\n";
  return 0;
}

int cmd_train(const config::RunConfig& c, std::ostream& out, std::ostream& err) {
  const auto prep = prepare(c, err, false);
  const auto& in = prep.inputs;
  require_knowledge(c.model, in);
  const auto tc = c.train_config();
  const auto dir = run_dir(c, "train");

  Matrix knowledge;
  if (c.model.branches.knowledge) {
    const auto noisy = training::apply_noise_attack(in.knowledge, tc.noise_ratio, tc.seed);
    noisy.require_dim(c.model.d_k);
    knowledge = embeddings::knowledge_matrix(in.vocab, noisy);
  }
  network::KganModel model(c.model, in.word_matrix, std::move(knowledge));
  training::TrainingData data{
      evaluation::build_inputs(in.vocab, in.train, in.train_parses, c.model.symmetrize, c.model.position),
      evaluation::build_inputs(in.vocab, in.test, in.test_parses, c.model.symmetrize, c.model.position)};
  auto result = training::train(std::move(model), tc, data, [&](const training::EpochRecord& e) {
    char line[200];
    std::snprintf(line, sizeof line, "epoch %d/%d  loss %.4f  train_acc %.4f", e.epoch, tc.epochs,
                  e.train_loss, e.train_accuracy);
    err << line;
    if (e.test) {
      std::snprintf(line, sizeof line, "  test_acc %.4f  test_f1 %.4f", e.test->accuracy, e.test->macro_f1);
      err << line;
    }
    err << "\n";
  });

  io::write_file(dir / "run.jsonl", result.record.to_jsonl());
  json meta = {{"best_epoch", result.record.best_epoch},
               {"test", json::parse(result.record.best.to_json())},
               {"prepared", prep.hash}};
  network::save_checkpoint(dir / "best.ckpt", result.model, in.vocab, meta.dump());
  io::write_file(dir / "report.json", result.record.best.to_json() + "\n");
  out << "best epoch " << result.record.best_epoch << "\n" << format_report(result.record.best);
  return 0;
}

int cmd_eval(const config::RunConfig& c, std::ostream& out) {
  const auto prep = prepare(c, std::cerr, false);
  const auto ckpt = open_checkpoint(c);
  const auto& mc = ckpt.model.config();
  const auto test = evaluation::build_inputs(ckpt.vocab, prep.inputs.test, prep.inputs.test_parses,
                                             mc.symmetrize, mc.position);
  const auto report = training::evaluate(ckpt.model, test);
  const auto dir = run_dir(c, "eval");
  io::write_file(dir / "report.json", report.to_json() + "\n");
  out << format_report(report);
  const auto meta = json::parse(ckpt.metadata_json);
  if (meta.contains("test")) {
    const auto stored = evaluation::MetricReport::from_json(meta["test"].dump());
    if (!(stored == report)) {
      out << "stored at save time:\n" << format_report(stored);
      throw AcceptanceError("metrics differ from the ones stored in the checkpoint");
    }
    out << "matches the metrics stored at save time\n";
  }
  return 0;
}

void write_matrix(const fs::path& dir, const evaluation::ExperimentMatrix& m, std::ostream& out) {
  io::write_file(dir / (m.name + ".json"), m.to_json() + "\n");
  out << m.table();
}

int cmd_ablate(const config::RunConfig& c, std::ostream& out) {
  const auto prep = prepare(c, std::cerr, false);
  const auto tc = c.train_config();
  const auto& x = c.experiment;
  switch (x.kind) {
    case config::ExperimentKind::kBranches: {
      const auto dir = run_dir(c, "ablate-branches");
      auto m = c.model;
      m.branches = network::BranchSet{};
      require_knowledge(m, prep.inputs);
      const auto r = evaluation::run_branch_ablation(prep.inputs, m, tc, x.seeds, x.headline);
      std::ostringstream table;
      write_matrix(dir, r.combinations, table);
      if (x.headline) write_matrix(dir, r.headline, table);
      io::write_file(dir / "table.txt", table.str());
      out << table.str();
      return 0;
    }
    case config::ExperimentKind::kFusion: {
      const auto dir = run_dir(c, "ablate-fusion");
      auto m = c.model;
      m.branches = network::BranchSet{};
      require_knowledge(m, prep.inputs);
      std::ostringstream table;
      write_matrix(dir, evaluation::run_fusion_ablation(prep.inputs, m, tc, x.seeds), table);
      io::write_file(dir / "table.txt", table.str());
      out << table.str();
      return 0;
    }
    case config::ExperimentKind::kKge: {
      if (x.kge_tables.empty()) throw ConfigError("experiment.kge_tables is empty");
      std::map<std::string, kge::KnowledgeTable> tables;
      for (const auto& [label, path] : x.kge_tables) {
        require_file(path, "experiment.kge_tables." + label);
        tables.emplace(label, load_table(path, c.embeddings.aliases));
      }
      const auto dir = run_dir(c, "ablate-kge");
      std::ostringstream table;
      write_matrix(dir, evaluation::run_kge_ablation(prep.inputs, tables, c.model, tc, x.seeds), table);
      io::write_file(dir / "table.txt", table.str());
      out << table.str();
      return 0;
    }
  }
  return 0;
}

int cmd_noise(const config::RunConfig& c, std::ostream& out) {
  const auto prep = prepare(c, std::cerr, false);
  require_knowledge(c.model, prep.inputs);
  const auto dir = run_dir(c, "noise");
  std::ostringstream table;
  write_matrix(dir,
               evaluation::run_noise_sweep(prep.inputs, c.model, c.train_config(), c.experiment.ratios,
                                           c.experiment.seeds),
               table);
  io::write_file(dir / "table.txt", table.str());
  out << table.str();
  return 0;
}

int cmd_cases(const config::RunConfig& c, std::ostream& out) {
  const auto prep = prepare(c, std::cerr, false);
  const auto ckpt = open_checkpoint(c);
  const auto& in = prep.inputs;
  std::vector<corpus::Instance> chosen;
  std::vector<depparse::DependencyParse> parses;
  if (c.experiment.cases.empty()) {
    for (std::size_t i = 0; i < in.test.size() && i < c.experiment.max_cases; ++i) {
      chosen.push_back(in.test[i]);
      parses.push_back(in.test_parses[i]);
    }
  } else {
    for (const auto& id : c.experiment.cases) {
      bool found = false;
      for (const auto* split : {&in.test, &in.train}) {
        const auto& ps = split == &in.test ? in.test_parses : in.train_parses;
        for (std::size_t i = 0; i < split->size() && !found; ++i)
          if ((*split)[i].id == id) {
            chosen.push_back((*split)[i]);
            parses.push_back(ps[i]);
            found = true;
          }
      }
      if (!found) throw DataError("experiment.cases: no instance with id '" + id + "'");
    }
  }
  const auto dir = run_dir(c, "cases");
  io::write_file(dir / "cases.json",
                 evaluation::export_attention_cases(ckpt.model, ckpt.vocab, chosen, parses) + "\n");
  out << "cases: " << chosen.size() << " instances -> " << (dir / "cases.json").string() << "\n";
  return 0;
}

int dispatch(const std::string& name, const config::RunConfig& c, std::ostream& out, std::ostream& err) {
  if (name == "prepare") return cmd_prepare(c, out);
  if (name == "stats") return cmd_stats(c, out);
  if (name == "kge-train") return cmd_kge_train(c, out, err);
  if (name == "train") return cmd_train(c, out, err);
  if (name == "eval") return cmd_eval(c, out);
  if (name == "ablate") return cmd_ablate(c, out);
  if (name == "noise") return cmd_noise(c, out);
  if (name == "cases") return cmd_cases(c, out);
  throw ConfigError("unknown subcommand " + name);
}

}  // namespace

evaluation::ExperimentInputs prepare_inputs(const config::RunConfig& config, std::ostream& log) {
  return prepare(config, log, true).inputs;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Aspect sentiment classifier with context, syntax and knowledge views", "kgan"};
  app.require_subcommand(1, 1);
  app.footer("\n" + config::key_reference_text() +
             "\nRelative paths in a config file resolve against the file's directory.\n"
             "Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure, 5 failed check.");

  std::string config_path;
  std::vector<std::string> overrides;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"prepare", "parse the dataset, check statistics and write the prepared cache"},
      {"stats", "print per-class statistics next to the published counts"},
      {"kge-train", "train knowledge graph embeddings and report link prediction"},
      {"train", "train one model and save the best checkpoint"},
      {"eval", "evaluate a checkpoint on the test split"},
      {"ablate", "run the branch, fusion or KGE ablation matrix"},
      {"noise", "run the knowledge noise sweep"},
      {"cases", "export per-branch attention weights for chosen instances"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "JSON config file");
    sub->add_option("--set", overrides, "override a config key, KEY=VALUE (repeatable)");
    sub->footer("\n" + config::key_reference_text());
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }

  try {
    const auto file = config_path.empty() ? std::nullopt : std::optional<fs::path>(config_path);
    const auto cfg = config::load(file, overrides);
    return dispatch(app.get_subcommands().front()->get_name(), cfg, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace kgan::cli
