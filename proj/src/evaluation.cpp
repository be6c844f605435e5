#include "kgan/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "kgan/embeddings.hpp"
#include "kgan/error.hpp"
#include "kgan/io.hpp"

namespace kgan::evaluation {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Metrics

long MetricReport::total() const {
  long n = 0;
  for (const auto& row : confusion)
    for (long v : row) n += v;
  return n;
}

std::string MetricReport::to_json() const {
  json j = {{"accuracy", accuracy},   {"macro_f1", macro_f1}, {"precision", precision},
            {"recall", recall},       {"f1", f1},             {"confusion", confusion}};
  return j.dump();
}

MetricReport MetricReport::from_json(const std::string& text) {
  MetricReport r;
  try {
    const auto j = json::parse(text);
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.precision = j.at("precision").get<std::array<double, kClasses>>();
    r.recall = j.at("recall").get<std::array<double, kClasses>>();
    r.f1 = j.at("f1").get<std::array<double, kClasses>>();
    r.confusion = j.at("confusion").get<std::array<std::array<long, kClasses>, kClasses>>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("metric report: ") + e.what());
  }
  return r;
}

MetricReport compute_metrics(std::span<const int> gold, std::span<const int> pred) {
  if (gold.size() != pred.size())
    throw DataError("compute_metrics: " + std::to_string(gold.size()) + " gold labels but " +
                    std::to_string(pred.size()) + " predictions");
  if (gold.empty()) throw DataError("compute_metrics: no instances");
  MetricReport r;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= kClasses || pred[i] < 0 || pred[i] >= kClasses)
      throw LabelError("compute_metrics: label outside 0..2 at position " + std::to_string(i));
    ++r.confusion[static_cast<std::size_t>(gold[i])][static_cast<std::size_t>(pred[i])];
  }
  long diag = 0;
  for (std::size_t c = 0; c < kClasses; ++c) {
    const long tp = r.confusion[c][c];
    long gold_c = 0, pred_c = 0;
    for (std::size_t k = 0; k < kClasses; ++k) {
      gold_c += r.confusion[c][k];
      pred_c += r.confusion[k][c];
    }
    diag += tp;
    r.precision[c] = pred_c ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
    r.recall[c] = gold_c ? static_cast<double>(tp) / static_cast<double>(gold_c) : 0.0;
    const double denom = r.precision[c] + r.recall[c];
    r.f1[c] = denom > 0.0 ? 2.0 * r.precision[c] * r.recall[c] / denom : 0.0;
  }
  r.accuracy = static_cast<double>(diag) / static_cast<double>(gold.size());
  r.macro_f1 = (r.f1[0] + r.f1[1] + r.f1[2]) / 3.0;
  return r;
}

// ---------------------------------------------------------------------------
// Experiment cells

std::vector<network::ModelInput> build_inputs(const corpus::Vocabulary& vocab,
                                              const std::vector<corpus::Instance>& instances,
                                              const std::vector<depparse::DependencyParse>& parses,
                                              bool symmetrize, bool position) {
  if (parses.size() != instances.size())
    throw AlignmentError("have " + std::to_string(parses.size()) + " parses for " +
                         std::to_string(instances.size()) + " instances");
  std::vector<network::ModelInput> out;
  out.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    depparse::check_alignment(parses[i], instances[i].tokens.size(), instances[i].id);
    out.push_back(network::make_input(instances[i], vocab,
                                      depparse::build_adjacency(parses[i], symmetrize), position));
  }
  return out;
}

namespace {

std::string table_hash(const kge::KnowledgeTable& t) {
  return io::hex64(io::fnv1a(kge::export_embeddings(t)));
}

std::string cell_config(const std::string& group, const network::KganConfig& model,
                        const training::TrainConfig& train, const std::string& knowledge_label,
                        const std::string& knowledge_hash) {
  json j = {{"group", group},
            {"model", json::parse(model.to_json())},
            {"train", json::parse(train.to_json())},
            {"knowledge", {{"label", knowledge_label}, {"hash", knowledge_hash}}}};
  return j.dump();
}

Cell run_with_table(const ExperimentInputs& inputs, const kge::KnowledgeTable& table,
                    const std::string& label, const std::string& group,
                    const network::KganConfig& model_cfg, const training::TrainConfig& train_cfg,
                    training::RunRecord* record) {
  Cell cell;
  cell.group = group;
  cell.seed = train_cfg.seed;
  cell.config_json = cell_config(group, model_cfg, train_cfg, label, table_hash(table));
  cell.config_hash = io::hex64(io::fnv1a(cell.config_json));

  const auto noisy = training::apply_noise_attack(table, train_cfg.noise_ratio, train_cfg.seed);
  Matrix knowledge;
  if (model_cfg.branches.knowledge) {
    noisy.require_dim(model_cfg.d_k);
    knowledge = embeddings::knowledge_matrix(inputs.vocab, noisy);
  }
  network::KganModel model(model_cfg, inputs.word_matrix, std::move(knowledge));
  training::TrainingData data{
      build_inputs(inputs.vocab, inputs.train, inputs.train_parses, model_cfg.symmetrize, model_cfg.position),
      build_inputs(inputs.vocab, inputs.test, inputs.test_parses, model_cfg.symmetrize, model_cfg.position)};
  auto result = training::train(std::move(model), train_cfg, data);
  cell.report = result.record.best;
  cell.best_epoch = result.record.best_epoch;
  if (record) *record = std::move(result.record);
  return cell;
}

std::string ratio_label(double r) { return "noise=" + io::format_double(r); }

}  // namespace

Cell run_cell(const ExperimentInputs& inputs, const std::string& group,
              const network::KganConfig& model, const training::TrainConfig& train,
              training::RunRecord* record) {
  return run_with_table(inputs, inputs.knowledge, inputs.knowledge_label, group, model, train, record);
}

Cell rerun_cell(const ExperimentInputs& inputs, const Cell& cell) {
  json j;
  try {
    j = json::parse(cell.config_json);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cell config: ") + e.what());
  }
  if (io::hex64(io::fnv1a(cell.config_json)) != cell.config_hash)
    throw ConfigError("cell config does not match its stored hash " + cell.config_hash);
  const auto want = j.at("knowledge").at("hash").get<std::string>();
  if (table_hash(inputs.knowledge) != want)
    throw ConfigError("cell " + cell.config_hash + " was run with knowledge table " + want +
                      ", the inputs carry " + table_hash(inputs.knowledge));
  return run_with_table(inputs, inputs.knowledge, j.at("knowledge").at("label").get<std::string>(),
                        j.at("group").get<std::string>(),
                        network::KganConfig::from_json(j.at("model").dump()),
                        training::TrainConfig::from_json(j.at("train").dump()), nullptr);
}

std::vector<network::BranchSet> branch_combinations() {
  std::vector<network::BranchSet> out;
  for (const char* code : {"c", "s", "k", "cs", "ck", "sk", "csk"})
    out.push_back(network::BranchSet::from_code(code));
  return out;
}

namespace {

void seed_configs(network::KganConfig& model, training::TrainConfig& train, std::uint64_t seed) {
  model.seed = seed;
  train.seed = seed;
}

}  // namespace

BranchAblation run_branch_ablation(const ExperimentInputs& inputs, network::KganConfig model,
                                   training::TrainConfig train,
                                   const std::vector<std::uint64_t>& seeds, bool with_headline) {
  BranchAblation out;
  out.combinations.name = "branches";
  out.headline.name = "headline";
  for (const auto& branches : branch_combinations()) {
    for (auto seed : seeds) {
      seed_configs(model, train, seed);
      model.branches = branches;
      model.fusion = network::Fusion::kConcat;
      out.combinations.cells.push_back(run_cell(inputs, branches.code(), model, train));
    }
  }
  if (with_headline) {
    for (auto seed : seeds) {
      seed_configs(model, train, seed);
      model.branches = network::BranchSet{};
      model.fusion = network::Fusion::kHierarchical;
      out.headline.cells.push_back(run_cell(inputs, "csk+hierarchical", model, train));
    }
  }
  return out;
}

ExperimentMatrix run_fusion_ablation(const ExperimentInputs& inputs, network::KganConfig model,
                                     training::TrainConfig train,
                                     const std::vector<std::uint64_t>& seeds) {
  ExperimentMatrix out;
  out.name = "fusion";
  model.branches = network::BranchSet{};
  for (auto fusion : {network::Fusion::kConcat, network::Fusion::kSum, network::Fusion::kAttention,
                      network::Fusion::kVoting, network::Fusion::kHierarchical}) {
    for (auto seed : seeds) {
      seed_configs(model, train, seed);
      model.fusion = fusion;
      out.cells.push_back(run_cell(inputs, std::string(network::fusion_name(fusion)), model, train));
    }
  }
  return out;
}

ExperimentMatrix run_noise_sweep(const ExperimentInputs& inputs, network::KganConfig model,
                                 training::TrainConfig train, const std::vector<double>& ratios,
                                 const std::vector<std::uint64_t>& seeds) {
  ExperimentMatrix out;
  out.name = "noise";
  for (double r : ratios) {
    for (auto seed : seeds) {
      seed_configs(model, train, seed);
      train.noise_ratio = r;
      out.cells.push_back(run_cell(inputs, ratio_label(r), model, train));
    }
  }
  return out;
}

ExperimentMatrix run_kge_ablation(const ExperimentInputs& inputs,
                                  const std::map<std::string, kge::KnowledgeTable>& tables,
                                  network::KganConfig model, training::TrainConfig train,
                                  const std::vector<std::uint64_t>& seeds) {
  ExperimentMatrix out;
  out.name = "kge";
  for (const auto& [label, table] : tables) {
    model.d_k = table.dim();
    for (auto seed : seeds) {
      seed_configs(model, train, seed);
      out.cells.push_back(run_with_table(inputs, table, label, label, model, train, nullptr));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

std::vector<GroupSummary> ExperimentMatrix::aggregate() const {
  std::vector<GroupSummary> out;
  std::vector<std::vector<const Cell*>> members;
  for (const auto& c : cells) {
    std::size_t g = 0;
    while (g < out.size() && out[g].group != c.group) ++g;
    if (g == out.size()) {
      out.push_back(GroupSummary{c.group});
      members.emplace_back();
    }
    members[g].push_back(&c);
  }
  for (std::size_t g = 0; g < out.size(); ++g) {
    const auto n = static_cast<double>(members[g].size());
    double sa = 0, sf = 0;
    for (const auto* c : members[g]) {
      sa += c->report.accuracy;
      sf += c->report.macro_f1;
    }
    out[g].runs = members[g].size();
    out[g].accuracy_mean = sa / n;
    out[g].macro_f1_mean = sf / n;
    double va = 0, vf = 0;
    for (const auto* c : members[g]) {
      va += std::pow(c->report.accuracy - out[g].accuracy_mean, 2);
      vf += std::pow(c->report.macro_f1 - out[g].macro_f1_mean, 2);
    }
    out[g].accuracy_std = std::sqrt(va / n);
    out[g].macro_f1_std = std::sqrt(vf / n);
  }
  return out;
}

std::optional<GroupSummary> ExperimentMatrix::summary(const std::string& group) const {
  for (auto& s : aggregate())
    if (s.group == group) return s;
  return std::nullopt;
}

std::string ExperimentMatrix::to_json() const {
  json j;
  j["name"] = name;
  auto& arr = j["cells"] = json::array();
  for (const auto& c : cells)
    arr.push_back({{"group", c.group},
                   {"seed", c.seed},
                   {"config_hash", c.config_hash},
                   {"config", json::parse(c.config_json)},
                   {"best_epoch", c.best_epoch},
                   {"report", json::parse(c.report.to_json())}});
  auto& summ = j["summary"] = json::array();
  for (const auto& s : aggregate())
    summ.push_back({{"group", s.group},
                    {"runs", s.runs},
                    {"accuracy_mean", s.accuracy_mean},
                    {"accuracy_std", s.accuracy_std},
                    {"macro_f1_mean", s.macro_f1_mean},
                    {"macro_f1_std", s.macro_f1_std}});
  return j.dump(2);
}

std::string ExperimentMatrix::table() const {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %5s %18s %18s\n", name.c_str(), "runs", "Acc (%)", "F1 (%)");
  out += line;
  for (const auto& s : aggregate()) {
    std::snprintf(line, sizeof line, "%-20s %5zu %10.2f +- %5.2f %10.2f +- %5.2f\n", s.group.c_str(),
                  s.runs, 100 * s.accuracy_mean, 100 * s.accuracy_std, 100 * s.macro_f1_mean,
                  100 * s.macro_f1_std);
    out += line;
  }
  return out;
}

std::string export_attention_cases(const network::KganModel& model,
                                   const corpus::Vocabulary& vocab,
                                   const std::vector<corpus::Instance>& instances,
                                   const std::vector<depparse::DependencyParse>& parses) {
  const auto inputs =
      build_inputs(vocab, instances, parses, model.config().symmetrize, model.config().position);
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json arr = json::array();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto pred = model.predict(inputs[i]);
    json weights = json::object();
    if (pred.attention.context.size()) weights["context"] = vec(pred.attention.context);
    if (pred.attention.syntax.size()) weights["syntax"] = vec(pred.attention.syntax);
    if (pred.attention.knowledge.size()) weights["knowledge"] = vec(pred.attention.knowledge);
    const auto& inst = instances[i];
    arr.push_back({{"id", inst.id},
                   {"tokens", inst.tokens},
                   {"aspect_start", inst.aspect_start},
                   {"aspect_len", inst.aspect_len},
                   {"gold", std::string(corpus::polarity_name(inst.polarity))},
                   {"prediction", std::string(corpus::polarity_name(corpus::polarity_from_index(pred.label)))},
                   {"probabilities", std::vector<double>(pred.probabilities.data(),
                                                         pred.probabilities.data() + pred.probabilities.size())},
                   {"weights", weights}});
  }
  return arr.dump(2);
}

std::string stats_table(const std::vector<std::pair<std::string, corpus::ClassCounts>>& rows,
                        const std::vector<std::pair<std::string, corpus::ClassCounts>>& reference) {
  std::string out;
  char line[200];
  std::snprintf(line, sizeof line, "%-22s %8s %8s %8s   %s\n", "split", "pos", "neg", "neu", "check");
  out += line;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& [name, c] = rows[i];
    std::string check = "-";
    if (i < reference.size()) {
      const auto& r = reference[i].second;
      check = c == r ? "PASS" : "FAIL (expected " + std::to_string(r.positive) + "/" +
                                    std::to_string(r.negative) + "/" + std::to_string(r.neutral) + ")";
    }
    std::snprintf(line, sizeof line, "%-22s %8zu %8zu %8zu   %s\n", name.c_str(), c.positive,
                  c.negative, c.neutral, check.c_str());
    out += line;
  }
  return out;
}

}  // namespace kgan::evaluation
