#include "kgan/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "kgan/error.hpp"

namespace kgan::training {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw ConfigError("train.lr must be non-negative");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (eval_every < 1) throw ConfigError("train.eval_every must be at least 1");
  if (!(noise_ratio >= 0.0 && noise_ratio <= 1.0)) throw ConfigError("train.noise_ratio must lie in [0, 1]");
  if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && eps > 0.0))
    throw ConfigError("train: Adam betas must lie in [0, 1) and eps must be positive");
  if (selection == Selection::kHeldOut && !(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw ConfigError("train.holdout_fraction must lie in (0, 1)");
}

std::string TrainConfig::to_json() const {
  json j = {{"lr", lr},
            {"batch_size", batch_size},
            {"epochs", epochs},
            {"seed", seed},
            {"beta1", beta1},
            {"beta2", beta2},
            {"eps", eps},
            {"eval_every", eval_every},
            {"noise_ratio", noise_ratio},
            {"clip_norm", clip_norm},
            {"selection", selection == Selection::kBestTest ? "best_test" : "held_out"},
            {"holdout_fraction", holdout_fraction},
            {"record_wall_time", record_wall_time}};
  return j.dump();
}

TrainConfig TrainConfig::from_json(std::string_view text) {
  TrainConfig c;
  try {
    const auto j = json::parse(text);
    c.lr = j.at("lr").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.eval_every = j.at("eval_every").get<int>();
    c.noise_ratio = j.at("noise_ratio").get<double>();
    c.clip_norm = j.at("clip_norm").get<double>();
    const auto sel = j.at("selection").get<std::string>();
    if (sel == "best_test") c.selection = Selection::kBestTest;
    else if (sel == "held_out") c.selection = Selection::kHeldOut;
    else throw ConfigError("train.selection must be best_test or held_out, got '" + sel + "'");
    c.holdout_fraction = j.at("holdout_fraction").get<double>();
    c.record_wall_time = j.at("record_wall_time").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

int default_batch_size(corpus::DatasetName name) {
  return name == corpus::DatasetName::kRestaurant14 ? 64 : 32;
}

namespace {

json metrics_json(const evaluation::MetricReport& r) { return json::parse(r.to_json()); }

std::string grad_diagnostics(const std::vector<nn::Parameter>& params) {
  std::ostringstream ss;
  for (const auto& p : params) {
    if (p.grad.size() == 0) continue;
    ss << "\n  " << p.name << " |grad| = " << p.grad.norm();
  }
  return ss.str();
}

}  // namespace

std::string RunRecord::to_jsonl() const {
  std::string out = json{{"config", json::parse(config_json)}}.dump() + "\n";
  for (const auto& e : epochs) {
    json j = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"train_accuracy", e.train_accuracy}};
    if (e.test) j["test"] = metrics_json(*e.test);
    if (e.dev) j["dev"] = metrics_json(*e.dev);
    if (e.wall_seconds > 0.0) j["wall_seconds"] = e.wall_seconds;
    out += j.dump() + "\n";
  }
  out += json{{"best_epoch", best_epoch}, {"best", metrics_json(best)}}.dump() + "\n";
  return out;
}

std::vector<int> predict_all(const network::KganModel& model,
                             std::span<const network::ModelInput> inputs) {
  std::vector<int> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) out.push_back(model.predict(in).label);
  return out;
}

evaluation::MetricReport evaluate(const network::KganModel& model,
                                  std::span<const network::ModelInput> inputs) {
  std::vector<int> gold;
  gold.reserve(inputs.size());
  for (const auto& in : inputs) gold.push_back(in.gold);
  const auto pred = predict_all(model, inputs);
  return evaluation::compute_metrics(gold, pred);
}

double batch_loss(network::KganModel& model, std::span<const network::ModelInput> batch,
                  bool with_gradient) {
  if (with_gradient) model.zero_grad();
  double total = 0.0;
  for (const auto& in : batch) {
    nn::Tape tape;
    auto logits = model.forward(tape, in, nullptr);
    auto loss = nn::cross_entropy(logits, in.gold);
    total += loss.value()(0, 0);
    if (with_gradient) tape.backward(loss);
  }
  return total;
}

TrainResult train(network::KganModel model, const TrainConfig& config, const TrainingData& data,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (data.train.empty()) throw DataError("training set is empty");

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), 0);

  std::vector<network::ModelInput> dev;
  if (config.selection == Selection::kHeldOut) {
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_dev = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.holdout_fraction * static_cast<double>(order.size())));
    if (n_dev >= order.size()) throw DataError("held-out split leaves no training instances");
    for (std::size_t i = 0; i < n_dev; ++i) dev.push_back(data.train[order[i]]);
    order.erase(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_dev));
    std::sort(order.begin(), order.end());
  }

  nn::Adam adam({config.lr, config.beta1, config.beta2, config.eps});
  RunRecord record;
  {
    json cfg = {{"model", json::parse(model.config().to_json())},
                {"train", json::parse(config.to_json())}};
    record.config_json = cfg.dump();
  }

  std::optional<network::KganModel> best;
  double best_score = -1.0;
  auto& params = model.parameters();

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t correct = 0;

    int batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const auto end = std::min(order.size(), b + static_cast<std::size_t>(config.batch_size));
      model.zero_grad();
      double loss_sum = 0.0;
      for (std::size_t k = b; k < end; ++k) {
        const auto& in = data.train[order[k]];
        nn::Tape tape;
        auto logits = model.forward(tape, in, &rng);
        Eigen::Index arg = 0;
        logits.value().row(0).maxCoeff(&arg);
        if (arg == in.gold) ++correct;
        auto loss = nn::cross_entropy(logits, in.gold);
        loss_sum += loss.value()(0, 0);
        tape.backward(loss);
      }
      const double gnorm = nn::global_grad_norm(params);
      if (!std::isfinite(loss_sum) || !std::isfinite(gnorm))
        throw NumericError("non-finite " + std::string(std::isfinite(loss_sum) ? "gradient" : "loss") +
                           " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index) + " (loss " + std::to_string(loss_sum) +
                           ", global grad norm " + std::to_string(gnorm) + ")" +
                           grad_diagnostics(params));
      if (config.clip_norm > 0.0) nn::clip_grad_norm(params, config.clip_norm);
      adam.step(params);
      rec.train_loss += loss_sum;
    }
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());

    if (epoch % config.eval_every == 0 || epoch == config.epochs) {
      if (!data.test.empty()) rec.test = evaluate(model, data.test);
      if (!dev.empty()) rec.dev = evaluate(model, dev);
      const auto* select = config.selection == Selection::kHeldOut ? &rec.dev : &rec.test;
      const double score = *select ? (*select)->accuracy : rec.train_accuracy;
      if (score > best_score) {
        best_score = score;
        best = model;
        record.best_epoch = epoch;
        if (rec.test) record.best = *rec.test;
      }
    }
    if (config.record_wall_time)
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_epoch) on_epoch(rec);
    record.epochs.push_back(std::move(rec));
  }

  for (auto& p : best->parameters()) p.grad.resize(0, 0);
  return TrainResult{std::move(*best), std::move(record)};
}

kge::KnowledgeTable apply_noise_attack(const kge::KnowledgeTable& table, double ratio,
                                       std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("noise ratio must lie in [0, 1]");
  kge::KnowledgeTable out = table;
  const auto rows = table.size();
  const auto k = std::min(rows, static_cast<std::size_t>(std::floor(ratio * static_cast<double>(rows) + 1e-9)));
  if (k == 0) return out;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, rows - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  auto& v = out.mutable_vectors();
  for (std::size_t i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j) v(static_cast<Eigen::Index>(idx[i]), j) = u(rng);
  return out;
}

}  // namespace kgan::training
