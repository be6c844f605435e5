#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <json.hpp>
#include <sstream>

#include "kgan/cli.hpp"
#include "kgan/config.hpp"
#include "kgan/error.hpp"
#include "kgan/io.hpp"
#include "synthetic.hpp"

using namespace kgan;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

// Synthetic data plus a config file with relative paths, in a fresh dir.
struct Workspace {
  fs::path dir;
  fs::path config;

  explicit Workspace(const std::string& name, const std::string& extra = "") {
    dir = testing::temp_dir("cli-" + name);
    testing::SyntheticOptions o;
    o.train = 16;
    o.test = 8;
    testing::write_synthetic(dir / "data", testing::make_synthetic(o));
    config = dir / "run.json";
    io::write_file(config, R"({
  // tiny synthetic run
  "dataset": {"name": "custom", "format": "tsv", "train": "data/train.tsv", "test": "data/test.tsv",
              "train_parses": "data/train.conllu", "test_parses": "data/test.conllu"},
  "embeddings": {"words": "data/words.txt", "knowledge": "data/knowledge.txt"},
  "model": {"d_w": 8, "d_k": 4, "hidden": 3, "dropout": 0.2},
  "train": {"epochs": 2, "batch_size": 8, "lr": 0.01},
  "experiment": {"seeds": [1]},
  "output_dir": ")" + (dir / "out").string() + "\"" + extra + "\n}\n");
  }

  Result operator()(const std::string& cmd, std::vector<std::string> sets = {}) const {
    std::vector<std::string> args{cmd, "-c", config.string()};
    for (auto& s : sets) args.insert(args.end(), {"--set", s});
    return run(args);
  }
  fs::path out(const std::string& rel) const { return dir / "out" / rel; }
};

}  // namespace

TEST_CASE("help lists every config key with its default") {
  const auto r = run({"--help"});
  CHECK(r.code == 0);
  for (const auto& k : config::key_reference())
    CHECK_MESSAGE(r.out.find(k.key + " = " + k.default_value) != std::string::npos, k.key);
  const auto sub = run({"train", "--help"});
  CHECK(sub.code == 0);
  CHECK(sub.out.find("model.fusion = \"hierarchical\"") != std::string::npos);
}

TEST_CASE("bad invocations are config errors") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"train", "--set", "model.hiden=3"}).code == 2);
  CHECK(run({"train", "--set", "model.hidden=three"}).code == 2);
  CHECK(run({"train", "--set", "model.fusion=median"}).code == 2);
  CHECK(run({"train", "-c", "/nonexistent/run.json"}).code == 2);
  const auto dir = testing::temp_dir("cli-badkey");
  io::write_file(dir / "c.json", R"({"model": {"hidden": 3, "colour": "red"}})");
  const auto r = run({"prepare", "-c", (dir / "c.json").string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("model.colour") != std::string::npos);
}

TEST_CASE("config precedence and path resolution") {
  const auto dir = testing::temp_dir("cli-config");
  io::write_file(dir / "c.json", R"({"model": {"hidden": 7, "dropout": 0}, "dataset": {"train": "a/train.tsv"},
    "train": {"epochs": 3}})");
  auto c = config::load(dir / "c.json", {"train.epochs=9", "dataset.test=rel/test.tsv", "model.branches=cs", "model.fusion=concat"});
  CHECK(c.model.hidden == 7);
  CHECK(c.model.dropout == 0.0);
  CHECK(c.train.epochs == 9);
  CHECK(c.model.d_w == 300);
  CHECK(c.model.branches.code() == "cs");
  CHECK(c.dataset.train == dir / "a" / "train.tsv");
  CHECK(c.dataset.test == fs::current_path() / "rel" / "test.tsv");
  CHECK(c.train_config().batch_size == 32);
  c = config::load(std::nullopt, {"dataset.name=restaurant14"});
  CHECK(c.train_config().batch_size == 64);
  CHECK(json::parse(c.resolved_json)["train"]["epochs"] == 50);

  CHECK_THROWS_AS(config::load(std::nullopt, {"kge.method=analogy", "kge.dim=10", "kge.complex_dim=3"}), ConfigError);
  CHECK_THROWS_AS(config::load(std::nullopt, {"train.noise_ratio=2"}), ConfigError);
  CHECK_THROWS_AS(config::load(std::nullopt, {"experiment.seeds=[]"}), ConfigError);
  CHECK_NOTHROW(config::load(std::nullopt, {"experiment.kge_tables.transe=t.txt"}));
}

TEST_CASE("output root comes from the environment") {
  const auto root = testing::temp_dir("cli-root");
  ::setenv("KGAN_OUTPUT_ROOT", root.c_str(), 1);
  const auto c = config::load(std::nullopt, {"output_dir=exp1"});
  ::unsetenv("KGAN_OUTPUT_ROOT");
  CHECK(c.output_dir == root / "exp1");
  CHECK(config::load(std::nullopt, {"output_dir=/abs/x"}).output_dir == fs::path("/abs/x"));
}

TEST_CASE("prepare caches and detects problems") {
  Workspace w("prepare");
  auto r = w("prepare");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(fs::exists(w.out("prepared/manifest.json")));
  CHECK(fs::exists(w.out("prepared/train.adj")));
  CHECK(fs::exists(w.out("prepared.config.json")));
  const auto manifest = io::read_file(w.out("prepared/manifest.json"));
  r = w("prepare");
  CHECK(r.code == 0);
  CHECK(r.out.find("cache hit") != std::string::npos);
  CHECK(io::read_file(w.out("prepared/manifest.json")) == manifest);

  r = w("prepare", {"dataset.train_parses=" + (w.dir / "missing.conllu").string()});
  CHECK(r.code == 3);
  CHECK(r.err.find("missing.conllu") != std::string::npos);
  CHECK(r.err.find("parse_adapter.py") != std::string::npos);

  r = w("prepare", {"dataset.name=laptop14"});
  CHECK(r.code == 5);
  CHECK(r.out.find("FAIL (expected 980/858/454)") != std::string::npos);
  CHECK(w("prepare", {"dataset.name=laptop14", "dataset.check_stats=false"}).code == 0);
  CHECK(w("stats", {"dataset.name=laptop14"}).code == 5);
  CHECK(w("stats").code == 0);

  io::write_file(w.dir / "bad.tsv", "the food\t0\t5\t0\tx\n");
  CHECK(w("prepare", {"dataset.train=" + (w.dir / "bad.tsv").string()}).code == 3);
}

TEST_CASE("train, eval, cases and rerun reproduce byte-identical artifacts") {
  Workspace w("train");
  auto r = w("train");
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.err.find("epoch 2/2") != std::string::npos);
  for (const char* f : {"train/best.ckpt", "train/run.jsonl", "train/config.json", "train/report.json"})
    CHECK_MESSAGE(fs::exists(w.out(f)), f);
  const auto ckpt = io::read_file(w.out("train/best.ckpt"));
  const auto record = io::read_file(w.out("train/run.jsonl"));

  r = w("eval");
  CHECK(r.code == 0);
  CHECK(r.out.find("matches the metrics stored at save time") != std::string::npos);
  CHECK(io::read_file(w.out("eval/report.json")) == io::read_file(w.out("train/report.json")));

  r = w("cases", {"experiment.max_cases=3"});
  CHECK(r.code == 0);
  const auto cases = json::parse(io::read_file(w.out("cases/cases.json")));
  CHECK(cases.size() == 3);
  CHECK(cases[0]["weights"].size() == 3);
  CHECK(w("cases", {"experiment.cases=[\"test-1\",\"train-0\"]"}).code == 0);
  CHECK(json::parse(io::read_file(w.out("cases/cases.json")))[1]["id"] == "train-0");
  CHECK(w("cases", {"experiment.cases=[\"nope\"]"}).code == 3);

  fs::remove_all(w.dir / "out");
  CHECK(w("train").code == 0);
  CHECK(io::read_file(w.out("train/best.ckpt")) == ckpt);
  CHECK(io::read_file(w.out("train/run.jsonl")) == record);
}

TEST_CASE("knowledge branch without a table is a config error") {
  Workspace w("noknow");
  CHECK(w("train", {"embeddings.knowledge="}).code == 2);
  CHECK(w("train", {"embeddings.knowledge=", "model.branches=cs", "model.fusion=concat"}).code == 0);
}

TEST_CASE("diverging training exits with the numeric status") {
  Workspace w("nan");
  const auto r = w("train", {"train.lr=1e300", "train.clip_norm=0", "train.epochs=3"});
  CHECK(r.code == 4);
  CHECK(r.err.find("non-finite") != std::string::npos);
}

TEST_CASE("experiment commands") {
  Workspace w("experiments");
  auto r = w("ablate", {"train.epochs=1"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto branches = json::parse(io::read_file(w.out("ablate-branches/branches.json")));
  CHECK(branches["summary"].size() == 7);
  CHECK(branches["cells"].size() == 7);
  CHECK(fs::exists(w.out("ablate-branches/headline.json")));
  CHECK(r.out.find("csk+hierarchical") != std::string::npos);

  r = w("ablate", {"train.epochs=1", "experiment.kind=fusion"});
  CHECK(r.code == 0);
  CHECK(json::parse(io::read_file(w.out("ablate-fusion/fusion.json")))["summary"].size() == 5);

  r = w("ablate", {"train.epochs=1", "experiment.kind=kge",
                   "experiment.kge_tables.a=" + (w.dir / "data/knowledge.txt").string()});
  CHECK(r.code == 0);
  CHECK(w("ablate", {"experiment.kind=kge"}).code == 2);

  r = w("noise", {"train.epochs=1", "experiment.ratios=[0, 0.5]"});
  CHECK(r.code == 0);
  CHECK(json::parse(io::read_file(w.out("noise/noise.json")))["cells"].size() == 2);
  CHECK(r.out.find("noise=0.5") != std::string::npos);
}

TEST_CASE("kge-train") {
  const auto dir = testing::temp_dir("cli-kge");
  std::string triples;
  for (int i = 0; i < 20; ++i)
    triples += "e" + std::to_string(i) + "\tr" + std::to_string(i % 2) + "\te" + std::to_string(i + 1) + "\n";
  io::write_file(dir / "toy.tsv", triples);
  const std::vector<std::string> base{"kge-train", "--set", "kge.triples=" + (dir / "toy.tsv").string(),
                                      "--set", "kge.dim=8", "--set", "kge.epochs=20",
                                      "--set", "output_dir=" + (dir / "out").string()};
  auto r = run(base);
  REQUIRE_MESSAGE(r.code == 0, r.err);
  CHECK(r.out.find("MRR") != std::string::npos);
  const auto report = json::parse(io::read_file(dir / "out/kge/report.json"));
  CHECK(report.contains("mrr"));
  const auto emb = io::read_file(dir / "out/kge/entities.txt");
  CHECK(run(base).code == 0);
  CHECK(io::read_file(dir / "out/kge/entities.txt") == emb);

  auto analogy = base;
  analogy.insert(analogy.end(), {"--set", "kge.method=analogy", "--set", "kge.complex_dim=3"});
  CHECK(run(analogy).code == 2);
  CHECK(run({"kge-train", "--set", "kge.triples=" + (dir / "none.tsv").string()}).code == 3);
}
