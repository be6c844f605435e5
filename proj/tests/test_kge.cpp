#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "kgan/error.hpp"
#include "kgan/kge.hpp"
#include "synthetic.hpp"

using namespace kgan;
using namespace kgan::kge;

namespace {

RowVector row(std::initializer_list<double> v) {
  RowVector r(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) r(i++) = x;
  return r;
}

RowVector random_row(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  RowVector r(n);
  for (int i = 0; i < n; ++i) r(i) = d(rng);
  return r;
}

KgeModel random_model(Method m, int entities, int relations, int dim, std::mt19937_64& rng) {
  KgeModel k;
  k.method = m;
  k.dim = dim;
  k.complex_dim = resolve_complex_dim(m, dim, -1);
  k.entity_emb.resize(entities, dim);
  k.relation_emb.resize(relations, dim);
  for (int i = 0; i < entities; ++i) k.entity_emb.row(i) = random_row(dim, rng);
  for (int i = 0; i < relations; ++i) k.relation_emb.row(i) = random_row(dim, rng);
  return k;
}

TrainOptions options(Method m, int dim, int epochs) {
  TrainOptions o;
  o.method = m;
  o.dim = dim;
  o.epochs = epochs;
  o.seed = 3;
  return o;
}

}  // namespace

TEST_CASE("scoring hand examples") {
  CHECK(score_vectors(Method::kTransE, 0, row({1, 0}), row({0, 1}), row({1, 1})) == 0.0);
  CHECK(score_vectors(Method::kTransE, 0, row({1, 0}), row({0, 1}), row({1, 4})) == doctest::Approx(-3.0));
  CHECK(score_vectors(Method::kDistMult, 0, row({1, 2}), row({1, 1}), row({3, 1})) == 5.0);
  // ComplEx: Re(h r conj(t)) with h = 1+2i, r = i, t = 3-i: (1+2i)(i)(3+i) = -7 + i.
  CHECK(score_vectors(Method::kComplEx, 2, row({1, 2}), row({0, 1}), row({3, -1})) == doctest::Approx(-7.0));
}

TEST_CASE("scoring properties on random vectors") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 200; ++t) {
    const auto h = random_row(6, rng), r = random_row(6, rng), tt = random_row(6, rng);
    CHECK(score_vectors(Method::kDistMult, 0, h, r, tt) ==
          doctest::Approx(score_vectors(Method::kDistMult, 0, tt, r, h)).epsilon(1e-12));
    CHECK(score_vectors(Method::kTransE, 0, h, r, tt) < 0.0);
    CHECK(score_vectors(Method::kTransE, 0, h, r, h + r) == 0.0);

    // Zero imaginary parts reduce ComplEx to DistMult on the real halves.
    RowVector hz = h, rz = r, tz = tt;
    hz.tail(3).setZero();
    rz.tail(3).setZero();
    tz.tail(3).setZero();
    CHECK(score_vectors(Method::kComplEx, 6, hz, rz, tz) ==
          doctest::Approx(score_vectors(Method::kDistMult, 0, hz.head(3), rz.head(3), tz.head(3))).epsilon(1e-12));

    // ANALOGY block reduction.
    CHECK(score_vectors(Method::kAnalogy, 0, h, r, tt) == score_vectors(Method::kDistMult, 0, h, r, tt));
    CHECK(score_vectors(Method::kAnalogy, 6, h, r, tt) == score_vectors(Method::kComplEx, 6, h, r, tt));
    CHECK(score_vectors(Method::kAnalogy, 4, h, r, tt) ==
          doctest::Approx(score_vectors(Method::kDistMult, 0, h.head(2), r.head(2), tt.head(2)) +
                          score_vectors(Method::kComplEx, 4, h.tail(4), r.tail(4), tt.tail(4)))
              .epsilon(1e-12));
  }
}

TEST_CASE("score gradients match central differences") {
  std::mt19937_64 rng(2);
  const double step = 1e-6;
  for (auto [m, cd] : {std::pair{Method::kTransE, 0}, {Method::kDistMult, 0}, {Method::kComplEx, 6},
                       {Method::kAnalogy, 4}}) {
    for (int trial = 0; trial < 10; ++trial) {
      RowVector v[3] = {random_row(6, rng), random_row(6, rng), random_row(6, rng)};
      const auto g = score_gradient(m, cd, v[0], v[1], v[2]);
      const RowVector* analytic[3] = {&g.head, &g.relation, &g.tail};
      for (int which = 0; which < 3; ++which) {
        RowVector numeric(6);
        for (int i = 0; i < 6; ++i) {
          RowVector p[3] = {v[0], v[1], v[2]}, q[3] = {v[0], v[1], v[2]};
          p[which](i) += step;
          q[which](i) -= step;
          numeric(i) = (score_vectors(m, cd, p[0], p[1], p[2]) - score_vectors(m, cd, q[0], q[1], q[2])) / (2 * step);
        }
        const double rel = (numeric - *analytic[which]).norm() / std::max(1e-12, numeric.norm() + analytic[which]->norm());
        CHECK_MESSAGE(rel < 1e-4, method_name(m), " slot ", which);
      }
    }
  }
}

TEST_CASE("complex block layout validation") {
  CHECK_THROWS_AS(resolve_complex_dim(Method::kAnalogy, 10, 3), ConfigError);
  CHECK_THROWS_AS(resolve_complex_dim(Method::kComplEx, 7, -1), ConfigError);
  CHECK_THROWS_AS(resolve_complex_dim(Method::kTransE, 0, -1), ConfigError);
  CHECK(resolve_complex_dim(Method::kAnalogy, 8, -1) == 4);
  CHECK(method_from_name("DistMult") == Method::kDistMult);
}

TEST_CASE("graph bookkeeping") {
  const auto g = parse_triples("# comment\na\tr\tb\n\nb\tr\tc\na\tr\tb\n");
  CHECK(g.entities().size() == 3);
  CHECK(g.relations().size() == 1);
  CHECK(g.triples().size() == 2);
  CHECK(g.entity_id("c") == 2);
  CHECK_THROWS_AS(parse_triples("a\tb\n"), DataError);
  CHECK(make_chain_graph(5, 2).triples().size() == 4);
}

TEST_CASE("training is deterministic and ranks the true direction") {
  KnowledgeGraph g;
  g.add_triple("a", "r", "b");
  auto o = options(Method::kTransE, 8, 200);
  const auto m1 = train_kge(g, o);
  const auto m2 = train_kge(g, o);
  CHECK(m1.entity_emb == m2.entity_emb);
  CHECK(m1.relation_emb == m2.relation_emb);
  CHECK(score(m1, {0, 0, 1}) > score(m1, {1, 0, 0}));
  for (Eigen::Index i = 0; i < m1.entity_emb.rows(); ++i)
    CHECK(m1.entity_emb.row(i).norm() == doctest::Approx(1.0));
  CHECK_THROWS_AS(train_kge(KnowledgeGraph{}, o), DataError);
}

TEST_CASE("loss decreases over the first epochs") {
  const auto g = make_chain_graph(30, 2);
  for (auto m : {Method::kTransE, Method::kDistMult, Method::kComplEx, Method::kAnalogy}) {
    std::vector<double> loss;
    train_kge(g, options(m, 16, 10), &loss);
    REQUIRE(loss.size() == 10);
    CHECK_MESSAGE(loss.back() < loss.front(), method_name(m));
  }
}

TEST_CASE("toy graphs reach high filtered MRR") {
  const auto tree = make_hierarchy_graph();
  REQUIRE(tree.entities().size() == 50);
  for (auto m : {Method::kTransE, Method::kDistMult}) {
    auto o = options(m, 32, 300);
    o.lr = 0.05;
    const auto r = link_prediction_eval(train_kge(tree, o), tree);
    CHECK_MESSAGE(r.mrr >= 0.9, method_name(m), " MRR ", r.mrr);
    CHECK(r.count == tree.triples().size());
  }
  const auto chain = make_chain_graph(50, 2);
  auto o = options(Method::kDistMult, 32, 300);
  o.lr = 0.05;
  const auto r = link_prediction_eval(train_kge(chain, o), chain);
  CHECK_MESSAGE(r.mrr >= 0.9, "DistMult chain MRR ", r.mrr);
}

TEST_CASE("link prediction oracles") {
  // A model that puts every true tail first.
  const auto g = make_chain_graph(10, 1);
  KgeModel perfect;
  perfect.method = Method::kTransE;
  perfect.dim = 1;
  perfect.entity_emb.resize(10, 1);
  for (int i = 0; i < 10; ++i) perfect.entity_emb(i, 0) = i;
  perfect.relation_emb = Matrix::Ones(1, 1);
  const auto r = link_prediction_eval(perfect, g);
  CHECK(r.mrr == 1.0);
  CHECK(r.hits_at_1 == 1.0);
  CHECK(r.hits_at_10 == 1.0);

  KnowledgeGraph single;
  single.add_triple("a", "r", "a");
  KgeModel one = perfect;
  one.entity_emb = Matrix::Zero(1, 1);
  CHECK(link_prediction_eval(one, single).mrr == 1.0);

  // Random embeddings rank the true tail uniformly: E[1/rank] = H_n / n.
  const int n = 50;
  double expected = 0;
  for (int k = 1; k <= n; ++k) expected += 1.0 / k;
  expected /= n;
  const auto chain = make_chain_graph(n, 2);
  std::mt19937_64 rng(9);
  double total = 0;
  const int models = 40;
  for (int i = 0; i < models; ++i) total += link_prediction_eval(random_model(Method::kDistMult, n, 2, 8, rng), chain).mrr;
  CHECK(std::abs(total / models - expected) <= 0.05);
}

TEST_CASE("embedding tables") {
  std::mt19937_64 rng(4);
  Matrix v(3, 4);
  for (int i = 0; i < 3; ++i) v.row(i) = random_row(4, rng);
  KnowledgeTable t({"fish_genus", "tinca", "good"}, v);
  const auto back = parse_embeddings(export_embeddings(t));
  CHECK(back == t);
  CHECK(back.vectors().rows() == 3);
  CHECK(back.dim() == 4);
  CHECK_THROWS_AS(t.require_dim(100), DimensionError);
  CHECK_THROWS_AS(parse_embeddings("2 3\na 1 2 3\nb 1 2\n"), DataError);

  const auto dir = testing::temp_dir("kge-table");
  save_embeddings(dir / "t.txt", t, R"({"dim": 4})");
  CHECK(load_pretrained(dir / "t.txt") == t);
  CHECK_THROWS_AS(load_pretrained(dir / "t.txt", 100), DimensionError);

  auto hit = word_to_entity("tinca", t);
  CHECK_FALSE(hit.oov);
  CHECK(hit.vector == v.row(1));
  CHECK(word_to_entity("fish genus", t).vector == v.row(0));
  CHECK(word_to_entity("Tinca", t).vector == v.row(1));
  const auto miss = word_to_entity("unknown", t);
  CHECK(miss.oov);
  CHECK(miss.vector.isZero(0.0));
  CHECK(miss.vector.size() == 4);

  load_aliases(t, "tinca\ttench\ngood\ttench\n");
  const auto both = word_to_entity("tench", t);
  CHECK(both.vector.isApprox((v.row(1) + v.row(2)) / 2.0));
}

TEST_CASE("entity table from a trained model") {
  const auto g = make_chain_graph(5, 1);
  const auto m = train_kge(g, options(Method::kDistMult, 4, 2));
  const auto t = entity_table(m, g);
  CHECK(t.names() == g.entities());
  CHECK(t.vectors() == m.entity_emb);
}
