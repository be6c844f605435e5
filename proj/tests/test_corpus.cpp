#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "kgan/corpus.hpp"
#include "kgan/error.hpp"

using namespace kgan;
using namespace kgan::corpus;

using Tokens = std::vector<std::string>;

TEST_CASE("tokenize") {
  CHECK(tokenize("Great food!") == Tokens{"great", "food", "!"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("A  B") == Tokens{"a", "b"});
  CHECK(tokenize("don't,stop") == Tokens{"don", "'", "t", ",", "stop"});
  CHECK(tokenize("Café au lait") == Tokens{"café", "au", "lait"});
  const auto spans = tokenize_with_offsets("Hi, you");
  REQUIRE(spans.size() == 3);
  CHECK(spans[1].text == ",");
  CHECK(spans[1].begin == 2);
  CHECK(spans[2].begin == 4);
  CHECK(spans[2].end == 7);
}

TEST_CASE("polarity encoding") {
  CHECK(static_cast<int>(polarity_from_name("Positive")) == 0);
  CHECK(static_cast<int>(polarity_from_name("neutral")) == 1);
  CHECK(static_cast<int>(polarity_from_name("NEGATIVE")) == 2);
  CHECK_THROWS_AS(polarity_from_name("conflict"), LabelError);
  CHECK_THROWS_AS(polarity_from_index(3), LabelError);
}

TEST_CASE("semeval 2014 schema") {
  const std::string xml = R"(<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="s1">
    <text>The food was good .</text>
    <aspectTerms>
      <aspectTerm term="food" polarity="positive" from="4" to="8"/>
    </aspectTerms>
  </sentence>
  <sentence id="s2">
    <text>Battery life is short but the screen is fine.</text>
    <aspectTerms>
      <aspectTerm term="Battery life" polarity="negative" from="0" to="12"/>
      <aspectTerm term="screen" polarity="conflict" from="30" to="36"/>
      <aspectTerm term="screen" polarity="neutral" from="30" to="36"/>
    </aspectTerms>
  </sentence>
  <sentence id="s3"><text>No aspects here.</text></sentence>
</sentences>)";
  const auto out = parse_semeval(xml, SemEvalSchema::kV2014);
  REQUIRE(out.size() == 3);
  CHECK(out[0].tokens == Tokens{"the", "food", "was", "good", "."});
  CHECK(out[0].aspect_start == 1);
  CHECK(out[0].aspect_len == 1);
  CHECK(out[0].polarity == Polarity::kPositive);
  CHECK(out[1].aspect_start == 0);
  CHECK(out[1].aspect_len == 2);
  CHECK(out[1].polarity == Polarity::kNegative);
  CHECK(out[2].aspect()[0] == "screen");
  CHECK(out[2].polarity == Polarity::kNeutral);
  CHECK(out[0].id != out[1].id);

  CHECK(parse_semeval("<sentences></sentences>", SemEvalSchema::kV2014).empty());
  CHECK_THROWS_AS(parse_semeval("<sentences><sentence>", SemEvalSchema::kV2014), ParseError);
}

TEST_CASE("semeval offsets must land on token boundaries") {
  const std::string xml = R"(<sentences><sentence id="bad"><text>The food was good</text>
    <aspectTerms><aspectTerm term="oo" polarity="positive" from="5" to="7"/></aspectTerms>
    </sentence></sentences>)";
  try {
    parse_semeval(xml, SemEvalSchema::kV2014);
    FAIL("expected an alignment error");
  } catch (const AlignmentError& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
}

TEST_CASE("semeval 2015/16 schema") {
  const std::string xml = R"(<Reviews><Review rid="r1"><sentences>
    <sentence id="r1:0"><text>Great pizza, rude waiter.</text><Opinions>
      <Opinion target="pizza" category="FOOD#QUALITY" polarity="positive" from="6" to="11"/>
      <Opinion target="pizza" category="FOOD#STYLE" polarity="positive" from="6" to="11"/>
      <Opinion target="waiter" category="SERVICE#GENERAL" polarity="negative" from="18" to="24"/>
      <Opinion target="NULL" category="RESTAURANT#GENERAL" polarity="positive" from="0" to="0"/>
    </Opinions></sentence>
    <sentence id="r1:1"><text>Nothing.</text></sentence>
  </sentences></Review></Reviews>)";
  const auto out = parse_semeval(xml, SemEvalSchema::kV2015_16);
  REQUIRE(out.size() == 2);
  CHECK(out[0].aspect()[0] == "pizza");
  CHECK(out[1].aspect()[0] == "waiter");
  CHECK(out[1].polarity == Polarity::kNegative);
}

TEST_CASE("twitter records") {
  const auto out = parse_twitter("i love $T$ !\nmy phone\n1\n$T$ is meh\nthe show\n0\nhate $T$\nmondays\n-1\n");
  REQUIRE(out.size() == 3);
  CHECK(out[0].tokens == Tokens{"i", "love", "my", "phone", "!"});
  CHECK(out[0].aspect_start == 2);
  CHECK(out[0].aspect_len == 2);
  CHECK(out[0].polarity == Polarity::kPositive);
  CHECK(out[1].polarity == Polarity::kNeutral);
  CHECK(out[2].polarity == Polarity::kNegative);
  CHECK(parse_twitter("").empty());
  CHECK_THROWS_AS(parse_twitter("i love $T$\nit\n"), FormatError);
  CHECK_THROWS_AS(parse_twitter("i love $T$\nit\n2\n"), LabelError);
}

TEST_CASE("tsv round trip on random instances") {
  std::mt19937_64 rng(3);
  const Tokens words{"a", "b", "food", "!", "x-y", "é"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Instance> in;
    const int n = std::uniform_int_distribution<int>(0, 6)(rng);
    for (int i = 0; i < n; ++i) {
      Instance x;
      const auto m = std::uniform_int_distribution<std::size_t>(1, 8)(rng);
      for (std::size_t t = 0; t < m; ++t) x.tokens.push_back(words[rng() % words.size()]);
      x.aspect_start = std::uniform_int_distribution<std::size_t>(0, m - 1)(rng);
      x.aspect_len = std::uniform_int_distribution<std::size_t>(1, m - x.aspect_start)(rng);
      x.polarity = polarity_from_index(static_cast<int>(rng() % 3));
      x.id = "id" + std::to_string(i);
      in.push_back(x);
    }
    CHECK(parse_tsv(to_tsv(in)) == in);
  }
  CHECK_THROWS_AS(parse_tsv("a b\t1\t5\t0\tx\n"), DataError);
  CHECK_THROWS_AS(parse_tsv("a b\t0\t1\t7\tx\n"), LabelError);
}

TEST_CASE("instance validation") {
  Instance x;
  x.tokens = {"a"};
  CHECK_NOTHROW(validate(x));
  x.aspect_len = 2;
  CHECK_THROWS_AS(validate(x), DataError);
  x.aspect_len = 0;
  CHECK_THROWS_AS(validate(x), DataError);
  x = Instance{};
  CHECK_THROWS_AS(validate(x), DataError);
}

TEST_CASE("vocabulary") {
  Dataset d;
  Instance x;
  x.tokens = {"x"};
  d.instances = {x};
  std::vector<Dataset> one{d};
  const auto v = build_vocab(one);
  CHECK(v.size() == 3);
  CHECK(v.index("x") == 2);
  CHECK(v.index("<pad>") == Vocabulary::kPad);
  CHECK(v.index("unseen") == Vocabulary::kUnk);
  std::vector<Dataset> twice{d, d};
  CHECK(build_vocab(twice) == v);
  CHECK(Vocabulary::deserialize(v.serialize()) == v);

  Instance y;
  y.tokens = {"b", "a", "b", "c"};
  d.instances = {y};
  std::vector<Dataset> ordered{d};
  const auto w = build_vocab(ordered);
  CHECK(w.tokens() == Tokens{"<pad>", "<unk>", "b", "a", "c"});
  const Tokens q{"a", "zz"};
  CHECK(w.encode(q) == std::vector<int>{3, 1});
}

TEST_CASE("dataset statistics") {
  CHECK(dataset_stats(std::vector<Instance>{}) == ClassCounts{0, 0, 0});
  std::vector<Instance> xs(5);
  for (auto& x : xs) x.tokens = {"t"};
  xs[1].polarity = Polarity::kNegative;
  xs[2].polarity = Polarity::kNeutral;
  xs[3].polarity = Polarity::kNegative;
  CHECK(dataset_stats(xs) == ClassCounts{2, 2, 1});

  using D = DatasetName;
  CHECK(reference_counts(D::kLaptop14, Split::kTrain) == ClassCounts{980, 858, 454});
  CHECK(reference_counts(D::kLaptop14, Split::kTest) == ClassCounts{340, 128, 171});
  CHECK(reference_counts(D::kRestaurant14, Split::kTrain) == ClassCounts{2159, 800, 632});
  CHECK(reference_counts(D::kRestaurant14, Split::kTest) == ClassCounts{730, 195, 196});
  CHECK(reference_counts(D::kTwitter, Split::kTrain) == ClassCounts{1567, 1563, 3127});
  CHECK(reference_counts(D::kTwitter, Split::kTest) == ClassCounts{174, 174, 346});
  CHECK(reference_counts(D::kRestaurant15, Split::kTrain) == ClassCounts{912, 256, 36});
  CHECK(reference_counts(D::kRestaurant15, Split::kTest) == ClassCounts{326, 182, 34});
  CHECK(reference_counts(D::kRestaurant16, Split::kTrain) == ClassCounts{1240, 439, 69});
  CHECK(reference_counts(D::kRestaurant16, Split::kTest) == ClassCounts{469, 117, 30});
  CHECK(dataset_from_name("restaurant14") == DatasetName::kRestaurant14);
  CHECK_THROWS_AS(dataset_from_name("imdb"), ConfigError);
}
