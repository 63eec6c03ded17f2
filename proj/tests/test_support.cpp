#include "kgcrs/config.hpp"
#include "kgcrs/error.hpp"
#include "kgcrs/params.hpp"
#include "kgcrs/tokenizer.hpp"
#include "kgcrs/util.hpp"

#include <doctest.h>

using namespace kgcrs;
using nlohmann::json;

TEST_CASE("tokenizer splits punctuation and keeps specials whole") {
    CHECK(tokenize("Hi, Bob!") == std::vector<std::string>{"hi", ",", "bob", "!"});
    CHECK(tokenize("  try [ITEM] now ") == std::vector<std::string>{"try", "[ITEM]", "now"});
    CHECK(tokenize("#Inception $$starring") ==
          std::vector<std::string>{"#", "inception", "$", "$", "starring"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("[notspecial]") == std::vector<std::string>{"[", "notspecial", "]"});
}

TEST_CASE("vocabulary ids, unknowns and serialization") {
    const std::vector<std::string> texts{"b a", "c a"};
    const auto v = Vocabulary::build(texts);
    CHECK(v.size() == 8 + 3);
    CHECK(v.id("[SEP]") == tok::sep);
    CHECK(v.id("[ITEM]") == tok::item);
    CHECK(v.id("a") == 8);
    CHECK(v.id("zzz") == tok::unk);
    CHECK(v.encode("a zzz c") == std::vector<int>{8, tok::unk, 10});
    const std::vector<int> ids{8, 9};
    CHECK(v.decode(ids) == "a b");
    const auto back = Vocabulary::deserialize(v.serialize());
    CHECK(back.serialize() == v.serialize());
    CHECK_THROWS_AS(v.token(99), Error);
    CHECK_THROWS(Vocabulary::deserialize("junk\n"));
}

TEST_CASE("parameter groups, trainability and bit-exact serialization") {
    Rng rng(1);
    ParameterSet ps;
    auto a = ps.add("a", Group::user, randn(2, 3, 1.0, rng));
    ps.add("b", Group::plm, randn(1, 2, 1.0, rng));
    CHECK(ps.count(Group::user) == 6);
    CHECK(ps.count(Group::plm) == 2);
    CHECK(ps.in_group(Group::tree).empty());
    CHECK_THROWS(ps.add("a", Group::tree, randn(1, 1, 1.0, rng)));
    CHECK(ps.find("b").cols() == 2);
    CHECK_THROWS(ps.find("zzz"));

    ps.set_trainable(Group::user, false);
    CHECK(!a.requires_grad());
    ps.set_trainable(Group::user, true);
    CHECK(a.requires_grad());

    const auto text = ps.serialize(Group::user);
    const auto hash = ps.hash(Group::user);
    a.mutable_value()(0, 0) += 1.0;
    CHECK(ps.hash(Group::user) != hash);
    ps.deserialize(Group::user, text);
    CHECK(ps.hash(Group::user) == hash);
    CHECK_THROWS(ps.deserialize(Group::plm, text));
    CHECK(group_from_name(group_name(Group::prompt)) == Group::prompt);
}

TEST_CASE("sha1 and git blob hashes") {
    CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
    CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("rng is reproducible") {
    Rng a(42), b(42);
    for (int i = 0; i < 5; ++i) CHECK(a.next() == b.next());
    CHECK(a.below(7) < 7);
    const double u = a.uniform();
    CHECK((u >= 0.0 && u < 1.0));
}

TEST_CASE("config defaults and round trip") {
    const RunConfig c;
    CHECK(c.loss.alpha == 0.02);
    CHECK(c.loss.beta == 0.002);
    CHECK(c.tree.depth == 2);
    CHECK(c.tree.degree == 3);
    CHECK(c.train.prompt_len_rec == 10);
    CHECK(c.train.prompt_len_conv == 20);
    CHECK(c.train.batch_rec == 64);
    CHECK(c.train.batch_conv == 8);
    CHECK(c.train.lr_stage1 == 5e-4);
    CHECK(c.train.lr_stage2 == 1e-4);
    CHECK(c.train.patience == 3);
    const auto back = RunConfig::from_json(c.to_json());
    CHECK(back.to_json() == c.to_json());
}

TEST_CASE("invalid configs name the key path") {
    CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"loss", {{"alpha", -1.0}}}}), doctest::Contains("loss.alpha"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"tree", {{"degree", "three"}}}}),
                         doctest::Contains("tree.degree"), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"train", {{"bogus", 1}}}}), doctest::Contains("train.bogus"),
                         ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"nonsense", 1}}), doctest::Contains("nonsense"), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json{{"task", "chat"}}), ConfigError);
    CHECK_THROWS_AS(RunConfig::from_json(json::array()), ConfigError);
    CHECK_THROWS_WITH_AS(RunConfig::from_json(json{{"encoder", {{"d_text", 10}, {"text_heads", 3}}}}),
                         doctest::Contains("encoder.text_heads"), ConfigError);
}
