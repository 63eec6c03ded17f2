#include "kgcrs/corpus.hpp"
#include "kgcrs/error.hpp"

#include <doctest.h>

#include <set>

using namespace kgcrs;

namespace {

Dialogue alternating(const std::string& id, int turns) {
    Dialogue d;
    d.id = id;
    for (int i = 0; i < turns; ++i) {
        Utterance u;
        u.speaker = i % 2 == 0 ? Speaker::seeker : Speaker::recommender;
        u.text = "turn " + std::to_string(i);
        u.entities = {"e" + std::to_string(i % 3)};
        d.utterances.push_back(u);
    }
    return d;
}

std::vector<Dialogue> many(int n) {
    std::vector<Dialogue> out;
    for (int i = 0; i < n; ++i) out.push_back(alternating("d" + std::to_string(i), 4));
    return out;
}

}  // namespace

TEST_CASE("well-formed records parse in order") {
    const std::string text =
        R"({"id":"a","utterances":[{"speaker":"seeker","text":"hi","entities":[],"items":[]},{"speaker":"recommender","text":"yo","entities":["X"],"items":["X"]}]})"
        "\n"
        R"({"id":"b","utterances":[{"speaker":"seeker","text":"hi"},{"speaker":"seeker","text":"again"}]})"
        "\n";
    const auto ds = parse_dialogues(text);
    REQUIRE(ds.size() == 2);
    CHECK(ds[0].id == "a");
    CHECK(ds[0].utterances[1].items == std::vector<std::string>{"X"});
    CHECK(ds[1].utterances[1].speaker == Speaker::seeker);
}

TEST_CASE("schema violations name the record") {
    CHECK_THROWS_WITH_AS(parse_dialogues(R"({"id":"bad","utterances":[{"text":"hi"},{"speaker":"seeker","text":"x"}]})"),
                         doctest::Contains("bad"), ParseError);
    CHECK_THROWS_WITH_AS(parse_dialogues(R"({"id":"bad","utterances":[{"text":"hi"},{"speaker":"seeker","text":"x"}]})"),
                         doctest::Contains("speaker"), ParseError);
    CHECK_THROWS_WITH_AS(
        parse_dialogues(R"({"id":"empty","utterances":[{"speaker":"seeker","text":""},{"speaker":"seeker","text":"x"}]})"),
        doctest::Contains("empty"), ParseError);
    CHECK_THROWS_AS(parse_dialogues(R"({"id":"short","utterances":[{"speaker":"seeker","text":"x"}]})"), ParseError);
    CHECK_THROWS_AS(parse_dialogues("not json\n"), ParseError);
    CHECK_THROWS_AS(parse_dialogues(R"({"id":"s","utterances":[{"speaker":"bot","text":"x"},{"speaker":"seeker","text":"y"}]})"),
                    ParseError);
}

TEST_CASE("jsonl round trip") {
    const auto ds = many(3);
    const auto back = parse_dialogues(to_jsonl(ds));
    REQUIRE(back.size() == 3);
    CHECK(to_jsonl(back) == to_jsonl(ds));
}

TEST_CASE("turn expansion") {
    SUBCASE("four alternating turns give contexts of 1 and 3") {
        const auto ex = expand_turns(alternating("d", 4));
        REQUIRE(ex.size() == 2);
        CHECK(ex[0].context.size() == 1);
        CHECK(ex[1].context.size() == 3);
        CHECK(ex[0].id == "d#1");
        CHECK(ex[1].target_response == "turn 3");
    }
    SUBCASE("all seeker turns give nothing") {
        auto d = alternating("d", 4);
        for (auto& u : d.utterances) u.speaker = Speaker::seeker;
        CHECK(expand_turns(d).empty());
    }
    SUBCASE("a recommender opener is not a target") {
        auto d = alternating("d", 2);
        d.utterances[0].speaker = Speaker::recommender;
        CHECK(expand_turns(d).size() == 1);
    }
    SUBCASE("six turns match prefix enumeration") {
        const auto d = alternating("d", 6);
        const auto ex = expand_turns(d);
        std::vector<std::size_t> expect;
        for (std::size_t n = 1; n < d.utterances.size(); ++n) {
            if (d.utterances[n].speaker == Speaker::recommender) expect.push_back(n);
        }
        REQUIRE(ex.size() == expect.size());
        for (std::size_t i = 0; i < ex.size(); ++i) {
            REQUIRE(ex[i].context.size() == expect[i]);
            for (std::size_t j = 0; j < expect[i]; ++j) CHECK(ex[i].context[j].text == d.utterances[j].text);
            if (i > 0) CHECK(ex[i].context.size() > ex[i - 1].context.size());
        }
    }
}

TEST_CASE("mentioned entities keep first-mention order without duplicates") {
    const auto ex = expand_turns(alternating("d", 6));
    for (const auto& e : ex) {
        std::set<std::string> seen(e.mentioned_entities.begin(), e.mentioned_entities.end());
        CHECK(seen.size() == e.mentioned_entities.size());
    }
    CHECK(ex.back().mentioned_entities == std::vector<std::string>{"e0", "e1", "e2"});
}

TEST_CASE("expansion is pure") {
    const auto d = alternating("d", 6);
    const auto a = expand_turns(d);
    const auto b = expand_turns(d);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].mentioned_entities == b[i].mentioned_entities);
    }
}

TEST_CASE("split sizes and determinism") {
    auto sizes = [](const Split& s) { return std::vector<std::size_t>{s.train.size(), s.valid.size(), s.test.size()}; };
    CHECK(sizes(split_dialogues(many(10), 1)) == std::vector<std::size_t>{8, 1, 1});
    CHECK(sizes(split_dialogues(many(101), 1)) == std::vector<std::size_t>{80, 10, 11});
    CHECK_THROWS_AS(split_dialogues(many(9), 1), Error);

    const auto a = split_dialogues(many(30), 4);
    const auto b = split_dialogues(many(30), 4);
    auto ids = [](const std::vector<Dialogue>& v) {
        std::vector<std::string> out;
        for (const auto& d : v) out.push_back(d.id);
        return out;
    };
    CHECK(ids(a.train) == ids(b.train));
    CHECK(ids(a.test) == ids(b.test));
    std::set<std::string> all;
    for (const auto* part : {&a.train, &a.valid, &a.test}) {
        for (const auto& d : *part) CHECK(all.insert(d.id).second);
    }
    CHECK(all.size() == 30);
}

TEST_CASE("label vectors") {
    const std::vector<RawTriple> raw{{"i0", "r", "x"}, {"i1", "r", "x"}, {"i2", "r", "x"}, {"i3", "r", "x"},
                                     {"i4", "r", "x"}};
    const std::vector<std::string> items{"i0", "i1", "i2", "i3", "i4"};
    const auto g = KnowledgeGraph::from_triples(raw).with_items(items);
    Example ex;
    ex.id = "e";
    CHECK(make_label_vector(ex, g) == std::vector<double>(5, 0.0));
    ex.target_items = {"i2"};
    CHECK(make_label_vector(ex, g) == std::vector<double>{0, 0, 1, 0, 0});
    ex.target_items = {"i4", "i0"};
    const auto y = make_label_vector(ex, g);
    CHECK(y[0] + y[1] + y[2] + y[3] + y[4] == 2.0);
    CHECK(target_item_indices(ex, g) == std::vector<int>{0, 4});
    ex.target_items = {"x"};
    CHECK_THROWS_AS(make_label_vector(ex, g), Error);
}
