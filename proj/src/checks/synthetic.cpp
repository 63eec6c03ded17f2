#include "kgcrs/checks/synthetic.hpp"

#include "kgcrs/error.hpp"
#include "kgcrs/util.hpp"

#include <array>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <set>

namespace kgcrs::checks {

namespace {

constexpr int kMovies = 30;
constexpr int kGenres = 10;

constexpr std::array<const char*, 20> kOnsets{"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                              "s", "t", "v", "z", "br", "tr", "st", "gr", "pl", "dr"};
constexpr std::array<const char*, 6> kVowels{"a", "e", "i", "o", "u", "ai"};
constexpr std::array<const char*, 5> kCodas{"", "n", "r", "s", "l"};

class NameMaker {
public:
    explicit NameMaker(Rng& rng) : rng_(rng) {}

    std::string word(int syllables) {
        for (;;) {
            std::string w;
            for (int i = 0; i < syllables; ++i) {
                w += kOnsets[rng_.below(kOnsets.size())];
                w += kVowels[rng_.below(kVowels.size())];
                if (i + 1 == syllables) w += kCodas[rng_.below(kCodas.size())];
            }
            if (used_.insert(w).second) {
                w[0] = static_cast<char>(w[0] - 'a' + 'A');
                return w;
            }
        }
    }

private:
    Rng& rng_;
    std::set<std::string> used_;
};

template <class T>
const T& pick(const std::vector<T>& v, Rng& rng) {
    return v[static_cast<std::size_t>(rng.below(v.size()))];
}

}  // namespace

SyntheticWorld make_world(std::uint64_t seed) {
    Rng rng(seed);
    NameMaker names(rng);
    SyntheticWorld w;
    for (int i = 0; i < kMovies; ++i) w.movies.push_back(names.word(3));
    for (int i = 0; i < kMovies; ++i) w.actors.push_back(names.word(2) + " " + names.word(2));
    for (int i = 0; i < kMovies; ++i) w.directors.push_back(names.word(2) + " " + names.word(3));
    for (int i = 0; i < kGenres; ++i) w.genres.push_back(names.word(2) + "core");
    for (int i = 0; i < kMovies; ++i) {
        const auto u = static_cast<std::size_t>(i);
        w.triples.push_back({w.movies[u], "starring", w.actors[u]});
        w.triples.push_back({w.movies[u], "directed_by", w.directors[u]});
        w.triples.push_back({w.movies[u], "has_genre", w.genres[u % kGenres]});
        w.triples.push_back({w.directors[u], "worked_with", w.actors[(u + 1) % kMovies]});
    }
    return w;
}

std::vector<Dialogue> make_dialogues(const SyntheticWorld& w, int count, std::uint64_t seed,
                                     const std::string& id_prefix) {
    if (count < 0) throw Error("make_dialogues: negative count");
    Rng rng(seed);
    const std::vector<std::string> openers{"hi ! i am in the mood for a {} movie .", "hello , any {} films you like ?",
                                           "i enjoy {} movies .", "hey , looking for some {} tonight ."};
    const std::vector<std::string> actor_lines{"i really like {} .", "anything with {} ?", "i am a fan of {} .",
                                               "something starring {} would be nice ."};
    const std::vector<std::string> director_lines{"i love the work of {} .", "anything directed by {} ?",
                                                  "something by {} would be nice .", "i am a fan of {} ."};
    const std::vector<std::string> recs{"you should watch {} .", "how about {} ?", "try {} , it is great .",
                                        "i recommend {} ."};
    const std::vector<std::string> follow{"i have seen that one .", "seen it already .", "not that one ."};
    const std::vector<std::string> seeker_bye{"thanks , bye !", "great , thank you .", "sounds good , thanks ."};
    const std::vector<std::string> sys_bye{"enjoy the movie !", "have a nice day !", "you are welcome , enjoy !"};

    auto fill = [](const std::string& tmpl, const std::string& value) {
        auto at = tmpl.find("{}");
        return tmpl.substr(0, at) + value + tmpl.substr(at + 2);
    };
    struct Person {
        std::string name;
        int movie;
        bool actor;
    };
    auto person = [&](int movie) {
        const bool actor = rng.below(2) == 0;
        const auto u = static_cast<std::size_t>(movie);
        return Person{actor ? w.actors[u] : w.directors[u], movie, actor};
    };
    auto person_line = [&](const Person& p) { return fill(pick(p.actor ? actor_lines : director_lines, rng), p.name); };

    std::vector<Dialogue> out;
    for (int i = 0; i < count; ++i) {
        Dialogue d;
        d.id = id_prefix + std::to_string(i);
        const int m1 = static_cast<int>(rng.below(w.movies.size()));
        int m2 = static_cast<int>(rng.below(w.movies.size() - 1));
        if (m2 >= m1) ++m2;
        const auto& genre = pick(w.genres, rng);
        const auto p1 = person(m1);
        const auto p2 = person(m2);
        const auto& movie1 = w.movies[static_cast<std::size_t>(m1)];
        const auto& movie2 = w.movies[static_cast<std::size_t>(m2)];

        d.utterances.push_back({Speaker::seeker, fill(pick(openers, rng), genre) + " " + person_line(p1),
                                {genre, p1.name}, {}});
        d.utterances.push_back({Speaker::recommender, fill(pick(recs, rng), movie1), {movie1}, {movie1}});
        d.utterances.push_back({Speaker::seeker, pick(follow, rng) + " " + person_line(p2), {p2.name}, {}});
        d.utterances.push_back({Speaker::recommender, fill(pick(recs, rng), movie2), {movie2}, {movie2}});
        d.utterances.push_back({Speaker::seeker, pick(seeker_bye, rng), {}, {}});
        d.utterances.push_back({Speaker::recommender, pick(sys_bye, rng), {}, {}});
        out.push_back(std::move(d));
    }
    return out;
}

void write_fixture(const std::string& dir, const SyntheticWorld& w, const std::vector<Dialogue>& dialogues,
                   const std::string& corpus_name) {
    std::filesystem::create_directories(dir);
    std::string triples;
    for (const auto& t : w.triples) triples += t.head + "\t" + t.relation + "\t" + t.tail + "\n";
    std::string items;
    for (const auto& m : w.movies) items += m + "\n";
    write_file(dir + "/triples.tsv", triples);
    write_file(dir + "/items.txt", items);
    write_file(dir + "/" + corpus_name, to_jsonl(dialogues));
}

KnowledgeGraph random_graph(Rng& rng, int entities, int relations, int triples, bool inverse_edges) {
    if (entities < 2 || relations < 1 || triples < 1) throw Error("random_graph: sizes too small");
    auto name = [](const char* p, std::uint64_t i) { return std::string(p) + std::to_string(i); };
    std::vector<RawTriple> raw;
    auto add = [&](std::uint64_t h) {
        std::uint64_t t = rng.below(static_cast<std::uint64_t>(entities - 1));
        if (t >= h) ++t;
        raw.push_back({name("e", h), name("r", rng.below(static_cast<std::uint64_t>(relations))), name("e", t)});
    };
    for (int i = 0; i < entities; ++i) add(static_cast<std::uint64_t>(i));
    for (int i = entities; i < triples; ++i) add(rng.below(static_cast<std::uint64_t>(entities)));
    return KnowledgeGraph::from_triples(raw, inverse_edges);
}

std::string fresh_temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    const auto dir = std::filesystem::temp_directory_path() /
                     ("kgcrs_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir.string();
}

RunConfig tiny_config(const std::string& dir, const std::string& corpus_name) {
    RunConfig c;
    c.paths.kg = dir + "/triples.tsv";
    c.paths.items = dir + "/items.txt";
    c.paths.corpus = dir + "/" + corpus_name;
    c.paths.output_dir = dir + "/run";
    c.encoder.d_text = 8;
    c.encoder.d_ent = 8;
    c.encoder.text_layers = 1;
    c.encoder.text_heads = 2;
    c.encoder.max_len = 64;
    c.encoder.rgcn_bases = 4;
    c.backbone.d_model = 8;
    c.backbone.layers = 1;
    c.backbone.heads = 2;
    c.backbone.max_positions = 128;
    c.backbone.encoder_pretrain_steps = 2;
    c.backbone.decoder_pretrain_steps = 2;
    c.backbone.pretrain_batch = 2;
    c.model.d_fusion = 8;
    c.model.d_align = 8;
    c.train.batch_rec = 4;
    c.train.batch_conv = 2;
    c.train.stage1_steps = 2;
    c.train.stage2_steps = 2;
    c.train.prompt_len_rec = 2;
    c.train.prompt_len_conv = 2;
    c.eval.rec_response_source = "gold";
    c.eval.max_new_tokens = 3;
    c.validate();
    return c;
}

}  // namespace kgcrs::checks
