// Regenerates the shipped synthetic fixture under data/.

#include "kgcrs/checks/synthetic.hpp"

#include <CLI11.hpp>

#include <exception>
#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Write the synthetic movie-domain fixture"};
    std::string out = "data";
    std::uint64_t seed = 7;
    int dialogues = 50;
    int toy_dialogues = 20;
    int ablation_dialogues = 150;
    app.add_option("--out", out, "Output directory");
    app.add_option("--seed", seed, "Generator seed");
    app.add_option("--dialogues", dialogues, "Dialogues in dialogues.jsonl");
    app.add_option("--toy-dialogues", toy_dialogues, "Dialogues in toy_dialogues.jsonl");
    app.add_option("--ablation-dialogues", ablation_dialogues, "Dialogues in ablation_dialogues.jsonl");
    CLI11_PARSE(app, argc, argv);
    try {
        const auto world = kgcrs::checks::make_world(seed);
        kgcrs::checks::write_fixture(out, world, kgcrs::checks::make_dialogues(world, dialogues, seed + 1),
                                     "dialogues.jsonl");
        kgcrs::checks::write_fixture(out, world, kgcrs::checks::make_dialogues(world, toy_dialogues, seed + 2, "t"),
                                     "toy_dialogues.jsonl");
        kgcrs::checks::write_fixture(out, world,
                                     kgcrs::checks::make_dialogues(world, ablation_dialogues, seed + 3, "a"),
                                     "ablation_dialogues.jsonl");
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
