#include "kgcrs/checks/synthetic.hpp"
#include "kgcrs/util.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kBinary = KGCRS_CLI_PATH;
const std::string kSource = KGCRS_SOURCE_DIR;

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

Run run(const std::string& args, const std::string& scratch) {
    const auto out = scratch + "/stdout.txt";
    const auto err = scratch + "/stderr.txt";
    const int status = std::system((kBinary + " " + args + " >" + out + " 2>" + err).c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = kgcrs::read_file(out);
    r.err = kgcrs::read_file(err);
    return r;
}

std::string write_config(const std::string& dir, const json& j) {
    const auto path = dir + "/cfg.json";
    std::ofstream(path) << j.dump(2);
    return path;
}

json toy_config() {
    std::ifstream in(kSource + "/configs/toy.json");
    auto j = json::parse(in);
    for (const char* key : {"kg", "items", "corpus"}) {
        j["paths"][key] = (fs::path(kSource) / "configs" / j["paths"][key].get<std::string>()).lexically_normal().string();
    }
    return j;
}

struct Scratch {
    std::string dir = kgcrs::checks::fresh_temp_dir("cli");
    ~Scratch() { fs::remove_all(dir); }
};

}  // namespace

TEST_CASE("train writes a checkpoint, a log and a report") {
    Scratch s;
    const auto out = s.dir + "/run";
    const auto r = run("train --task rec --config " + kSource + "/configs/toy.json --out " + out, s.dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(fs::exists(out + "/checkpoint/manifest.json"));
    CHECK(fs::file_size(out + "/train_log.jsonl") > 0);

    std::ifstream log(out + "/train_log.jsonl");
    std::string first;
    std::getline(log, first);
    CHECK(json::parse(first).contains("config"));
    const auto report = json::parse(kgcrs::read_file(out + "/report.json"));
    CHECK(report.contains("config"));

    const auto e = run("eval --config " + kSource + "/configs/toy.json --out " + out + " --checkpoint " + out +
                           "/checkpoint --split valid",
                       s.dir);
    INFO(e.err);
    CHECK(e.code == 0);
    CHECK(fs::exists(out + "/eval_valid.json"));
}

TEST_CASE("build-trees emits one line per example and a cache key") {
    Scratch s;
    const auto out = s.dir + "/trees";
    const auto r = run("build-trees --config " + kSource + "/configs/toy.json --out " + out, s.dir);
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto manifest = json::parse(kgcrs::read_file(out + "/trees_manifest.json"));
    CHECK(manifest.contains("cache_key"));
    std::ifstream in(out + "/trees.jsonl");
    int lines = 0;
    for (std::string line; std::getline(in, line);) {
        CHECK(json::parse(line).contains("trees"));
        ++lines;
    }
    CHECK(lines > 0);
}

TEST_CASE("selftest passes") {
    Scratch s;
    const auto r = run("selftest --seed 3", s.dir);
    INFO(r.out);
    CHECK(r.code == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("invalid configuration exits 2 and names the key") {
    Scratch s;
    auto j = toy_config();
    j["loss"]["alpha"] = -0.5;
    const auto r = run("train --config " + write_config(s.dir, j), s.dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("loss.alpha") != std::string::npos);

    auto k = toy_config();
    k["train"]["bogus"] = 1;
    const auto r2 = run("train --config " + write_config(s.dir, k), s.dir);
    CHECK(r2.code == 2);
    CHECK(r2.err.find("train.bogus") != std::string::npos);

    CHECK(run("train --config " + s.dir + "/missing.json", s.dir).code == 2);
    CHECK(run("sweep --config " + kSource + "/configs/toy.json --axis gamma --values 1", s.dir).code == 2);
}

TEST_CASE("usage errors exit 2") {
    Scratch s;
    CHECK(run("frobnicate", s.dir).code == 2);
    CHECK(run("", s.dir).code == 2);
    CHECK(run("train", s.dir).code == 2);
    CHECK(run("train --config " + kSource + "/configs/toy.json --task chat", s.dir).code == 2);
}

TEST_CASE("missing data files exit 1") {
    Scratch s;
    auto j = toy_config();
    j["paths"]["corpus"] = s.dir + "/absent.jsonl";
    const auto r = run("train --config " + write_config(s.dir, j) + " --out " + s.dir + "/run", s.dir);
    CHECK(r.code == 1);
    CHECK(r.err.find("absent.jsonl") != std::string::npos);
}
