#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace kgcrs {

/// Seeded generator with platform-independent draws. The standard
/// distributions are implementation-defined, so the few we need are written
/// out against the raw 64-bit engine.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    double uniform();  // [0, 1)
    double normal();   // standard normal, Box-Muller
    std::uint64_t below(std::uint64_t n);

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

/// Lowercase hex SHA-1.
std::string sha1_hex(std::string_view data);

/// Git blob object id: sha1("blob <size>\0" + content).
std::string git_blob_hash(std::string_view content);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace kgcrs
