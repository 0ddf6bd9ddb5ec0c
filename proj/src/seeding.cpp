#include "invagg/seeding.hpp"

#include <array>
#include <vector>

namespace invagg {

std::uint64_t derive_seed(std::uint64_t master, std::span<const std::uint64_t> path) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * (path.size() + 1));
    auto push = [&words](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(master);
    for (auto p : path) push(p);

    std::seed_seq seq(words.begin(), words.end());
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                          std::initializer_list<std::uint64_t> path) {
    std::vector<std::uint64_t> full;
    full.reserve(path.size() + 1);
    full.push_back(static_cast<std::uint64_t>(stream));
    full.insert(full.end(), path.begin(), path.end());
    return derive_seed(master, std::span<const std::uint64_t>(full));
}

}  // namespace invagg
