#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

namespace invagg {

using Engine = std::mt19937_64;

/// Stream tags used to split a master seed into independent streams.
/// Values are part of the reproducibility contract; do not renumber.
enum class Stream : std::uint64_t {
    client_data = 1,
    client_offset = 2,
    local_training = 3,
    client_sampling = 4,
    eval_main = 5,
    eval_backdoor = 6,
    aggregator_noise = 7,
    monte_carlo = 8,
};

/// Deterministically mixes a master seed with a path of identifiers
/// (std::seed_seq over the 32-bit halves). Distinct paths give unrelated
/// seeds, so adding clients or rounds never shifts existing streams.
std::uint64_t derive_seed(std::uint64_t master, std::span<const std::uint64_t> path);

std::uint64_t derive_seed(std::uint64_t master, Stream stream,
                          std::initializer_list<std::uint64_t> path = {});

inline Engine make_engine(std::uint64_t seed) { return Engine{seed}; }

}  // namespace invagg
