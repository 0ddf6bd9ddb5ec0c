#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "invagg/aggregation.hpp"
#include "invagg/model.hpp"
#include "invagg/synthdata.hpp"
#include "invagg/types.hpp"

namespace invagg::harness {

struct TrainingConfig {
    double lr = 0.1;
    double epochs = 1.0;
    /// 0 means full batch.
    std::size_t batch_size = 0;
    std::size_t rounds = 50;
    /// 0 means every client participates.
    std::size_t clients_per_round = 0;
    /// Worker threads for client training; results do not depend on it.
    std::size_t threads = 1;

    bool operator==(const TrainingConfig&) const = default;
};

void validate(const TrainingConfig& cfg, std::size_t num_clients);

/// Materialized scenario: per-client training data plus held-out evaluation
/// sets. Malicious clients hold backdoor-distribution samples only.
struct Federation {
    synthdata::ScenarioConfig scenario;
    std::vector<Dataset> client_data;
    Dataset main_eval;
    Dataset backdoor_eval;
};

Federation build_federation(const synthdata::ScenarioConfig& scenario);

/// Uniform without replacement, returned in ascending id order.
std::vector<std::size_t> sample_clients(std::size_t num_clients, std::size_t clients_per_round,
                                        std::size_t round_index, std::uint64_t master_seed);

struct Accuracy {
    double main = 0.0;
    /// Fraction of triggered samples classified as the target label.
    double backdoor = 0.0;
};

Accuracy evaluate(std::span<const double> w, const Dataset& main_set, const Dataset& backdoor_set);

struct RoundRecord {
    std::size_t round_index = 0;
    WeightVector weights_after;
    double acc_main = 0.0;
    double acc_backdoor = 0.0;
    Vector sign_consistency;
    /// Share of coordinates the mask let through; 1 for unmasked aggregators.
    double mask_pass_fraction = 1.0;
    double aggregate_norm = 0.0;
    std::vector<std::size_t> participants;
};

struct RoundOutput {
    WeightVector weights;
    RoundRecord record;
};

/// Carries the round index of a failure inside the loop.
class RoundError : public std::runtime_error {
public:
    RoundError(std::size_t round, const std::string& what)
        : std::runtime_error("round " + std::to_string(round) + ": " + what), round_(round) {}
    std::size_t round() const noexcept { return round_; }

private:
    std::size_t round_;
};

RoundOutput run_round(const Federation& fed, std::span<const double> w,
                      const aggregation::AggregatorConfig& aggregator,
                      std::span<const std::size_t> sampled_clients, const TrainingConfig& training,
                      std::size_t round_index, std::uint64_t master_seed);

struct RunSummary {
    WeightVector final_weights;
    double final_acc_main = 0.0;
    double final_acc_backdoor = 0.0;
    double last10_acc_main = 0.0;
    double last10_acc_backdoor = 0.0;
};

struct RunResult {
    std::vector<RoundRecord> rounds;
    RunSummary summary;
};

RunResult run_experiment(const synthdata::ScenarioConfig& scenario,
                         const aggregation::AggregatorConfig& aggregator,
                         const TrainingConfig& training, std::uint64_t master_seed);

RunResult run_experiment(const Federation& fed, const aggregation::AggregatorConfig& aggregator,
                         const TrainingConfig& training, std::uint64_t master_seed);

/// Columns: round, w_0..w_{d-1}, acc_main, acc_backdoor, mask_pass_fraction.
void write_csv(std::ostream& out, const RunResult& result);

}  // namespace invagg::harness
