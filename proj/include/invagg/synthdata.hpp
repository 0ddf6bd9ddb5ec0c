#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "invagg/types.hpp"

namespace invagg::synthdata {

/// One client's data model: x_k ~ N((2y - 1) mu_k, sigma_k), y ~ Bernoulli(label_balance).
/// sigma is a standard deviation.
struct GaussianClientSpec {
    std::size_t client_id = 0;
    bool is_malicious = false;
    Vector mu;
    Vector sigma;
    double label_balance = 0.5;

    bool operator==(const GaussianClientSpec&) const = default;
};

struct TriggerSpec {
    std::size_t feature_index = 1;
    /// Shared label-correlated mean of the trigger feature on malicious clients.
    double trigger_mu = 1.0;
    double trigger_sigma = 1.0;
    int target_label = 1;

    bool operator==(const TriggerSpec&) const = default;
};

struct ScenarioConfig {
    std::size_t num_clients = 0;
    std::size_t num_malicious = 0;
    std::size_t dim = 0;
    /// Indexed by position; client_id of entry i is i.
    std::vector<GaussianClientSpec> clients;
    std::size_t samples_per_client = 1;
    std::size_t eval_samples = 10000;
    WeightVector initial_weights;
    TriggerSpec trigger;
    std::uint64_t master_seed = 0;
};

void validate(const GaussianClientSpec& spec);
/// Throws ValidationError with a "scenario.*" field name.
void validate(const ScenarioConfig& scenario);

Dataset sample_client_dataset(const GaussianClientSpec& spec, std::size_t n, std::uint64_t seed);

/// Training data of client `index`, seeded from (master_seed, client id) only.
Dataset client_dataset(const ScenarioConfig& scenario, std::size_t index);

struct AppendixD1Params {
    std::size_t num_clients = 10;
    std::size_t num_malicious = 2;
    std::size_t samples_per_client = 500;
    std::size_t eval_samples = 10000;
    /// Std of the per-client offset on the benign x0 mean.
    double epsilon_std = 0.3;
};

/// Two-feature mixture. Benign clients (ids 0 .. N-N'-1):
///   x0 ~ N((3 + eps_i)(2y-1), 1), x1 ~ N(0, 1), eps_i ~ N(0, epsilon_std) drawn once.
/// Malicious clients (the last N'):
///   x0 ~ N(-3 (2y-1), 3), x1 ~ N((2y-1), 1).
ScenarioConfig make_appendix_d1_scenario(std::uint64_t seed, const AppendixD1Params& params = {});

/// |(1/N) sum_i sign(mu_{i,k})|.
double feature_invariance(std::span<const GaussianClientSpec> specs, std::size_t k);

/// Triggered samples labelled with the target label y'. Non-trigger features
/// follow `base_spec` for class 1 - y'; the trigger feature follows
/// N((2y'-1) trigger_mu, trigger_sigma).
Dataset backdoor_eval_set(const TriggerSpec& trigger, const GaussianClientSpec& base_spec,
                          std::size_t n, std::uint64_t seed);

/// Held-out benign samples, drawn round-robin over the benign clients.
Dataset main_eval_set(const ScenarioConfig& scenario, std::size_t n, std::uint64_t seed);

/// Header f0..f{d-1},label.
void write_csv(std::ostream& out, const Dataset& data);

}  // namespace invagg::synthdata
