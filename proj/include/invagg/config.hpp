#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "invagg/aggregation.hpp"
#include "invagg/harness.hpp"
#include "invagg/synthdata.hpp"
#include "invagg/theory.hpp"

namespace invagg::config {

using Json = nlohmann::ordered_json;

inline constexpr int kSchemaVersion = 1;

/// Scenario recipe. "appendix_d1" builds the two-feature mixture from the
/// count fields; "custom" takes explicit client specs.
struct ScenarioSection {
    std::string recipe = "appendix_d1";
    std::size_t num_clients = 10;
    std::size_t num_malicious = 2;
    std::size_t samples_per_client = 500;
    std::size_t eval_samples = 10000;
    double epsilon_std = 0.3;
    // custom recipe only
    std::vector<synthdata::GaussianClientSpec> clients;
    synthdata::TriggerSpec trigger;
    WeightVector initial_weights;

    bool operator==(const ScenarioSection&) const = default;
};

struct OutputSection {
    std::string dir = "out";
    std::string name = "run";
    bool json = true;
    bool csv = true;

    bool operator==(const OutputSection&) const = default;
};

struct ExperimentFile {
    ScenarioSection scenario;
    harness::TrainingConfig training;
    aggregation::AggregatorConfig aggregator;
    OutputSection output;
    std::uint64_t seed = 1;

    bool operator==(const ExperimentFile&) const = default;
};

/// Throws ValidationError naming the offending dotted path. Unknown keys
/// are rejected.
ExperimentFile from_json(const Json& j);
Json to_json(const ExperimentFile& cfg);

ExperimentFile load_file(const std::filesystem::path& path);

/// Full check: field ranges plus the resolved scenario.
void validate(const ExperimentFile& cfg);

synthdata::ScenarioConfig resolve_scenario(const ExperimentFile& cfg);

/// Built-in presets: appendix_d1_{invariant,fedavg,and_mask,trimmed_mean}.
const std::vector<std::string>& preset_names();
ExperimentFile preset(std::string_view name);

/// Applies "dotted.path=value". The value is parsed as JSON when possible and
/// taken as a string otherwise. Throws ValidationError for unknown paths.
void apply_override(ExperimentFile& cfg, std::string_view assignment);

/// Writes through a temporary file in the same directory, then renames.
void write_atomic(const std::filesystem::path& path, std::string_view contents);

Json to_json(const harness::RunResult& result, const ExperimentFile& cfg);
Json to_json(const theory::BoundCheckReport& report);
Json to_json(const theory::Theorem3Result& result);
Json to_json(const theory::Corollary1Result& result);

}  // namespace invagg::config
