#include "invagg/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <thread>

#include "invagg/seeding.hpp"

namespace invagg::harness {

void validate(const TrainingConfig& cfg, std::size_t num_clients) {
    if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw ValidationError("training.lr", "must be positive");
    if (!(cfg.epochs >= 0.0) || !std::isfinite(cfg.epochs)) {
        throw ValidationError("training.epochs", "must be >= 0");
    }
    if (cfg.rounds == 0) throw ValidationError("training.rounds", "must be >= 1");
    if (cfg.clients_per_round > num_clients) {
        throw ValidationError("training.clients_per_round", "exceeds num_clients");
    }
    if (cfg.threads == 0) throw ValidationError("training.threads", "must be >= 1");
}

Federation build_federation(const synthdata::ScenarioConfig& scenario) {
    synthdata::validate(scenario);
    Federation fed;
    fed.scenario = scenario;
    fed.client_data.reserve(scenario.num_clients);
    for (std::size_t i = 0; i < scenario.num_clients; ++i) {
        fed.client_data.push_back(synthdata::client_dataset(scenario, i));
    }
    const std::uint64_t seed = scenario.master_seed;
    fed.main_eval = synthdata::main_eval_set(scenario, scenario.eval_samples,
                                             derive_seed(seed, Stream::eval_main));
    const auto base = std::find_if(scenario.clients.begin(), scenario.clients.end(),
                                   [](const auto& c) { return !c.is_malicious; });
    fed.backdoor_eval = synthdata::backdoor_eval_set(scenario.trigger, *base, scenario.eval_samples,
                                                     derive_seed(seed, Stream::eval_backdoor));
    return fed;
}

std::vector<std::size_t> sample_clients(std::size_t num_clients, std::size_t clients_per_round,
                                        std::size_t round_index, std::uint64_t master_seed) {
    if (clients_per_round > num_clients) {
        throw std::invalid_argument("sample_clients: clients_per_round exceeds the client count");
    }
    std::vector<std::size_t> all(num_clients);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (clients_per_round == num_clients) return all;
    std::vector<std::size_t> picked;
    picked.reserve(clients_per_round);
    Engine rng = make_engine(derive_seed(master_seed, Stream::client_sampling, {round_index}));
    std::sample(all.begin(), all.end(), std::back_inserter(picked), clients_per_round, rng);
    return picked;
}

Accuracy evaluate(std::span<const double> w, const Dataset& main_set, const Dataset& backdoor_set) {
    if (main_set.empty() || backdoor_set.empty()) {
        throw std::invalid_argument("evaluate: evaluation sets must be nonempty");
    }
    auto accuracy = [&](const Dataset& data) {
        std::size_t hits = 0;
        for (const auto& s : data) hits += model::predict(w, s.features) == s.label ? 1 : 0;
        return static_cast<double>(hits) / static_cast<double>(data.size());
    };
    return {accuracy(main_set), accuracy(backdoor_set)};
}

namespace {

void train_clients(const Federation& fed, std::span<const double> w,
                   std::span<const std::size_t> sampled, const TrainingConfig& training,
                   std::size_t round_index, std::uint64_t master_seed,
                   std::vector<aggregation::ClientUpdate>& updates) {
    const model::LocalTrainConfig local{training.lr, training.epochs, training.batch_size};
    auto train_one = [&](std::size_t slot) {
        const std::size_t id = sampled[slot];
        const Dataset& data = fed.client_data.at(id);
        updates[slot].client_id = id;
        updates[slot].sample_count = data.size();
        updates[slot].gradient = model::local_train(
            w, data, local, derive_seed(master_seed, Stream::local_training, {round_index, id}));
    };

    const std::size_t workers = std::min(training.threads, sampled.size());
    if (workers <= 1) {
        for (std::size_t slot = 0; slot < sampled.size(); ++slot) train_one(slot);
        return;
    }
    // Each slot is written by exactly one worker, so output does not depend on scheduling.
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back([&] {
                for (std::size_t slot = next++; slot < sampled.size(); slot = next++) {
                    try {
                        train_one(slot);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

RoundOutput run_round(const Federation& fed, std::span<const double> w,
                      const aggregation::AggregatorConfig& aggregator,
                      std::span<const std::size_t> sampled_clients, const TrainingConfig& training,
                      std::size_t round_index, std::uint64_t master_seed) {
    if (sampled_clients.empty()) throw RoundError(round_index, "no clients sampled");
    try {
        std::vector<aggregation::ClientUpdate> updates(sampled_clients.size());
        train_clients(fed, w, sampled_clients, training, round_index, master_seed, updates);

        const auto agg = aggregation::aggregate(
            updates, aggregator, fed.scenario.num_malicious,
            derive_seed(master_seed, Stream::aggregator_noise, {round_index}));

        RoundOutput out;
        out.weights.assign(w.begin(), w.end());
        for (std::size_t k = 0; k < out.weights.size(); ++k) out.weights[k] -= agg.value[k];

        RoundRecord& rec = out.record;
        rec.round_index = round_index;
        rec.weights_after = out.weights;
        const Accuracy acc = evaluate(out.weights, fed.main_eval, fed.backdoor_eval);
        rec.acc_main = acc.main;
        rec.acc_backdoor = acc.backdoor;
        rec.sign_consistency = aggregation::sign_consistency_all(updates);
        if (agg.mask) {
            const double passed = std::accumulate(agg.mask->begin(), agg.mask->end(), 0.0);
            rec.mask_pass_fraction = passed / static_cast<double>(agg.mask->size());
        }
        double sq = 0.0;
        for (double v : agg.value) sq += v * v;
        rec.aggregate_norm = std::sqrt(sq);
        rec.participants.assign(sampled_clients.begin(), sampled_clients.end());
        return out;
    } catch (const RoundError&) {
        throw;
    } catch (const std::exception& e) {
        throw RoundError(round_index, e.what());
    }
}

RunResult run_experiment(const Federation& fed, const aggregation::AggregatorConfig& aggregator,
                         const TrainingConfig& training, std::uint64_t master_seed) {
    aggregation::validate(aggregator);
    validate(training, fed.scenario.num_clients);
    const std::size_t per_round =
        training.clients_per_round == 0 ? fed.scenario.num_clients : training.clients_per_round;

    RunResult result;
    result.rounds.reserve(training.rounds);
    WeightVector w = fed.scenario.initial_weights;
    for (std::size_t t = 1; t <= training.rounds; ++t) {
        const auto sampled = sample_clients(fed.scenario.num_clients, per_round, t, master_seed);
        RoundOutput out = run_round(fed, w, aggregator, sampled, training, t, master_seed);
        w = std::move(out.weights);
        result.rounds.push_back(std::move(out.record));
    }

    RunSummary& s = result.summary;
    s.final_weights = w;
    s.final_acc_main = result.rounds.back().acc_main;
    s.final_acc_backdoor = result.rounds.back().acc_backdoor;
    const std::size_t tail = std::min<std::size_t>(10, result.rounds.size());
    for (std::size_t i = result.rounds.size() - tail; i < result.rounds.size(); ++i) {
        s.last10_acc_main += result.rounds[i].acc_main;
        s.last10_acc_backdoor += result.rounds[i].acc_backdoor;
    }
    s.last10_acc_main /= static_cast<double>(tail);
    s.last10_acc_backdoor /= static_cast<double>(tail);
    return result;
}

RunResult run_experiment(const synthdata::ScenarioConfig& scenario,
                         const aggregation::AggregatorConfig& aggregator,
                         const TrainingConfig& training, std::uint64_t master_seed) {
    aggregation::validate(aggregator);
    validate(training, scenario.num_clients);
    return run_experiment(build_federation(scenario), aggregator, training, master_seed);
}

void write_csv(std::ostream& out, const RunResult& result) {
    const std::size_t d = result.rounds.empty() ? 0 : result.rounds.front().weights_after.size();
    out << "round";
    for (std::size_t k = 0; k < d; ++k) out << ",w_" << k;
    out << ",acc_main,acc_backdoor,mask_pass_fraction\n";
    const auto old_precision = out.precision(17);
    for (const auto& r : result.rounds) {
        out << r.round_index;
        for (double v : r.weights_after) out << ',' << v;
        out << ',' << r.acc_main << ',' << r.acc_backdoor << ',' << r.mask_pass_fraction << '\n';
    }
    out.precision(old_precision);
}

}  // namespace invagg::harness
