#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"

#include "invagg/config.hpp"
#include "invagg/harness.hpp"
#include "invagg/seeding.hpp"

using namespace invagg;
using namespace invagg::harness;
using aggregation::AggregatorConfig;
using aggregation::AggregatorKind;

namespace {

synthdata::ScenarioConfig benign_only(std::size_t n_clients, std::uint64_t seed) {
    synthdata::AppendixD1Params p;
    p.num_clients = n_clients;
    p.num_malicious = 0;
    p.samples_per_client = 100;
    p.eval_samples = 500;
    return synthdata::make_appendix_d1_scenario(seed, p);
}

AggregatorConfig kind(AggregatorKind k) {
    AggregatorConfig c;
    c.kind = k;
    return c;
}

std::string serialize(const RunResult& r) {
    config::ExperimentFile cfg;
    return config::to_json(r, cfg).dump();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("zero updates leave the weights alone") {
    synthdata::ScenarioConfig sc = benign_only(3, 1);
    for (auto& c : sc.clients) c.mu = {0.0, 0.0};
    Federation fed = build_federation(sc);
    // every sample at the origin: the logistic gradient has zero features
    for (auto& data : fed.client_data)
        for (auto& s : data) s.features = {0.0, 0.0};
    const WeightVector w{0.4, -0.7};
    TrainingConfig tc;
    const std::vector<std::size_t> all{0, 1, 2};
    for (auto k : {AggregatorKind::fedavg, AggregatorKind::invariant, AggregatorKind::trimmed_mean}) {
        const auto out = run_round(fed, w, kind(k), all, tc, 1, 9);
        CHECK(out.weights == w);
    }
}

TEST_CASE("single client under fedavg matches local training") {
    const auto sc = benign_only(1, 4);
    const Federation fed = build_federation(sc);
    TrainingConfig tc;
    tc.epochs = 2.0;
    tc.batch_size = 16;
    const WeightVector w{0.1, 0.2};
    const std::vector<std::size_t> one{0};
    const auto out = run_round(fed, w, kind(AggregatorKind::fedavg), one, tc, 3, 77);
    const auto delta = model::local_train(w, fed.client_data[0], {tc.lr, tc.epochs, tc.batch_size},
                                          derive_seed(77, Stream::local_training, {3, 0}));
    REQUIRE(out.weights.size() == 2);
    CHECK(out.weights[0] == w[0] - delta[0]);
    CHECK(out.weights[1] == w[1] - delta[1]);
}

TEST_CASE("first round: invariant moves the trigger weight less than fedavg") {
    const auto sc = synthdata::make_appendix_d1_scenario(11);
    const Federation fed = build_federation(sc);
    TrainingConfig tc;
    const std::vector<std::size_t> all{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto inv = run_round(fed, sc.initial_weights, kind(AggregatorKind::invariant), all, tc, 1, 11);
    const auto avg = run_round(fed, sc.initial_weights, kind(AggregatorKind::fedavg), all, tc, 1, 11);
    CHECK(std::abs(inv.weights[1]) < std::abs(avg.weights[1]));
}

TEST_CASE("client sampling") {
    const auto full = sample_clients(5, 5, 1, 3);
    CHECK(full == std::vector<std::size_t>{0, 1, 2, 3, 4});
    CHECK(sample_clients(20, 7, 4, 3) == sample_clients(20, 7, 4, 3));
    CHECK_THROWS_AS(sample_clients(3, 4, 1, 1), std::invalid_argument);

    // inclusion frequency per client is k/N
    const std::size_t n = 10, k = 3, rounds = 10000;
    std::vector<std::size_t> hits(n, 0);
    for (std::size_t r = 1; r <= rounds; ++r) {
        const auto s = sample_clients(n, k, r, 5);
        REQUIRE(s.size() == k);
        CHECK(std::is_sorted(s.begin(), s.end()));
        CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
        for (auto id : s) ++hits[id];
    }
    const double p = double(k) / double(n);
    const double se = std::sqrt(rounds * p * (1 - p));
    for (auto h : hits) CHECK(std::abs(double(h) - rounds * p) <= 3.5 * se);
}

TEST_CASE("evaluate") {
    Dataset main{{{1.0, 0.0}, 1}, {{-1.0, 0.0}, 1}, {{2.0, 0.0}, 0}, {{0.5, 0.0}, 1}};
    Dataset back{{{0.0, 1.0}, 1}, {{0.0, -1.0}, 1}};
    const auto zero = evaluate(WeightVector{0.0, 0.0}, main, back);
    // w = 0 gives p = 0.5, which predicts label 1
    CHECK(zero.main == 0.75);
    CHECK(zero.backdoor == 1.0);
    const auto acc = evaluate(WeightVector{1.0, -1.0}, main, back);
    CHECK(acc.main == 0.5);
    CHECK(acc.backdoor == 0.5);
    CHECK_THROWS_AS(evaluate(WeightVector{0.0, 0.0}, Dataset{}, back), std::invalid_argument);
}

TEST_CASE("run bookkeeping") {
    const auto sc = benign_only(4, 2);
    TrainingConfig tc;
    tc.rounds = 1;
    const auto one = run_experiment(sc, kind(AggregatorKind::invariant), tc, 2);
    REQUIRE(one.rounds.size() == 1);
    CHECK(one.rounds[0].round_index == 1);
    CHECK(one.rounds[0].participants.size() == 4);
    tc.rounds = 0;
    CHECK_THROWS_AS(run_experiment(sc, kind(AggregatorKind::invariant), tc, 2), ValidationError);
    tc.rounds = 3;
    tc.clients_per_round = 2;
    const auto partial = run_experiment(sc, kind(AggregatorKind::fedavg), tc, 2);
    for (const auto& r : partial.rounds) CHECK(r.participants.size() == 2);

    std::ostringstream csv;
    write_csv(csv, partial);
    const std::string text = csv.str();
    CHECK(text.rfind("round,w_0,w_1,acc_main,acc_backdoor,mask_pass_fraction\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 4);
}

TEST_CASE("determinism and thread count independence") {
    const auto sc = synthdata::make_appendix_d1_scenario(8);
    TrainingConfig tc;
    tc.rounds = 10;
    tc.batch_size = 32;
    const auto a = run_experiment(sc, kind(AggregatorKind::invariant), tc, 8);
    const auto b = run_experiment(sc, kind(AggregatorKind::invariant), tc, 8);
    CHECK(serialize(a) == serialize(b));
    tc.threads = 4;
    const auto c = run_experiment(sc, kind(AggregatorKind::invariant), tc, 8);
    CHECK(serialize(a) == serialize(c));
}

TEST_CASE("property: no attackers, alpha = tau = 0 reproduces the fedavg trajectory") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto sc = benign_only(6, seed);
        TrainingConfig tc;
        tc.rounds = 8;
        tc.batch_size = seed % 2 ? 0 : 20;
        AggregatorConfig inv = kind(AggregatorKind::invariant);
        inv.tau = 0.0;
        inv.alpha = 0.0;
        const auto a = run_experiment(sc, inv, tc, seed);
        const auto f = run_experiment(sc, kind(AggregatorKind::fedavg), tc, seed);
        REQUIRE(a.rounds.size() == f.rounds.size());
        for (std::size_t t = 0; t < a.rounds.size(); ++t) CHECK(a.rounds[t].weights_after == f.rounds[t].weights_after);
    }
}

TEST_CASE("fedavg learns the main task") {
    const auto sc = synthdata::make_appendix_d1_scenario(3);
    TrainingConfig tc;
    const auto r = run_experiment(sc, kind(AggregatorKind::fedavg), tc, 3);
    CHECK(r.summary.final_acc_main >= 0.9);
    CHECK(r.summary.final_weights[0] > 0.0);
}

TEST_CASE("round errors carry the round index") {
    const auto sc = benign_only(2, 1);
    const Federation fed = build_federation(sc);
    AggregatorConfig wd = kind(AggregatorKind::weak_dp);
    const std::vector<std::size_t> all{0, 1};
    try {
        run_round(fed, sc.initial_weights, wd, all, TrainingConfig{}, 7, 1);
        FAIL("expected RoundError");
    } catch (const RoundError& e) {
        CHECK(e.round() == 7);
    }
}

}  // TEST_SUITE

TEST_SUITE("harness_objective") {

// Trigger coefficient under the invariant aggregator, checked round by round.
TEST_CASE("invariant keeps w_k mu_k <= 0 for the trigger coordinate") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto sc = synthdata::make_appendix_d1_scenario(seed);
        const auto r = run_experiment(sc, AggregatorConfig{}, TrainingConfig{}, seed);
        const std::size_t k = sc.trigger.feature_index;
        std::size_t violations = 0, first = 0;
        double worst = 0.0;
        for (const auto& rec : r.rounds) {
            const double prod = rec.weights_after[k] * sc.trigger.trigger_mu;
            if (prod > 0.0) {
                if (violations++ == 0) first = rec.round_index;
                worst = std::max(worst, prod);
            }
        }
        INFO("seed " << seed << ": " << violations << " rounds with w_k mu_k > 0, first at round "
                     << first << ", largest " << worst);
        CHECK(violations == 0);
    }
}

}  // TEST_SUITE
