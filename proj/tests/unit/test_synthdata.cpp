#include <cmath>
#include <sstream>

#include "doctest.h"

#include "invagg/synthdata.hpp"

using namespace invagg;
using namespace invagg::synthdata;

namespace {

struct Moments {
    double mean = 0.0;
    double var = 0.0;
    std::size_t n = 0;
};

Moments feature_moments(const Dataset& data, std::size_t k, int label) {
    Moments m;
    for (const auto& s : data) {
        if (label >= 0 && s.label != label) continue;
        m.mean += s.features[k];
        ++m.n;
    }
    m.mean /= static_cast<double>(m.n);
    for (const auto& s : data) {
        if (label >= 0 && s.label != label) continue;
        m.var += (s.features[k] - m.mean) * (s.features[k] - m.mean);
    }
    m.var /= static_cast<double>(m.n - 1);
    return m;
}

}  // namespace

TEST_SUITE("synthdata") {

TEST_CASE("zero-mean features") {
    GaussianClientSpec spec{0, false, {0.0, 0.0}, {1.0, 2.0}, 0.5};
    const auto data = sample_client_dataset(spec, 20000, 3);
    for (std::size_t k = 0; k < 2; ++k) {
        const auto m = feature_moments(data, k, -1);
        CHECK(std::abs(m.mean) <= 3.0 * spec.sigma[k] / std::sqrt(20000.0));
    }
}

TEST_CASE("class-conditional means and variances within 4 standard errors") {
    GaussianClientSpec spec{0, false, {3.0, -0.5, 0.0}, {1.0, 2.0, 0.5}, 0.5};
    const std::size_t n = 100000;
    const auto data = sample_client_dataset(spec, n, 17);
    for (int y : {0, 1}) {
        for (std::size_t k = 0; k < 3; ++k) {
            const auto m = feature_moments(data, k, y);
            const double expected = (2.0 * y - 1.0) * spec.mu[k];
            const double var = spec.sigma[k] * spec.sigma[k];
            CHECK(std::abs(m.mean - expected) <= 4.0 * spec.sigma[k] / std::sqrt(double(m.n)));
            // SE of the sample variance of a Gaussian: var * sqrt(2 / (n - 1))
            CHECK(std::abs(m.var - var) <= 4.0 * var * std::sqrt(2.0 / double(m.n - 1)));
        }
    }
    std::size_t ones = 0;
    for (const auto& s : data) ones += s.label;
    CHECK(std::abs(double(ones) / n - 0.5) <= 4.0 * std::sqrt(0.25 / n));
}

TEST_CASE("generation is deterministic given the seed") {
    GaussianClientSpec spec{0, false, {1.0}, {1.0}, 0.3};
    const auto a = sample_client_dataset(spec, 50, 5);
    const auto b = sample_client_dataset(spec, 50, 5);
    const auto c = sample_client_dataset(spec, 50, 6);
    bool same = true, differ = false;
    for (std::size_t i = 0; i < 50; ++i) {
        same = same && a[i].features == b[i].features && a[i].label == b[i].label;
        differ = differ || a[i].features != c[i].features;
    }
    CHECK(same);
    CHECK(differ);
}

TEST_CASE("two-feature backdoor scenario") {
    const auto sc = make_appendix_d1_scenario(7);
    CHECK(sc.num_clients == 10);
    CHECK(sc.num_malicious == 2);
    CHECK(sc.dim == 2);
    CHECK(sc.initial_weights == Vector{0.0, 0.0});
    CHECK_NOTHROW(validate(sc));
    std::vector<double> offsets;
    for (const auto& c : sc.clients) {
        if (c.is_malicious) {
            CHECK(c.mu[1] == 1.0);
            CHECK(c.mu[0] == -3.0);
            CHECK(c.sigma == Vector{3.0, 1.0});
        } else {
            CHECK(c.mu[1] == 0.0);
            CHECK(c.sigma == Vector{1.0, 1.0});
            offsets.push_back(c.mu[0]);
        }
    }
    REQUIRE(offsets.size() == 8);
    for (std::size_t i = 1; i < offsets.size(); ++i) CHECK(offsets[i] != offsets[0]);
    // eps is fixed per client: rebuilding from the same seed reproduces it
    CHECK(make_appendix_d1_scenario(7).clients == sc.clients);
    CHECK(make_appendix_d1_scenario(8).clients[0].mu[0] != sc.clients[0].mu[0]);
}

TEST_CASE("adding clients leaves existing client data unchanged") {
    AppendixD1Params small;
    AppendixD1Params big;
    big.num_clients = 14;
    const auto a = make_appendix_d1_scenario(3, small);
    const auto b = make_appendix_d1_scenario(3, big);
    for (std::size_t i = 0; i < 8; ++i) {
        CHECK(a.clients[i] == b.clients[i]);
        const auto da = client_dataset(a, i);
        const auto db = client_dataset(b, i);
        CHECK(da.front().features == db.front().features);
    }
}

TEST_CASE("feature invariance") {
    std::vector<GaussianClientSpec> specs(10);
    for (auto& s : specs) s.mu = {1.0};
    CHECK(feature_invariance(specs, 0) == 1.0);
    for (std::size_t i = 0; i < 8; ++i) specs[i].mu = {0.0};
    CHECK(feature_invariance(specs, 0) == doctest::Approx(0.2).epsilon(1e-15));
    for (std::size_t i = 0; i < 10; ++i) specs[i].mu = {i < 5 ? 1.0 : -2.0};
    CHECK(feature_invariance(specs, 0) == 0.0);

    const auto sc = make_appendix_d1_scenario(1);
    std::vector<GaussianClientSpec> benign;
    for (const auto& c : sc.clients) {
        if (!c.is_malicious) benign.push_back(c);
    }
    CHECK(feature_invariance(benign, 1) == 0.0);
    CHECK(feature_invariance(sc.clients, 1) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(feature_invariance(benign, 0) == 1.0);
}

TEST_CASE("backdoor evaluation samples") {
    const auto sc = make_appendix_d1_scenario(1);
    const auto data = backdoor_eval_set(sc.trigger, sc.clients[0], 100000, 99);
    for (const auto& s : data) REQUIRE(s.label == sc.trigger.target_label);
    double mean = 0.0;
    for (const auto& s : data) mean += s.features[1];
    mean /= double(data.size());
    // trigger mean for target label 1 is +trigger_mu
    CHECK(std::abs(mean - 1.0) <= 4.0 / std::sqrt(double(data.size())));
    const auto other = backdoor_eval_set(sc.trigger, sc.clients[0], 100, 100);
    for (std::size_t i = 0; i < 100; ++i) CHECK(other[i].features != data[i].features);
}

TEST_CASE("validation rejects malformed scenarios") {
    auto sc = make_appendix_d1_scenario(1);
    sc.num_malicious = 5;
    CHECK_THROWS_AS(validate(sc), ValidationError);
    sc = make_appendix_d1_scenario(1);
    sc.clients[9].mu[1] = 2.0;
    CHECK_THROWS_AS(validate(sc), ValidationError);
    sc = make_appendix_d1_scenario(1);
    sc.clients[0].sigma[0] = 0.0;
    CHECK_THROWS_AS(validate(sc), ValidationError);
    AppendixD1Params p;
    p.num_malicious = 5;
    CHECK_THROWS_AS(make_appendix_d1_scenario(1, p), ValidationError);
}

TEST_CASE("csv export") {
    Dataset data{{{1.5, -2.0}, 1}, {{0.25, 3.0}, 0}};
    std::ostringstream os;
    write_csv(os, data);
    CHECK(os.str() == "f0,f1,label\n1.5,-2,1\n0.25,3,0\n");
}

}  // TEST_SUITE
