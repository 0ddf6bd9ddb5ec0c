// One PASS/FAIL line per acceptance criterion. With no argument every
// criterion runs; `acceptance 4` runs just one.
#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "invagg/config.hpp"
#include "invagg/harness.hpp"
#include "invagg/theory.hpp"

using namespace invagg;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

harness::RunResult run_preset(const std::string& name, std::uint64_t seed_offset = 0,
                              std::optional<double> tau = std::nullopt) {
    config::ExperimentFile cfg = config::preset(name);
    cfg.seed += seed_offset;
    if (tau) cfg.aggregator.tau = *tau;
    return harness::run_experiment(config::resolve_scenario(cfg), cfg.aggregator, cfg.training, cfg.seed);
}

Outcome criterion1() {
    const auto t0 = Clock::now();
    const auto r = run_preset("appendix_d1_invariant");
    const double secs = seconds_since(t0);
    const auto& w = r.summary.final_weights;
    const bool pass = std::abs(w[1]) < 0.1 && w[0] > 1.0 && r.summary.final_acc_main >= 0.98 && secs < 10.0;
    return {pass, "w=[" + fmt(w[0]) + ", " + fmt(w[1]) + "] acc_main=" + fmt(r.summary.final_acc_main) +
                      " time=" + fmt(secs, 3) + "s"};
}

Outcome criterion2() {
    bool pass = true;
    std::string detail;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const auto r = run_preset("appendix_d1_fedavg", s);
        const double w1 = r.summary.final_weights[1];
        const double acc = r.summary.final_acc_main;
        pass = pass && w1 > 0.3 && acc >= 0.92 && acc <= 0.99;
        detail += "seed+" + std::to_string(s) + ": w1=" + fmt(w1) + " acc_main=" + fmt(acc) + "; ";
    }
    return {pass, detail};
}

Outcome criterion3() {
    bool pass = true;
    std::string detail;
    for (std::uint64_t s = 0; s < 3; ++s) {
        const double inv = std::abs(run_preset("appendix_d1_invariant", s).summary.final_weights[1]);
        const double am = std::abs(run_preset("appendix_d1_and_mask", s).summary.final_weights[1]);
        const double tm = std::abs(run_preset("appendix_d1_trimmed_mean", s).summary.final_weights[1]);
        pass = pass && am - inv >= 0.05 && tm - inv >= 0.05;
        detail += "seed+" + std::to_string(s) + ": |w1| invariant=" + fmt(inv) + " and_mask=" + fmt(am) +
                  " trimmed=" + fmt(tm) + "; ";
    }
    return {pass, detail};
}

Outcome criterion4() {
    const auto t0 = Clock::now();
    bool pass = true;
    std::string detail;
    for (double eta : {0.0, 0.01, 0.02}) {
        const auto rep = theory::check_theorem1({}, 200, eta, 0.1, 2.0, 10000, 4242);
        pass = pass && rep.passed;
        detail += "eta=" + fmt(eta) + ": rate=" + fmt(rep.violation_rate) + " allowed=" + fmt(rep.allowed_rate) + "; ";
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 60.0;
    return {pass, detail + "time=" + fmt(secs, 3) + "s"};
}

Outcome criterion5() {
    bool pass = true;
    std::string detail;
    for (double phi : {1.5, 2.0, 3.0}) {
        for (long tau : {0L, 2L}) {
            const auto rep = theory::check_theorem2(phi, 10, 2, tau, 10000, 5151);
            const bool informative = rep.theoretical_bound < 1.0;
            const bool ok = !informative || rep.violation_rate <= rep.theoretical_bound;
            pass = pass && ok;
            detail += "phi=" + fmt(phi) + ",tau=" + std::to_string(tau) + ": freq=" + fmt(rep.violation_rate) +
                      " bound=" + fmt(rep.theoretical_bound) + (informative ? "" : " (vacuous)") + "; ";
        }
    }
    return {pass, detail};
}

Outcome criterion6() {
    std::size_t cells = 0, agree = 0, literal_agree = 0, inconclusive = 0, bad_inconclusive = 0;
    std::uint64_t seed = 600;
    for (double mu : {-1.0, -0.5, 0.0, 0.5, 1.0}) {
        for (double wk : {-0.5, 0.0, 0.5}) {
            if (!(wk * mu <= 0.0 || mu == 0.0)) continue;
            synthdata::GaussianClientSpec spec{0, false, {mu}, {1.0}, 0.5};
            const auto r = theory::check_theorem3(spec, Vector{wk}, 0, 1000000, ++seed);
            ++cells;
            if (!r.estimate.conclusive) {
                ++inconclusive;
                // the expected gradient vanishes only at mu = 0, w = 0
                if (!(mu == 0.0 && wk == 0.0)) ++bad_inconclusive;
                ++agree;
                ++literal_agree;
                continue;
            }
            agree += r.status == theory::SignStatus::agree ? 1 : 0;
            literal_agree += r.literal_status == theory::SignStatus::agree ? 1 : 0;
        }
    }
    const bool pass = agree == cells && bad_inconclusive == 0;
    return {pass, std::to_string(agree) + "/" + std::to_string(cells) + " cells agree (" +
                      std::to_string(inconclusive) + " inconclusive); the sign(mu_k) reading of the opposing "
                      "case agrees in " + std::to_string(literal_agree) + "/" + std::to_string(cells)};
}

Outcome criterion7() {
    const auto sc = synthdata::make_appendix_d1_scenario(7);
    bool pass = true;
    std::string detail;
    for (double wk : {0.0, -0.5, 0.5, 10.0}) {
        const auto r = theory::check_corollary1(sc, Vector{1.0, wk}, 1000000, 77);
        pass = pass && r.passed;
        detail += "w_k=" + fmt(wk) + " (" + r.regime + "): q=" + fmt(r.measured_q) +
                  (r.expected_is_lower_bound ? " need>=" : " need=") + fmt(r.expected_q) + "; ";
    }
    return {pass, detail};
}

Outcome criterion8() {
    doctest::Context ctx;
    ctx.setOption("test-suite", "aggregation");
    ctx.setOption("test-case", "property*");
    ctx.setOption("minimal", true);
    const int failed = ctx.run();
    return {failed == 0, failed == 0 ? "all aggregation property cases passed"
                                     : "aggregation property cases failed"};
}

Outcome criterion9() {
    bool pass = true;
    std::string detail;
    for (const auto& name : config::preset_names()) {
        const auto cfg = config::preset(name);
        const std::string a = config::to_json(run_preset(name), cfg).dump();
        const std::string b = config::to_json(run_preset(name), cfg).dump();
        pass = pass && a == b;
        detail += name + (a == b ? " identical; " : " DIFFERS; ");
    }
    return {pass, detail};
}

Outcome criterion10() {
    bool pass = true;
    std::string detail;
    for (double tau : {0.0, 0.2, 0.4, 0.6}) {
        const auto r = run_preset("appendix_d1_invariant", 0, tau);
        const double w1 = r.summary.final_weights[1];
        const double acc = r.summary.final_acc_main;
        pass = pass && acc >= 0.95 && (tau < 0.2 || std::abs(w1) < 0.1);
        detail += "tau=" + fmt(tau) + ": acc_main=" + fmt(acc) + " w1=" + fmt(w1) + "; ";
    }
    return {pass, detail};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                         criterion5, criterion6, criterion7, criterion8,
                                                         criterion9, criterion10};
    std::vector<std::size_t> which;
    if (argc > 1) {
        const long n = std::strtol(argv[1], nullptr, 10);
        if (n < 1 || n > static_cast<long>(criteria.size())) {
            std::fprintf(stderr, "usage: acceptance [1-%zu]\n", criteria.size());
            return 2;
        }
        which.push_back(static_cast<std::size_t>(n));
    } else {
        for (std::size_t i = 1; i <= criteria.size(); ++i) which.push_back(i);
    }
    int failures = 0;
    for (std::size_t i : which) {
        Outcome o;
        try {
            o = criteria[i - 1]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s criterion %zu: %s\n", o.pass ? "PASS" : "FAIL", i, o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures == 0 ? 0 : 1;
}
