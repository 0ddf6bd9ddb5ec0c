#include "invagg/synthdata.hpp"

#include <cmath>
#include <ostream>
#include <random>
#include <string>

#include "invagg/seeding.hpp"

namespace invagg::synthdata {

namespace {

int sign_of(double v) noexcept { return (v > 0.0) - (v < 0.0); }

std::string client_field(std::size_t i, const char* leaf) {
    return "scenario.clients[" + std::to_string(i) + "]." + leaf;
}

}  // namespace

void validate(const GaussianClientSpec& spec) {
    const std::size_t i = spec.client_id;
    if (spec.mu.empty()) throw ValidationError(client_field(i, "mu"), "must be nonempty");
    if (spec.mu.size() != spec.sigma.size()) {
        throw ValidationError(client_field(i, "sigma"), "length must match mu");
    }
    for (double m : spec.mu) {
        if (!std::isfinite(m)) throw ValidationError(client_field(i, "mu"), "must be finite");
    }
    for (double s : spec.sigma) {
        if (!(s > 0.0) || !std::isfinite(s)) {
            throw ValidationError(client_field(i, "sigma"), "entries must be positive");
        }
    }
    if (!(spec.label_balance > 0.0 && spec.label_balance < 1.0)) {
        throw ValidationError(client_field(i, "label_balance"), "must lie in (0, 1)");
    }
}

void validate(const ScenarioConfig& sc) {
    if (sc.num_clients == 0) throw ValidationError("scenario.num_clients", "must be >= 1");
    if (2 * sc.num_malicious >= sc.num_clients) {
        throw ValidationError("scenario.num_malicious", "must be < num_clients / 2");
    }
    if (sc.dim == 0) throw ValidationError("scenario.dim", "must be >= 1");
    if (sc.samples_per_client == 0) {
        throw ValidationError("scenario.samples_per_client", "must be >= 1");
    }
    if (sc.eval_samples == 0) throw ValidationError("scenario.eval_samples", "must be >= 1");
    if (sc.clients.size() != sc.num_clients) {
        throw ValidationError("scenario.clients", "expected " + std::to_string(sc.num_clients) +
                                                      " client specs");
    }
    if (sc.initial_weights.size() != sc.dim) {
        throw ValidationError("scenario.initial_weights", "length must equal dim");
    }
    for (double w : sc.initial_weights) {
        if (!std::isfinite(w)) throw ValidationError("scenario.initial_weights", "must be finite");
    }
    const TriggerSpec& tr = sc.trigger;
    if (tr.feature_index >= sc.dim) {
        throw ValidationError("scenario.trigger.feature_index", "out of range");
    }
    if (tr.trigger_mu == 0.0 || !std::isfinite(tr.trigger_mu)) {
        throw ValidationError("scenario.trigger.mu", "must be finite and nonzero");
    }
    if (!(tr.trigger_sigma > 0.0)) throw ValidationError("scenario.trigger.sigma", "must be positive");
    if (tr.target_label != 0 && tr.target_label != 1) {
        throw ValidationError("scenario.trigger.target_label", "must be 0 or 1");
    }
    std::size_t malicious = 0;
    for (std::size_t i = 0; i < sc.clients.size(); ++i) {
        const auto& c = sc.clients[i];
        if (c.client_id != i) throw ValidationError(client_field(i, "client_id"), "must equal position");
        validate(c);
        if (c.mu.size() != sc.dim) throw ValidationError(client_field(i, "mu"), "length must equal dim");
        if (c.is_malicious) {
            ++malicious;
            // colluding clients share the trigger mean
            if (c.mu[tr.feature_index] != tr.trigger_mu) {
                throw ValidationError(client_field(i, "mu"),
                                      "malicious trigger-feature mean must equal trigger.mu");
            }
        }
    }
    if (malicious != sc.num_malicious) {
        throw ValidationError("scenario.num_malicious", "does not match the malicious client flags");
    }
    if (malicious == sc.num_clients) {
        throw ValidationError("scenario.clients", "need at least one benign client");
    }
}

Dataset sample_client_dataset(const GaussianClientSpec& spec, std::size_t n, std::uint64_t seed) {
    validate(spec);
    Engine rng = make_engine(seed);
    std::bernoulli_distribution label(spec.label_balance);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    const std::size_t d = spec.mu.size();
    Dataset out(n);
    for (auto& s : out) {
        s.label = label(rng) ? 1 : 0;
        const double pm = 2.0 * s.label - 1.0;
        s.features.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            s.features[k] = pm * spec.mu[k] + spec.sigma[k] * std_normal(rng);
        }
    }
    return out;
}

Dataset client_dataset(const ScenarioConfig& scenario, std::size_t index) {
    const auto& spec = scenario.clients.at(index);
    return sample_client_dataset(
        spec, scenario.samples_per_client,
        derive_seed(scenario.master_seed, Stream::client_data, {spec.client_id}));
}

ScenarioConfig make_appendix_d1_scenario(std::uint64_t seed, const AppendixD1Params& p) {
    if (!(p.epsilon_std >= 0.0)) throw ValidationError("scenario.epsilon_std", "must be >= 0");
    if (2 * p.num_malicious >= p.num_clients) {
        throw ValidationError("scenario.num_malicious", "must be < num_clients / 2");
    }
    ScenarioConfig sc;
    sc.num_clients = p.num_clients;
    sc.num_malicious = p.num_malicious;
    sc.dim = 2;
    sc.samples_per_client = p.samples_per_client;
    sc.eval_samples = p.eval_samples;
    sc.initial_weights = {0.0, 0.0};
    sc.trigger = TriggerSpec{1, 1.0, 1.0, 1};
    sc.master_seed = seed;

    const std::size_t benign = p.num_clients - p.num_malicious;
    for (std::size_t i = 0; i < p.num_clients; ++i) {
        GaussianClientSpec c;
        c.client_id = i;
        if (i < benign) {
            double eps = 0.0;
            if (p.epsilon_std > 0.0) {
                Engine rng = make_engine(derive_seed(seed, Stream::client_offset, {i}));
                eps = std::normal_distribution<double>(0.0, p.epsilon_std)(rng);
            }
            c.mu = {3.0 + eps, 0.0};
            c.sigma = {1.0, 1.0};
        } else {
            c.is_malicious = true;
            c.mu = {-3.0, sc.trigger.trigger_mu};
            c.sigma = {3.0, sc.trigger.trigger_sigma};
        }
        sc.clients.push_back(std::move(c));
    }
    return sc;
}

double feature_invariance(std::span<const GaussianClientSpec> specs, std::size_t k) {
    if (specs.empty()) throw std::invalid_argument("feature_invariance: no client specs");
    long votes = 0;
    for (const auto& s : specs) votes += sign_of(s.mu.at(k));
    return std::abs(static_cast<double>(votes)) / static_cast<double>(specs.size());
}

Dataset backdoor_eval_set(const TriggerSpec& trigger, const GaussianClientSpec& base_spec,
                          std::size_t n, std::uint64_t seed) {
    validate(base_spec);
    if (trigger.feature_index >= base_spec.mu.size()) {
        throw std::invalid_argument("backdoor_eval_set: trigger feature out of range");
    }
    Engine rng = make_engine(seed);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    const std::size_t d = base_spec.mu.size();
    const double base_pm = 2.0 * (1 - trigger.target_label) - 1.0;
    const double trig_pm = 2.0 * trigger.target_label - 1.0;
    Dataset out(n);
    for (auto& s : out) {
        s.label = trigger.target_label;
        s.features.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            const double z = std_normal(rng);
            s.features[k] = k == trigger.feature_index
                                ? trig_pm * trigger.trigger_mu + trigger.trigger_sigma * z
                                : base_pm * base_spec.mu[k] + base_spec.sigma[k] * z;
        }
    }
    return out;
}

Dataset main_eval_set(const ScenarioConfig& scenario, std::size_t n, std::uint64_t seed) {
    std::vector<const GaussianClientSpec*> benign;
    for (const auto& c : scenario.clients) {
        if (!c.is_malicious) benign.push_back(&c);
    }
    if (benign.empty()) throw std::invalid_argument("main_eval_set: no benign clients");
    Engine rng = make_engine(seed);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    Dataset out(n);
    for (std::size_t j = 0; j < n; ++j) {
        const GaussianClientSpec& spec = *benign[j % benign.size()];
        std::bernoulli_distribution label(spec.label_balance);
        Sample& s = out[j];
        s.label = label(rng) ? 1 : 0;
        const double pm = 2.0 * s.label - 1.0;
        s.features.resize(spec.mu.size());
        for (std::size_t k = 0; k < spec.mu.size(); ++k) {
            s.features[k] = pm * spec.mu[k] + spec.sigma[k] * std_normal(rng);
        }
    }
    return out;
}

void write_csv(std::ostream& out, const Dataset& data) {
    const std::size_t d = data.empty() ? 0 : data.front().features.size();
    for (std::size_t k = 0; k < d; ++k) out << 'f' << k << ',';
    out << "label\n";
    const auto old_precision = out.precision(17);
    for (const auto& s : data) {
        for (double v : s.features) out << v << ',';
        out << s.label << '\n';
    }
    out.precision(old_precision);
}

}  // namespace invagg::synthdata
