#include "invagg/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "invagg/aggregation.hpp"
#include "invagg/model.hpp"
#include "invagg/seeding.hpp"

namespace invagg::theory {

namespace {

int sign_of(double v) noexcept { return (v > 0.0) - (v < 0.0); }

double quantile(std::vector<double> values, double level) {
    if (values.empty()) return 0.0;
    const auto idx = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(values.size() - 1),
                         std::floor(level * static_cast<double>(values.size() - 1))));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(idx), values.end());
    return values[idx];
}

double binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0.0;
    k = std::min(k, n - k);
    double out = 1.0;
    for (std::size_t j = 1; j <= k; ++j) {
        out = out * static_cast<double>(n - k + j) / static_cast<double>(j);
    }
    return out;
}

}  // namespace

double modified_trimmed_mean(std::span<const double> xs, std::span<const double> ys, double alpha) {
    const std::size_t n = xs.size();
    if (n == 0 || ys.size() != n) {
        throw std::invalid_argument("modified_trimmed_mean: xs and ys must have equal nonzero length");
    }
    const std::size_t r = aggregation::trim_count(n, alpha);
    if (r == 0 || 2 * r >= n) {
        throw std::invalid_argument("modified_trimmed_mean: need 0 < alpha N < N / 2");
    }
    std::vector<double> sorted(ys.begin(), ys.end());
    std::sort(sorted.begin(), sorted.end());
    const double a = sorted[r - 1];
    const double b = sorted[n - r];
    double acc = 0.0;
    for (double x : xs) acc += std::clamp(x, a, b);
    return acc / static_cast<double>(n);
}

double theorem1_alpha(std::size_t n, double eta, double delta) {
    return 8.0 * eta + 12.0 * std::log(4.0 / delta) / static_cast<double>(n);
}

BoundCheckReport check_theorem1(const Distribution& dist, std::size_t n, double eta, double delta,
                                double c, std::size_t trials, std::uint64_t seed) {
    if (n < 3) throw std::invalid_argument("theorem1: N must be >= 3");
    if (!(eta >= 0.0 && eta < 0.5)) throw std::invalid_argument("theorem1: eta must lie in [0, 0.5)");
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("theorem1: delta must lie in (0, 1)");
    if (!(c > 1.0)) throw std::invalid_argument("theorem1: c must exceed 1");
    if (!(dist.stddev >= 0.0)) throw std::invalid_argument("theorem1: stddev must be >= 0");
    if (trials == 0) throw std::invalid_argument("theorem1: trials must be >= 1");
    const double alpha = theorem1_alpha(n, eta, delta);
    if (!(alpha < 0.5)) {
        throw std::invalid_argument("theorem1: alpha = 8 eta + 12 log(4/delta)/N must be < 0.5, got " +
                                    std::to_string(alpha));
    }
    const std::size_t r = aggregation::trim_count(n, alpha);
    if (r == 0 || 2 * r >= n) throw std::invalid_argument("theorem1: alpha N gives an empty trim");
    const std::size_t corrupted = static_cast<std::size_t>(std::ceil(eta * static_cast<double>(n) - 1e-9));
    const double sigma = dist.stddev;
    const double success = std::pow(c, -4.0) * (1.0 - 4.0 * std::exp(-alpha * static_cast<double>(n) / 12.0));
    const double allowed = 1.0 - success;

    BoundCheckReport rep;
    rep.check = "t1";
    rep.trials = trials;
    rep.allowed_rate = allowed;
    rep.theoretical_bound = allowed;
    rep.parameters = {{"alpha", alpha},     {"eta", eta},         {"delta", delta},
                      {"c", c},             {"N", double(n)},     {"sigma", sigma},
                      {"mean", dist.mean},  {"trim_count", double(r)},
                      {"corrupted", double(corrupted)}};

    std::vector<double> sample(n);
    std::vector<double> ratios;
    ratios.reserve(trials);
    const double half_width = std::sqrt(3.0) * sigma;
    for (std::size_t t = 0; t < trials; ++t) {
        Engine rng = make_engine(derive_seed(seed, Stream::monte_carlo, {t}));
        if (sigma == 0.0) {
            std::fill(sample.begin(), sample.end(), dist.mean);
        } else if (dist.kind == Distribution::Kind::normal) {
            std::normal_distribution<double> d(dist.mean, sigma);
            for (auto& x : sample) x = d(rng);
        } else {
            std::uniform_real_distribution<double> d(dist.mean - half_width, dist.mean + half_width);
            for (auto& x : sample) x = d(rng);
        }
        for (std::size_t j = 0; j < corrupted; ++j) sample[j] = (j % 2 == 0) ? 1e6 : -1e6;

        const double est = aggregation::trimmed_mean_scalar(sample, alpha);
        std::sort(sample.begin(), sample.end());
        const double a = sample[r - 1];
        const double b = sample[n - r];
        const double lhs = std::abs(est - dist.mean);
        const double rhs = 10.0 * std::sqrt(alpha) * sigma + 2.0 * c * sigma +
                           alpha * std::abs(a + b - 2.0 * est);
        if (lhs > rhs) ++rep.violations;
        ratios.push_back(rhs > 0.0 ? lhs / rhs
                                   : (lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()));
    }
    rep.violation_rate = static_cast<double>(rep.violations) / static_cast<double>(trials);
    rep.empirical_quantile = quantile(std::move(ratios), 0.99);
    rep.passed = rep.violation_rate <= allowed;
    return rep;
}

Theorem2Bound theorem2_bound(double phi, std::size_t n, std::size_t n_prime, long tau_count,
                             std::optional<double> substitute_p) {
    if (2 * n_prime >= n) throw std::invalid_argument("theorem2: need N' < N / 2");
    if (tau_count < 0) throw std::invalid_argument("theorem2: tau_count must be >= 0");
    if (!std::isfinite(phi)) throw std::invalid_argument("theorem2: phi must be finite");
    double base = 0.0;
    if (phi == 0.0) {
        if (!substitute_p) {
            throw std::invalid_argument(
                "theorem2: phi = 0 needs a substitute sign-agreement probability");
        }
        if (!(*substitute_p >= 0.0 && *substitute_p <= 1.0)) {
            throw std::invalid_argument("theorem2: substitute probability must lie in [0, 1]");
        }
        base = *substitute_p;
    } else {
        base = 1.0 / (phi * phi);
    }
    const long N = static_cast<long>(n);
    const long center = N - 2 * static_cast<long>(n_prime);
    Theorem2Bound out;
    out.lower = std::max(0L, center - tau_count);
    out.upper = std::min(N, center + tau_count);
    for (long i = out.lower; i <= out.upper; ++i) {
        out.raw += binomial(n - n_prime, static_cast<std::size_t>(i)) * std::pow(base, static_cast<double>(i));
    }
    out.clamped = std::clamp(out.raw, 0.0, 1.0);
    return out;
}

BoundCheckReport check_theorem2(double phi, std::size_t n, std::size_t n_prime, long tau_count,
                                std::size_t trials, std::uint64_t seed,
                                std::optional<double> substitute_p) {
    if (trials == 0) throw std::invalid_argument("theorem2: trials must be >= 1");
    const Theorem2Bound bound = theorem2_bound(phi, n, n_prime, tau_count, substitute_p);
    const std::size_t benign = n - n_prime;
    const double adversarial = phi >= 0.0 ? -1.0 : 1.0;

    BoundCheckReport rep;
    rep.check = "t2";
    rep.trials = trials;
    rep.theoretical_bound = bound.clamped;
    rep.allowed_rate = bound.clamped;
    rep.parameters = {{"phi", phi},
                      {"N", double(n)},
                      {"N_prime", double(n_prime)},
                      {"tau_count", double(tau_count)},
                      {"sum_lower", double(bound.lower)},
                      {"sum_upper", double(bound.upper)},
                      {"bound_raw", bound.raw},
                      {"bound_clamped", bound.clamped}};
    if (substitute_p) rep.parameters["substitute_p"] = *substitute_p;

    std::vector<double> sums;
    sums.reserve(trials);
    for (std::size_t t = 0; t < trials; ++t) {
        Engine rng = make_engine(derive_seed(seed, Stream::monte_carlo, {t}));
        std::normal_distribution<double> d(phi, 1.0);
        long votes = 0;
        for (std::size_t i = 0; i < benign; ++i) votes += sign_of(d(rng));
        for (std::size_t i = 0; i < n_prime; ++i) votes += sign_of(adversarial);
        const long consistency = std::labs(votes);
        if (consistency < tau_count) ++rep.violations;
        sums.push_back(static_cast<double>(consistency));
    }
    rep.violation_rate = static_cast<double>(rep.violations) / static_cast<double>(trials);
    rep.empirical_quantile = quantile(std::move(sums), 0.01);
    if (bound.clamped >= 1.0) {
        rep.passed = true;
        rep.note = "vacuous: bound clamps to 1";
    } else {
        rep.passed = rep.violation_rate <= bound.clamped;
    }
    return rep;
}

const char* to_string(SignStatus s) noexcept {
    switch (s) {
        case SignStatus::agree: return "agree";
        case SignStatus::disagree: return "disagree";
        case SignStatus::inconclusive: return "inconclusive";
        case SignStatus::not_applicable: return "not_applicable";
    }
    return "unknown";
}

SignEstimate estimate_gradient_sign(const synthdata::GaussianClientSpec& spec,
                                    std::span<const double> w, std::size_t k,
                                    std::size_t n_samples, std::uint64_t seed) {
    synthdata::validate(spec);
    const std::size_t d = spec.mu.size();
    if (w.size() != d || k >= d) throw std::invalid_argument("gradient sign: dimension mismatch");
    if (n_samples < 2) throw std::invalid_argument("gradient sign: need at least 2 samples");
    Engine rng = make_engine(seed);
    std::bernoulli_distribution label(spec.label_balance);
    std::normal_distribution<double> std_normal(0.0, 1.0);
    Vector x(d);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t j = 0; j < n_samples; ++j) {
        const int y = label(rng) ? 1 : 0;
        const double pm = 2.0 * y - 1.0;
        for (std::size_t q = 0; q < d; ++q) x[q] = pm * spec.mu[q] + spec.sigma[q] * std_normal(rng);
        const double g = x[k] * (model::sigmoid(model::dot(w, x)) - y);
        sum += g;
        sum_sq += g * g;
    }
    const double n = static_cast<double>(n_samples);
    SignEstimate est;
    est.mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * est.mean * est.mean) / (n - 1.0));
    est.standard_error = std::sqrt(var / n);
    est.conclusive = std::abs(est.mean) > 3.0 * est.standard_error;
    est.sign = est.conclusive ? sign_of(est.mean) : 0;
    return est;
}

namespace {

SignStatus compare(const SignEstimate& est, int predicted) {
    if (!est.conclusive) return predicted == 0 ? SignStatus::agree : SignStatus::inconclusive;
    return est.sign == predicted ? SignStatus::agree : SignStatus::disagree;
}

}  // namespace

Theorem3Result check_theorem3(const synthdata::GaussianClientSpec& spec, std::span<const double> w,
                              std::size_t k, std::size_t n_samples, std::uint64_t seed) {
    Theorem3Result out;
    out.estimate = estimate_gradient_sign(spec, w, k, n_samples, seed);
    const double mu = spec.mu[k];
    const double wk = w[k];
    if (mu == 0.0) {
        out.regime = "mu_zero";
        out.predicted_sign = sign_of(wk);
        out.literal_predicted_sign = sign_of(wk);
    } else if (wk * mu <= 0.0) {
        out.regime = "opposing";
        out.predicted_sign = -sign_of(mu);
        out.literal_predicted_sign = sign_of(mu);
    } else {
        out.regime = "outside";
        return out;
    }
    out.status = compare(out.estimate, out.predicted_sign);
    out.literal_status = compare(out.estimate, out.literal_predicted_sign);
    return out;
}

Corollary1Result check_corollary1(const synthdata::ScenarioConfig& scenario,
                                  std::span<const double> w, std::size_t n_samples,
                                  std::uint64_t seed) {
    synthdata::validate(scenario);
    const std::size_t k = scenario.trigger.feature_index;
    if (w.size() != scenario.dim) throw std::invalid_argument("corollary1: weight dimension mismatch");
    for (const auto& c : scenario.clients) {
        if (!c.is_malicious && c.mu[k] != 0.0) {
            throw std::invalid_argument("corollary1: benign clients must have mu_k = 0 on the trigger feature");
        }
    }
    if (scenario.num_malicious == 0) throw std::invalid_argument("corollary1: needs malicious clients");

    Corollary1Result out;
    out.feature = k;
    out.w_k = w[k];
    out.mu_k = scenario.trigger.trigger_mu;
    long votes = 0;
    for (const auto& c : scenario.clients) {
        auto est = estimate_gradient_sign(c, w, k, n_samples,
                                          derive_seed(seed, Stream::monte_carlo, {c.client_id}));
        if (!est.conclusive) ++out.inconclusive_clients;
        votes += est.sign;
        out.per_client.push_back(est);
    }
    const double n = static_cast<double>(scenario.num_clients);
    out.measured_q = std::abs(static_cast<double>(votes)) / n;
    const double frac = static_cast<double>(scenario.num_malicious) / n;
    const double prod = out.w_k * out.mu_k;
    if (out.w_k == 0.0) {
        out.regime = "zero";
        out.expected_q = frac;
    } else if (prod < 0.0) {
        out.regime = "opposing";
        out.expected_q = 1.0;
    } else {
        out.regime = "aligned";
        out.expected_q = 1.0 - frac;
        out.expected_is_lower_bound = true;
    }
    constexpr double tol = 1e-12;
    out.passed = out.expected_is_lower_bound ? out.measured_q >= out.expected_q - tol
                                             : std::abs(out.measured_q - out.expected_q) <= tol;
    return out;
}

FirstOrderDiagnostic first_order_gain(std::span<const double> update,
                                      std::span<const double> client_grad) {
    FirstOrderDiagnostic out;
    out.gain = model::dot(update, client_grad);
    out.sign_products.resize(update.size());
    for (std::size_t k = 0; k < update.size(); ++k) {
        out.sign_products[k] = sign_of(update[k]) * sign_of(client_grad[k]);
    }
    return out;
}

}  // namespace invagg::theory
