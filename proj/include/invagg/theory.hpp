#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "invagg/synthdata.hpp"
#include "invagg/types.hpp"

namespace invagg::theory {

/// Mean of xs after clamping into [a, b], where a is the r-th smallest and
/// b the r-th largest of ys, r = ceil(alpha N). Requires 0 < r < N/2.
double modified_trimmed_mean(std::span<const double> xs, std::span<const double> ys, double alpha);

/// Empirical vs. theoretical outcome of one Monte Carlo bound check.
struct BoundCheckReport {
    std::string check;
    std::size_t trials = 0;
    std::size_t violations = 0;
    double violation_rate = 0.0;
    /// Largest violation rate the statement tolerates.
    double allowed_rate = 0.0;
    /// t1: 99th percentile of |error| / rhs. t2: 1st percentile of |sum of signs|.
    double empirical_quantile = 0.0;
    double theoretical_bound = 0.0;
    bool passed = false;
    /// Echoed inputs and derived constants (alpha, eta, N, summation limits, ...).
    std::map<std::string, double> parameters;
    std::string note;
};

struct Distribution {
    enum class Kind { normal, uniform };
    Kind kind = Kind::normal;
    double mean = 0.0;
    /// Population std; 0 gives a point mass at `mean`.
    double stddev = 1.0;
};

/// alpha = 8 eta + 12 log(4/delta) / N.
double theorem1_alpha(std::size_t n, double eta, double delta);

/// Draws `trials` samples of size N, overwrites ceil(eta N) entries with
/// +1e6, -1e6, +1e6, ... and checks
///   |trimmed_mean - E[x]| <= 10 sqrt(alpha) sigma + 2 c sigma + alpha |a + b - 2 trimmed_mean|
/// with a, b the ceil(alpha N)-th smallest and largest sample. Passes when the
/// violation rate is at most 1 - c^-4 (1 - 4 exp(-alpha N / 12)).
/// Throws std::invalid_argument unless alpha < 0.5, c > 1, 0 <= eta, 0 < delta < 1.
BoundCheckReport check_theorem1(const Distribution& dist, std::size_t n, double eta, double delta,
                                double c, std::size_t trials, std::uint64_t seed);

struct Theorem2Bound {
    /// Summation limits after intersecting with [0, N]; empty when lower > upper.
    long lower = 0;
    long upper = 0;
    double raw = 0.0;
    double clamped = 0.0;
};

/// sum_{i = N - 2N' - tau}^{min(N, N - 2N' + tau)} C(N - N', i) phi^{-2i}, tau in
/// vote counts. With phi = 0 the caller must pass `substitute_p`, which
/// replaces phi^{-2}; otherwise std::invalid_argument.
Theorem2Bound theorem2_bound(double phi, std::size_t n, std::size_t n_prime, long tau_count,
                             std::optional<double> substitute_p = std::nullopt);

/// Benign values ~ N(phi, 1) for the N - N' honest clients, N' adversarial
/// values of the opposite sign. Counts trials with |sum_i sign| < tau_count.
/// A clamped bound of 1 is vacuous and always passes.
BoundCheckReport check_theorem2(double phi, std::size_t n, std::size_t n_prime, long tau_count,
                                std::size_t trials, std::uint64_t seed,
                                std::optional<double> substitute_p = std::nullopt);

enum class SignStatus { agree, disagree, inconclusive, not_applicable };
const char* to_string(SignStatus s) noexcept;

struct SignEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
    /// 0 when |mean| <= 3 standard errors.
    int sign = 0;
    bool conclusive = false;
};

/// Monte Carlo mean of the k-th entry of point_gradient(w, .) over samples
/// from `spec`. Samples are streamed, not stored.
SignEstimate estimate_gradient_sign(const synthdata::GaussianClientSpec& spec,
                                    std::span<const double> w, std::size_t k,
                                    std::size_t n_samples, std::uint64_t seed);

struct Theorem3Result {
    SignEstimate estimate;
    /// "mu_zero", "opposing" (w_k mu_k <= 0, mu_k != 0) or "outside".
    std::string regime;
    /// mu_zero: sign(w_k). opposing: -sign(mu_k), which is what the expected
    /// gradient x_k (s(w^T x) - y) actually has.
    int predicted_sign = 0;
    /// The sign(mu_k) reading of the opposing case, kept for comparison.
    int literal_predicted_sign = 0;
    SignStatus status = SignStatus::not_applicable;
    SignStatus literal_status = SignStatus::not_applicable;
};

/// Inconclusive estimates count as agreement only where the predicted sign is 0.
Theorem3Result check_theorem3(const synthdata::GaussianClientSpec& spec, std::span<const double> w,
                              std::size_t k, std::size_t n_samples, std::uint64_t seed);

struct Corollary1Result {
    std::size_t feature = 0;
    double w_k = 0.0;
    double mu_k = 0.0;
    /// "zero", "opposing" or "aligned".
    std::string regime;
    std::vector<SignEstimate> per_client;
    std::size_t inconclusive_clients = 0;
    double measured_q = 0.0;
    double expected_q = 0.0;
    /// True when expected_q is a lower bound (aligned regime).
    bool expected_is_lower_bound = false;
    bool passed = false;
};

/// Requires benign clients with mu_k = 0 on the trigger feature and
/// malicious clients sharing the trigger mean. Inconclusive per-client
/// signs vote 0. Expected q: N'/N when w_k = 0, 1 when w_k mu_k < 0, and at
/// least 1 - N'/N when w_k mu_k > 0.
Corollary1Result check_corollary1(const synthdata::ScenarioConfig& scenario,
                                  std::span<const double> w, std::size_t n_samples,
                                  std::uint64_t seed);

struct FirstOrderDiagnostic {
    /// E[grad]^T g; negative means the update lowers the loss to first order.
    double gain = 0.0;
    /// sign(g_k) * sign(grad_k) per coordinate.
    std::vector<int> sign_products;
};

FirstOrderDiagnostic first_order_gain(std::span<const double> update,
                                      std::span<const double> client_grad);

}  // namespace invagg::theory
