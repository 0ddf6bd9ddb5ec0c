#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "invagg/types.hpp"

namespace invagg::aggregation {

struct ClientUpdate {
    std::size_t client_id = 0;
    PseudoGradient gradient;
    std::size_t sample_count = 1;
};

using Updates = std::span<const ClientUpdate>;

enum class AggregatorKind {
    fedavg,
    trimmed_mean,
    and_mask,
    invariant,
    krum,
    multi_krum,
    multi_krum_cosine,
    krum_then_trimmed,
    sign_sgd,
    weak_dp,
    mv_ratio_mask,
};

std::string_view to_string(AggregatorKind kind) noexcept;
/// Throws std::invalid_argument on an unknown name.
AggregatorKind kind_from_string(std::string_view name);
const std::vector<AggregatorKind>& all_kinds();

struct AggregatorConfig {
    AggregatorKind kind = AggregatorKind::invariant;
    double tau = 0.2;
    double alpha = 0.25;
    /// f for the Krum family. Unset means "use the scenario's malicious count".
    std::optional<std::size_t> num_byzantine;
    /// m, the number of lowest-score updates multi-Krum keeps. Unset means N - f.
    std::optional<std::size_t> krum_select;
    /// Required by weak_dp; no default is claimed.
    std::optional<double> clip_norm;
    std::optional<double> noise_std;
    double mv_threshold = 1.0;
    double sign_lr = 0.01;

    bool operator==(const AggregatorConfig&) const = default;
};

/// Checks the parameters `kind` uses. Throws ValidationError naming the
/// field ("aggregator.tau", ...).
void validate(const AggregatorConfig& cfg);

/// Sample-count weighted mean; the plain arithmetic mean when all counts
/// are equal.
PseudoGradient fedavg(Updates updates);

/// |(1/N) sum_i sign(g_{i,k})| with sign(0) = 0, one vote per client.
double sign_consistency(Updates updates, std::size_t k);
Vector sign_consistency_all(Updates updates);

/// Bit k is set iff sign_consistency(updates, k) >= tau.
MaskVector and_mask(Updates updates, double tau);

/// ceil(alpha * n), tolerant to representation error in alpha * n.
std::size_t trim_count(std::size_t n, double alpha);

/// Mean of the order statistics left after dropping ceil(alpha N) values
/// from each tail. Throws std::invalid_argument when nothing would remain.
double trimmed_mean_scalar(std::span<const double> values, double alpha);

/// Coordinate-wise trimmed mean; sample counts are ignored.
PseudoGradient trimmed_mean(Updates updates, double alpha);

/// AND-mask applied elementwise to the coordinate-wise trimmed mean.
PseudoGradient invariant_aggregate(Updates updates, double tau, double alpha);

/// Krum scores: for each update, the sum of its distances to the N - f - 2
/// closest other updates. `cosine` switches the distance from squared
/// Euclidean to 1 - cosine similarity (zero vectors have similarity 0).
/// Entries are ordered by client id.
struct KrumScores {
    std::vector<std::size_t> client_ids;
    std::vector<double> scores;
};
KrumScores krum_scores(Updates updates, std::size_t num_byzantine, bool cosine);

/// Client ids of the m lowest-scoring updates, ties broken by lower id.
std::vector<std::size_t> multi_krum_select(Updates updates, std::size_t num_byzantine,
                                           std::size_t m, bool cosine);

PseudoGradient krum(Updates updates, std::size_t num_byzantine);
PseudoGradient multi_krum(Updates updates, std::size_t num_byzantine, std::size_t m);
PseudoGradient multi_krum_cosine(Updates updates, std::size_t num_byzantine, std::size_t m);
PseudoGradient krum_then_trimmed(Updates updates, std::size_t num_byzantine, std::size_t m,
                                 double alpha);

/// sign_lr * sign(sum_i sign(g_{i,k})) per coordinate.
PseudoGradient sign_sgd_majority(Updates updates, double sign_lr);

/// Each update is scaled by min(1, clip_norm / ||g||), the results are
/// averaged like fedavg, then N(0, noise_std^2) noise is added per
/// coordinate from a generator seeded with `seed`.
PseudoGradient weak_dp(Updates updates, double clip_norm, double noise_std, std::uint64_t seed);

/// Bit k is set iff |mean| / sd >= threshold over {g_{i,k}} (sample sd,
/// N - 1 denominator). Zero sd: set iff the mean is nonzero.
MaskVector mv_ratio_mask(Updates updates, double threshold);

struct AggregateResult {
    PseudoGradient value;
    /// Present for the masking aggregators (and_mask, invariant, mv_ratio_mask).
    std::optional<MaskVector> mask;
};

/// Dispatches on cfg.kind. `default_byzantine` fills an unset
/// cfg.num_byzantine; `seed` feeds weak_dp's noise.
AggregateResult aggregate(Updates updates, const AggregatorConfig& cfg,
                          std::size_t default_byzantine, std::uint64_t seed);

}  // namespace invagg::aggregation
