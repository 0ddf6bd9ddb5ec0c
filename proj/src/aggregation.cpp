#include "invagg/aggregation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>

#include "invagg/seeding.hpp"

namespace invagg::aggregation {

namespace {

constexpr std::array<std::pair<AggregatorKind, std::string_view>, 11> kKindNames{{
    {AggregatorKind::fedavg, "fedavg"},
    {AggregatorKind::trimmed_mean, "trimmed_mean"},
    {AggregatorKind::and_mask, "and_mask"},
    {AggregatorKind::invariant, "invariant"},
    {AggregatorKind::krum, "krum"},
    {AggregatorKind::multi_krum, "multi_krum"},
    {AggregatorKind::multi_krum_cosine, "multi_krum_cosine"},
    {AggregatorKind::krum_then_trimmed, "krum_then_trimmed"},
    {AggregatorKind::sign_sgd, "sign_sgd"},
    {AggregatorKind::weak_dp, "weak_dp"},
    {AggregatorKind::mv_ratio_mask, "mv_ratio_mask"},
}};

int sign_of(double v) noexcept { return (v > 0.0) - (v < 0.0); }

/// Validates shape and returns the updates ordered by client id. Every
/// aggregator works in this order so results do not depend on how the
/// caller listed the updates.
std::vector<const ClientUpdate*> canonical(Updates updates) {
    if (updates.empty()) throw std::invalid_argument("aggregation: empty update list");
    const std::size_t d = updates.front().gradient.size();
    std::vector<const ClientUpdate*> out;
    out.reserve(updates.size());
    for (const auto& u : updates) {
        if (u.gradient.size() != d) {
            throw std::invalid_argument("aggregation: dimension mismatch for client " +
                                        std::to_string(u.client_id));
        }
        if (u.sample_count == 0) {
            throw std::invalid_argument("aggregation: sample_count must be >= 1");
        }
        out.push_back(&u);
    }
    std::stable_sort(out.begin(), out.end(), [](const ClientUpdate* a, const ClientUpdate* b) {
        return a->client_id < b->client_id;
    });
    return out;
}

std::vector<ClientUpdate> subset(Updates updates, const std::vector<std::size_t>& ids) {
    std::vector<ClientUpdate> out;
    for (const auto* u : canonical(updates)) {
        if (std::find(ids.begin(), ids.end(), u->client_id) != ids.end()) out.push_back(*u);
    }
    return out;
}

PseudoGradient apply_mask(const MaskVector& mask, PseudoGradient v) {
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = mask[k] ? v[k] : 0.0;
    return v;
}

double norm2(const Vector& v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

}  // namespace

std::string_view to_string(AggregatorKind kind) noexcept {
    for (const auto& [k, name] : kKindNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

AggregatorKind kind_from_string(std::string_view name) {
    for (const auto& [k, n] : kKindNames) {
        if (n == name) return k;
    }
    throw std::invalid_argument("unknown aggregator kind '" + std::string(name) + "'");
}

const std::vector<AggregatorKind>& all_kinds() {
    static const std::vector<AggregatorKind> kinds = [] {
        std::vector<AggregatorKind> v;
        for (const auto& [k, _] : kKindNames) v.push_back(k);
        return v;
    }();
    return kinds;
}

void validate(const AggregatorConfig& cfg) {
    using K = AggregatorKind;
    const K k = cfg.kind;
    const bool uses_tau = k == K::and_mask || k == K::invariant;
    const bool uses_alpha = k == K::trimmed_mean || k == K::invariant ||
                            k == K::krum_then_trimmed || k == K::mv_ratio_mask;
    if (uses_tau && !(cfg.tau >= 0.0 && cfg.tau <= 1.0)) {
        throw ValidationError("aggregator.tau", "must lie in [0, 1]");
    }
    if (uses_alpha && !(cfg.alpha >= 0.0 && cfg.alpha < 0.5)) {
        throw ValidationError("aggregator.alpha", "must lie in [0, 0.5)");
    }
    if (cfg.krum_select && *cfg.krum_select == 0) {
        throw ValidationError("aggregator.krum_select", "must be >= 1");
    }
    if (k == K::weak_dp) {
        if (!cfg.clip_norm || !(*cfg.clip_norm > 0.0) || !std::isfinite(*cfg.clip_norm)) {
            throw ValidationError("aggregator.clip_norm", "weak_dp requires a positive clip norm");
        }
        if (!cfg.noise_std || !(*cfg.noise_std >= 0.0) || !std::isfinite(*cfg.noise_std)) {
            throw ValidationError("aggregator.noise_std",
                                  "weak_dp requires a non-negative noise scale");
        }
    }
    if (k == K::mv_ratio_mask && !(cfg.mv_threshold > 0.0)) {
        throw ValidationError("aggregator.mv_threshold", "must be positive");
    }
    if (k == K::sign_sgd && !(cfg.sign_lr > 0.0)) {
        throw ValidationError("aggregator.sign_lr", "must be positive");
    }
}

PseudoGradient fedavg(Updates updates) {
    const auto ordered = canonical(updates);
    const std::size_t d = ordered.front()->gradient.size();
    const bool equal_counts =
        std::all_of(ordered.begin(), ordered.end(), [&](const ClientUpdate* u) {
            return u->sample_count == ordered.front()->sample_count;
        });
    PseudoGradient out(d, 0.0);
    if (equal_counts) {
        for (const auto* u : ordered) {
            for (std::size_t k = 0; k < d; ++k) out[k] += u->gradient[k];
        }
        const double n = static_cast<double>(ordered.size());
        for (auto& v : out) v /= n;
        return out;
    }
    double total = 0.0;
    for (const auto* u : ordered) {
        const double w = static_cast<double>(u->sample_count);
        total += w;
        for (std::size_t k = 0; k < d; ++k) out[k] += w * u->gradient[k];
    }
    for (auto& v : out) v /= total;
    return out;
}

double sign_consistency(Updates updates, std::size_t k) {
    const auto ordered = canonical(updates);
    if (k >= ordered.front()->gradient.size()) {
        throw std::out_of_range("sign_consistency: dimension out of range");
    }
    long votes = 0;
    for (const auto* u : ordered) votes += sign_of(u->gradient[k]);
    return std::abs(static_cast<double>(votes)) / static_cast<double>(ordered.size());
}

Vector sign_consistency_all(Updates updates) {
    const auto ordered = canonical(updates);
    const std::size_t d = ordered.front()->gradient.size();
    std::vector<long> votes(d, 0);
    for (const auto* u : ordered) {
        for (std::size_t k = 0; k < d; ++k) votes[k] += sign_of(u->gradient[k]);
    }
    Vector out(d);
    const double n = static_cast<double>(ordered.size());
    for (std::size_t k = 0; k < d; ++k) out[k] = std::abs(static_cast<double>(votes[k])) / n;
    return out;
}

MaskVector and_mask(Updates updates, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("and_mask: tau must lie in [0, 1]");
    const Vector consistency = sign_consistency_all(updates);
    MaskVector mask(consistency.size());
    for (std::size_t k = 0; k < mask.size(); ++k) mask[k] = consistency[k] >= tau ? 1 : 0;
    return mask;
}

std::size_t trim_count(std::size_t n, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw std::invalid_argument("trimmed mean: alpha must lie in [0, 1]");
    }
    const double raw = alpha * static_cast<double>(n);
    return static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
}

namespace {

// Sorts `values` in place when trimming is needed.
double trimmed_mean_inplace(std::vector<double>& values, double alpha) {
    const std::size_t n = values.size();
    const std::size_t t = trim_count(n, alpha);
    if (n == 0 || 2 * t >= n) {
        throw std::invalid_argument("trimmed mean: over-trimming (N - 2 ceil(alpha N) <= 0)");
    }
    if (t > 0) std::sort(values.begin(), values.end());
    double acc = 0.0;
    for (std::size_t i = t; i < n - t; ++i) acc += values[i];
    return acc / static_cast<double>(n - 2 * t);
}

}  // namespace

double trimmed_mean_scalar(std::span<const double> values, double alpha) {
    std::vector<double> copy(values.begin(), values.end());
    return trimmed_mean_inplace(copy, alpha);
}

PseudoGradient trimmed_mean(Updates updates, double alpha) {
    const auto ordered = canonical(updates);
    const std::size_t d = ordered.front()->gradient.size();
    PseudoGradient out(d);
    std::vector<double> column(ordered.size());
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t i = 0; i < ordered.size(); ++i) column[i] = ordered[i]->gradient[k];
        out[k] = trimmed_mean_inplace(column, alpha);
    }
    return out;
}

PseudoGradient invariant_aggregate(Updates updates, double tau, double alpha) {
    const MaskVector mask = and_mask(updates, tau);
    return apply_mask(mask, trimmed_mean(updates, alpha));
}

KrumScores krum_scores(Updates updates, std::size_t num_byzantine, bool cosine) {
    const auto ordered = canonical(updates);
    const std::size_t n = ordered.size();
    if (n < num_byzantine + 3) {
        throw std::invalid_argument("krum: need N >= f + 3 (N=" + std::to_string(n) +
                                    ", f=" + std::to_string(num_byzantine) + ")");
    }
    const std::size_t neighbours = n - num_byzantine - 2;

    std::vector<double> norms(n);
    for (std::size_t i = 0; i < n; ++i) norms[i] = norm2(ordered[i]->gradient);

    auto distance = [&](std::size_t i, std::size_t j) {
        const auto& a = ordered[i]->gradient;
        const auto& b = ordered[j]->gradient;
        if (cosine) {
            if (norms[i] == 0.0 || norms[j] == 0.0) return 1.0;
            double dp = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) dp += a[k] * b[k];
            return 1.0 - dp / (norms[i] * norms[j]);
        }
        double acc = 0.0;
        for (std::size_t k = 0; k < a.size(); ++k) {
            const double diff = a[k] - b[k];
            acc += diff * diff;
        }
        return acc;
    };

    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) dist[i * n + j] = dist[j * n + i] = distance(i, j);
    }

    KrumScores out;
    out.client_ids.reserve(n);
    out.scores.reserve(n);
    std::vector<double> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) row.push_back(dist[i * n + j]);
        }
        std::partial_sort(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(neighbours),
                          row.end());
        double score = 0.0;
        for (std::size_t j = 0; j < neighbours; ++j) score += row[j];
        out.client_ids.push_back(ordered[i]->client_id);
        out.scores.push_back(score);
    }
    return out;
}

std::vector<std::size_t> multi_krum_select(Updates updates, std::size_t num_byzantine,
                                           std::size_t m, bool cosine) {
    if (m == 0 || m > updates.size()) {
        throw std::invalid_argument("multi_krum: m must lie in [1, N]");
    }
    const KrumScores s = krum_scores(updates, num_byzantine, cosine);
    std::vector<std::size_t> idx(s.scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // idx is already in client-id order, so a stable sort breaks ties by id
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return s.scores[a] < s.scores[b]; });
    std::vector<std::size_t> ids;
    ids.reserve(m);
    for (std::size_t i = 0; i < m; ++i) ids.push_back(s.client_ids[idx[i]]);
    return ids;
}

namespace {

PseudoGradient select_and_average(Updates updates, std::size_t f, std::size_t m, bool cosine) {
    const auto ids = multi_krum_select(updates, f, m, cosine);
    const auto chosen = subset(updates, ids);
    const std::size_t d = chosen.front().gradient.size();
    PseudoGradient out(d, 0.0);
    for (const auto& u : chosen) {
        for (std::size_t k = 0; k < d; ++k) out[k] += u.gradient[k];
    }
    for (auto& v : out) v /= static_cast<double>(chosen.size());
    return out;
}

}  // namespace

PseudoGradient krum(Updates updates, std::size_t num_byzantine) {
    return select_and_average(updates, num_byzantine, 1, false);
}

PseudoGradient multi_krum(Updates updates, std::size_t num_byzantine, std::size_t m) {
    return select_and_average(updates, num_byzantine, m, false);
}

PseudoGradient multi_krum_cosine(Updates updates, std::size_t num_byzantine, std::size_t m) {
    return select_and_average(updates, num_byzantine, m, true);
}

PseudoGradient krum_then_trimmed(Updates updates, std::size_t num_byzantine, std::size_t m,
                                 double alpha) {
    const auto survivors = subset(updates, multi_krum_select(updates, num_byzantine, m, false));
    return trimmed_mean(survivors, alpha);
}

PseudoGradient sign_sgd_majority(Updates updates, double sign_lr) {
    const auto ordered = canonical(updates);
    const std::size_t d = ordered.front()->gradient.size();
    std::vector<long> votes(d, 0);
    for (const auto* u : ordered) {
        for (std::size_t k = 0; k < d; ++k) votes[k] += sign_of(u->gradient[k]);
    }
    PseudoGradient out(d);
    for (std::size_t k = 0; k < d; ++k) out[k] = sign_lr * static_cast<double>((votes[k] > 0) - (votes[k] < 0));
    return out;
}

PseudoGradient weak_dp(Updates updates, double clip_norm, double noise_std, std::uint64_t seed) {
    if (!(clip_norm > 0.0)) throw std::invalid_argument("weak_dp: clip_norm must be positive");
    if (!(noise_std >= 0.0)) throw std::invalid_argument("weak_dp: noise_std must be >= 0");
    std::vector<ClientUpdate> clipped(updates.begin(), updates.end());
    for (auto& u : clipped) {
        const double norm = norm2(u.gradient);
        if (norm > clip_norm) {
            const double scale = clip_norm / norm;
            for (auto& v : u.gradient) v *= scale;
        }
    }
    PseudoGradient out = fedavg(clipped);
    if (noise_std > 0.0) {
        Engine rng = make_engine(seed);
        std::normal_distribution<double> noise(0.0, noise_std);
        for (auto& v : out) v += noise(rng);
    }
    return out;
}

MaskVector mv_ratio_mask(Updates updates, double threshold) {
    const auto ordered = canonical(updates);
    const std::size_t n = ordered.size();
    if (n < 2) throw std::invalid_argument("mv_ratio_mask: need at least 2 updates");
    const std::size_t d = ordered.front()->gradient.size();
    MaskVector mask(d);
    for (std::size_t k = 0; k < d; ++k) {
        double mean = 0.0;
        for (const auto* u : ordered) mean += u->gradient[k];
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (const auto* u : ordered) {
            const double diff = u->gradient[k] - mean;
            ss += diff * diff;
        }
        const double sd = std::sqrt(ss / static_cast<double>(n - 1));
        if (sd == 0.0) {
            mask[k] = mean != 0.0 ? 1 : 0;
        } else {
            mask[k] = std::abs(mean) / sd >= threshold ? 1 : 0;
        }
    }
    return mask;
}

AggregateResult aggregate(Updates updates, const AggregatorConfig& cfg,
                          std::size_t default_byzantine, std::uint64_t seed) {
    validate(cfg);
    const std::size_t f = cfg.num_byzantine.value_or(default_byzantine);
    const std::size_t n = updates.size();
    const std::size_t m = cfg.krum_select.value_or(n > f ? n - f : 1);

    using K = AggregatorKind;
    switch (cfg.kind) {
        case K::fedavg:
            return {fedavg(updates), std::nullopt};
        case K::trimmed_mean:
            return {trimmed_mean(updates, cfg.alpha), std::nullopt};
        case K::and_mask: {
            MaskVector mask = and_mask(updates, cfg.tau);
            PseudoGradient v = apply_mask(mask, fedavg(updates));
            return {std::move(v), std::move(mask)};
        }
        case K::invariant: {
            MaskVector mask = and_mask(updates, cfg.tau);
            PseudoGradient v = apply_mask(mask, trimmed_mean(updates, cfg.alpha));
            return {std::move(v), std::move(mask)};
        }
        case K::krum:
            return {krum(updates, f), std::nullopt};
        case K::multi_krum:
            return {multi_krum(updates, f, m), std::nullopt};
        case K::multi_krum_cosine:
            return {multi_krum_cosine(updates, f, m), std::nullopt};
        case K::krum_then_trimmed:
            return {krum_then_trimmed(updates, f, m, cfg.alpha), std::nullopt};
        case K::sign_sgd:
            return {sign_sgd_majority(updates, cfg.sign_lr), std::nullopt};
        case K::weak_dp:
            return {weak_dp(updates, *cfg.clip_norm, *cfg.noise_std, seed), std::nullopt};
        case K::mv_ratio_mask: {
            MaskVector mask = mv_ratio_mask(updates, cfg.mv_threshold);
            PseudoGradient v = apply_mask(mask, trimmed_mean(updates, cfg.alpha));
            return {std::move(v), std::move(mask)};
        }
    }
    throw std::logic_error("aggregate: unhandled aggregator kind");
}

}  // namespace invagg::aggregation
