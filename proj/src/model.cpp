#include "invagg/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "invagg/seeding.hpp"

namespace invagg::model {

double sigmoid(double z) noexcept {
    if (z >= 0.0) {
        return 1.0 / (1.0 + std::exp(-z));
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
}

namespace {

void check_label(int y) {
    if (y != 0 && y != 1) {
        throw std::invalid_argument("label must be 0 or 1, got " + std::to_string(y));
    }
}

void check_dims(std::size_t a, std::size_t b) {
    if (a != b) {
        throw std::invalid_argument("dimension mismatch: " + std::to_string(a) + " vs " +
                                    std::to_string(b));
    }
}

}  // namespace

double logistic_loss(double p, int y) {
    check_label(y);
    if (!(p > 0.0 && p < 1.0)) {
        throw std::domain_error("logistic_loss: probability must lie in (0, 1)");
    }
    return y == 1 ? -std::log(p) : -std::log1p(-p);
}

double dot(std::span<const double> a, std::span<const double> b) {
    check_dims(a.size(), b.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
    return acc;
}

double sample_loss(std::span<const double> w, const Sample& sample) {
    check_label(sample.label);
    const double z = dot(w, sample.features);
    // log(1 + e^{-z}) for y = 1 and log(1 + e^{z}) for y = 0
    const double m = sample.label == 1 ? -z : z;
    return m > 0.0 ? m + std::log1p(std::exp(-m)) : std::log1p(std::exp(m));
}

Vector point_gradient(std::span<const double> w, const Sample& sample) {
    const double r = sigmoid(dot(w, sample.features)) - sample.label;
    Vector g(sample.features.size());
    for (std::size_t k = 0; k < g.size(); ++k) g[k] = sample.features[k] * r;
    return g;
}

int predict(std::span<const double> w, std::span<const double> x) {
    return dot(w, x) >= 0.0 ? 1 : 0;
}

std::size_t local_step_count(std::size_t n, const LocalTrainConfig& cfg) {
    if (cfg.epochs == 0.0 || n == 0) return 0;
    const std::size_t batch = (cfg.batch_size == 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
    const std::size_t batches = (n + batch - 1) / batch;
    const double raw = cfg.epochs * static_cast<double>(batches);
    // tolerance keeps e.g. 0.3 * 10 from rounding up to 4
    const auto steps = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
    return std::max<std::size_t>(1, steps);
}

PseudoGradient local_train(std::span<const double> w0, const Dataset& data,
                           const LocalTrainConfig& cfg, std::uint64_t seed) {
    if (data.empty()) throw std::invalid_argument("local_train: empty dataset");
    if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) {
        throw std::invalid_argument("local_train: learning rate must be positive");
    }
    if (!(cfg.epochs >= 0.0) || !std::isfinite(cfg.epochs)) {
        throw std::invalid_argument("local_train: epochs must be non-negative");
    }
    const std::size_t d = w0.size();
    for (const auto& s : data) check_dims(s.features.size(), d);

    const std::size_t n = data.size();
    const std::size_t batch = (cfg.batch_size == 0 || cfg.batch_size >= n) ? n : cfg.batch_size;
    const std::size_t steps = local_step_count(n, cfg);

    // The displacement w0 - w is tracked directly so a single step returns
    // lr * mean_gradient without a round trip through w.
    PseudoGradient delta(d, 0.0);
    Vector w(w0.begin(), w0.end());
    Vector grad(d);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Engine rng = make_engine(seed);

    std::size_t cursor = n;  // forces a shuffle before the first mini-batch
    for (std::size_t step = 0; step < steps; ++step) {
        if (cursor >= n) {
            if (batch < n) std::shuffle(order.begin(), order.end(), rng);
            cursor = 0;
        }
        const std::size_t end = std::min(n, cursor + batch);
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t j = cursor; j < end; ++j) {
            const Sample& s = data[order[j]];
            const double r = sigmoid(dot(w, s.features)) - s.label;
            for (std::size_t k = 0; k < d; ++k) grad[k] += s.features[k] * r;
        }
        const double count = static_cast<double>(end - cursor);
        for (std::size_t k = 0; k < d; ++k) {
            delta[k] += cfg.lr * (grad[k] / count);
            w[k] = w0[k] - delta[k];
        }
        cursor = end;
    }
    return delta;
}

}  // namespace invagg::model
