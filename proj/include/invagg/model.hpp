#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "invagg/types.hpp"

namespace invagg::model {

/// Logistic function 1 / (1 + e^{-z}), evaluated in the branch that never
/// exponentiates a positive argument.
double sigmoid(double z) noexcept;

/// Cross-entropy loss -y log(p) - (1-y) log(1-p).
/// Throws std::domain_error when p is outside (0, 1) and
/// std::invalid_argument when y is not 0 or 1.
double logistic_loss(double p, int y);

double dot(std::span<const double> a, std::span<const double> b);

/// Loss of the linear model at one sample: logistic_loss(sigmoid(w^T x), y),
/// computed from the logit so it stays finite for large |w^T x|.
double sample_loss(std::span<const double> w, const Sample& sample);

/// d/dw of the per-sample loss: x * (sigmoid(w^T x) - y).
Vector point_gradient(std::span<const double> w, const Sample& sample);

/// Decision rule 1[w^T x >= 0]; a tie classifies as 1.
int predict(std::span<const double> w, std::span<const double> x);

struct LocalTrainConfig {
    double lr = 0.1;
    /// Passes over the local data. Fractional values are allowed; a value of
    /// 0 performs no update.
    double epochs = 1.0;
    /// Mini-batch size; 0 means full batch.
    std::size_t batch_size = 0;
};

/// Number of optimizer steps local_train takes for `n` samples.
std::size_t local_step_count(std::size_t n, const LocalTrainConfig& cfg);

/// Seeded mini-batch SGD on the logistic loss starting at `w0`. Returns the
/// pseudo-gradient w0 - w_final. Samples are reshuffled at the start of each
/// epoch with a generator seeded from `seed`; the result is deterministic.
PseudoGradient local_train(std::span<const double> w0, const Dataset& data,
                           const LocalTrainConfig& cfg, std::uint64_t seed);

}  // namespace invagg::model
