#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "jocor/dataset.hpp"
#include "jocor/error.hpp"
#include "jocor/matrix.hpp"
#include "jocor/random.hpp"

namespace jocor {

/// Row-stochastic corruption matrix: q(i, j) = Pr[observed = j | true = i].
struct TransitionMatrix {
    int m = 0;
    Matrix q;
};

enum class NoiseKind { none, symmetric, asymmetric };

inline const char* to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::none: return "none";
        case NoiseKind::symmetric: return "symmetric";
        case NoiseKind::asymmetric: return "asymmetric";
    }
    return "?";
}

inline NoiseKind parse_noise_kind(const std::string& s) {
    if (s == "none") return NoiseKind::none;
    if (s == "symmetric") return NoiseKind::symmetric;
    if (s == "asymmetric") return NoiseKind::asymmetric;
    throw ConfigError("unknown noise kind '" + s + "' (expected none, symmetric or asymmetric)");
}

/// For asymmetric noise `rate` is the flip mass of each noisy class, so the
/// overall corrupted fraction under balanced classes is rate / 2.
struct NoiseSpec {
    NoiseKind kind = NoiseKind::none;
    double rate = 0.0;
    std::uint64_t seed = 0;

    double expected_noise_rate() const {
        switch (kind) {
            case NoiseKind::none: return 0.0;
            case NoiseKind::symmetric: return rate;
            case NoiseKind::asymmetric: return rate / 2.0;
        }
        return 0.0;
    }
};

/// Stays on the true class with probability 1 - rate, otherwise moves to each
/// other class with equal probability.
inline TransitionMatrix build_symmetric_q(int m, double rate) {
    if (m < 2) throw ConfigError("build_symmetric_q: need at least 2 classes");
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("build_symmetric_q: rate must lie in [0, 1)");
    TransitionMatrix t{m, Matrix::Constant(m, m, rate / static_cast<double>(m - 1))};
    t.q.diagonal().setConstant(1.0 - rate);
    return t;
}

/// Even-indexed classes flip to the next class (mod m) with probability
/// `rate`; odd-indexed classes are never corrupted.
inline TransitionMatrix build_asymmetric_q(int m, double rate) {
    if (m < 2) throw ConfigError("build_asymmetric_q: need at least 2 classes");
    if (!(rate >= 0.0 && rate <= 0.5)) throw ConfigError("build_asymmetric_q: rate must lie in [0, 0.5]");
    TransitionMatrix t{m, Matrix::Identity(m, m)};
    for (int i = 0; i < m; i += 2) {
        const int next = (i + 1) % m;
        t.q(i, i) = 1.0 - rate;
        t.q(i, next) += rate;
    }
    return t;
}

inline TransitionMatrix build_q(const NoiseSpec& spec, int m) {
    switch (spec.kind) {
        case NoiseKind::none: return build_symmetric_q(m, 0.0);
        case NoiseKind::symmetric: return build_symmetric_q(m, spec.rate);
        case NoiseKind::asymmetric: return build_asymmetric_q(m, spec.rate);
    }
    throw ConfigError("build_q: unknown noise kind");
}

/// Redraws every observed label from the q-row of its true label: one uniform
/// draw per example, in index order. Features and true labels are copied as-is.
inline LabeledDataset corrupt(const LabeledDataset& clean, const TransitionMatrix& t, std::uint64_t seed) {
    if (clean.class_count != t.m) {
        throw ConfigError("corrupt: dataset has " + std::to_string(clean.class_count) +
                          " classes, transition matrix has " + std::to_string(t.m));
    }
    LabeledDataset out = clean;
    Rng rng(seed);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Label y = out.true_labels[i];
        const double u = rng.uniform();
        double cumulative = 0.0;
        // Rounding can leave the row sum a hair below u; fall back to the last
        // class with positive mass.
        Label drawn = y;
        for (int j = t.m; j-- > 0;) {
            if (t.q(y, j) > 0.0) {
                drawn = j;
                break;
            }
        }
        for (int j = 0; j < t.m; ++j) {
            cumulative += t.q(y, j);
            if (u < cumulative) {
                drawn = j;
                break;
            }
        }
        out.observed_labels[i] = drawn;
    }
    return out;
}

}  // namespace jocor
