#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "jocor/error.hpp"
#include "jocor/matrix.hpp"

namespace jocor {

/// Probabilities are clamped to [kProbabilityClamp, 1] before any logarithm.
inline constexpr double kProbabilityClamp = 1e-12;

inline double clamp_probability(double p) { return std::clamp(p, kProbabilityClamp, 1.0); }

/// d clamp(p) / dp: zero where the clamp is active.
inline double clamp_slope(double p) { return (p >= kProbabilityClamp && p <= 1.0) ? 1.0 : 0.0; }

namespace detail {

inline void check_labels(const Labels& labels, Eigen::Index rows, Eigen::Index classes) {
    if (static_cast<Eigen::Index>(labels.size()) != rows) {
        throw ShapeError("loss: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) + " rows");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes) {
            throw DataError("loss: label " + std::to_string(labels[i]) + " at batch index " + std::to_string(i) +
                            " outside [0, " + std::to_string(classes) + ")");
        }
    }
}

inline void check_pair(const Eigen::Ref<const Matrix>& p1, const Eigen::Ref<const Matrix>& p2) {
    if (p1.rows() != p2.rows() || p1.cols() != p2.cols()) {
        throw ShapeError("loss: prediction shapes differ (" + shape_string(p1.rows(), p1.cols()) + " vs " +
                         shape_string(p2.rows(), p2.cols()) + ")");
    }
}

}  // namespace detail

/// Per-example one-hot cross-entropy, -log p[i][y_i], in nats.
inline Vector cross_entropy(const Eigen::Ref<const Matrix>& p, const Labels& labels) {
    detail::check_labels(labels, p.rows(), p.cols());
    Vector out(p.rows());
    for (Eigen::Index i = 0; i < p.rows(); ++i) out(i) = -std::log(clamp_probability(p(i, labels[i])));
    return out;
}

/// Cross-entropy of both networks, summed per example.
inline Vector supervised_loss(const Eigen::Ref<const Matrix>& p1, const Eigen::Ref<const Matrix>& p2,
                              const Labels& labels) {
    detail::check_pair(p1, p2);
    return cross_entropy(p1, labels) + cross_entropy(p2, labels);
}

/// Symmetric KL divergence KL(p1 || p2) + KL(p2 || p1) per example, written
/// as sum_m (q1 - q2)(log q1 - log q2) over clamped probabilities. Each term
/// is nonnegative and the expression is exactly symmetric in its arguments.
inline Vector contrastive_loss(const Eigen::Ref<const Matrix>& p1, const Eigen::Ref<const Matrix>& p2) {
    detail::check_pair(p1, p2);
    Vector out(p1.rows());
    for (Eigen::Index i = 0; i < p1.rows(); ++i) {
        double sum = 0.0;
        for (Eigen::Index m = 0; m < p1.cols(); ++m) {
            const double a = clamp_probability(p1(i, m));
            const double b = clamp_probability(p2(i, m));
            sum += (a - b) * (std::log(a) - std::log(b));
        }
        out(i) = sum;
    }
    return out;
}

struct LossBreakdown {
    Vector per_example_sup;
    Vector per_example_con;
    Vector per_example_joint;
    double lambda = 0.0;
};

inline void check_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw ConfigError("lambda must lie in [0, 1], got " + std::to_string(lambda));
    }
}

/// (1 - lambda) * supervised + lambda * contrastive, per example.
inline LossBreakdown joint_loss(const Eigen::Ref<const Matrix>& p1, const Eigen::Ref<const Matrix>& p2,
                                const Labels& labels, double lambda) {
    check_lambda(lambda);
    LossBreakdown out;
    out.lambda = lambda;
    out.per_example_sup = supervised_loss(p1, p2, labels);
    out.per_example_con = contrastive_loss(p1, p2);
    out.per_example_joint = (1.0 - lambda) * out.per_example_sup + lambda * out.per_example_con;
    return out;
}

/// Fraction of each mini-batch kept: ramps linearly from 1 to 1 - tau over
/// the first t_k epochs, then stays at 1 - tau.
struct KeepSchedule {
    double tau = 0.0;
    int t_k = 10;

    void validate() const {
        if (!(tau >= 0.0 && tau < 1.0)) throw ConfigError("keep schedule: tau must lie in [0, 1)");
        if (t_k <= 0) throw ConfigError("keep schedule: t_k must be positive");
    }
};

inline double keep_rate(const KeepSchedule& schedule, int epoch) {
    const double t = static_cast<double>(std::max(epoch, 0));
    const double dropped = std::min(t / static_cast<double>(schedule.t_k) * schedule.tau, schedule.tau);
    return std::clamp(1.0 - dropped, 1.0 - schedule.tau, 1.0);
}

struct Selection {
    std::vector<std::size_t> kept_indices;  // ascending
    double keep_rate = 1.0;
};

/// ceil(rate * n), except that products within 1e-9 above an integer count as
/// that integer (0.7 * 10 is 7.000000000000001 in binary floating point).
inline std::size_t keep_count(double rate, std::size_t n) {
    const double x = rate * static_cast<double>(n);
    double k = std::ceil(x);
    if (k - x > 1.0 - 1e-9) k -= 1.0;
    return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, n);
}

/// Keeps the keep_count(rate, n) examples with the smallest loss; equal losses
/// go to the lower batch index.
inline Selection select_small_loss(const Eigen::Ref<const Vector>& losses, double rate) {
    if (losses.size() == 0) throw DataError("select_small_loss: empty batch");
    if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("select_small_loss: keep rate must lie in (0, 1]");

    const auto n = static_cast<std::size_t>(losses.size());
    const std::size_t k = keep_count(rate, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return losses(static_cast<Eigen::Index>(a)) < losses(static_cast<Eigen::Index>(b));
    });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return Selection{std::move(order), rate};
}

/// Mean of the losses at the kept indices.
inline double reduce_selected(const Eigen::Ref<const Vector>& losses, const Selection& sel) {
    if (sel.kept_indices.empty()) throw DataError("reduce_selected: empty selection");
    double sum = 0.0;
    for (std::size_t i : sel.kept_indices) {
        if (i >= static_cast<std::size_t>(losses.size())) {
            throw DataError("reduce_selected: index " + std::to_string(i) + " outside batch of " +
                            std::to_string(losses.size()));
        }
        sum += losses(static_cast<Eigen::Index>(i));
    }
    return sum / static_cast<double>(sel.kept_indices.size());
}

/// dL/dp for both networks where L = reduce_selected(joint_loss(...)). Row r
/// of each result corresponds to kept_indices[r]; dropped rows get no gradient.
struct PredictionGradients {
    Matrix d_p1;
    Matrix d_p2;
};

inline PredictionGradients joint_loss_gradient(const Eigen::Ref<const Matrix>& p1, const Eigen::Ref<const Matrix>& p2,
                                               const Labels& labels, double lambda, const Selection& sel) {
    detail::check_pair(p1, p2);
    detail::check_labels(labels, p1.rows(), p1.cols());
    check_lambda(lambda);
    if (sel.kept_indices.empty()) throw DataError("joint_loss_gradient: empty selection");

    const auto kept = static_cast<Eigen::Index>(sel.kept_indices.size());
    const double scale = 1.0 / static_cast<double>(kept);
    PredictionGradients g{Matrix::Zero(kept, p1.cols()), Matrix::Zero(kept, p1.cols())};
    for (Eigen::Index r = 0; r < kept; ++r) {
        const auto i = static_cast<Eigen::Index>(sel.kept_indices[static_cast<std::size_t>(r)]);
        for (Eigen::Index m = 0; m < p1.cols(); ++m) {
            const double a = clamp_probability(p1(i, m));
            const double b = clamp_probability(p2(i, m));
            const double log_ratio = std::log(a) - std::log(b);
            // d/da of (a - b)(log a - log b) is log(a/b) + (a - b)/a; symmetric for b.
            g.d_p1(r, m) = lambda * (log_ratio + (a - b) / a) * clamp_slope(p1(i, m));
            g.d_p2(r, m) = lambda * (-log_ratio + (b - a) / b) * clamp_slope(p2(i, m));
        }
        const Label y = labels[static_cast<std::size_t>(i)];
        g.d_p1(r, y) -= (1.0 - lambda) / clamp_probability(p1(i, y)) * clamp_slope(p1(i, y));
        g.d_p2(r, y) -= (1.0 - lambda) / clamp_probability(p2(i, y)) * clamp_slope(p2(i, y));
    }
    g.d_p1 *= scale;
    g.d_p2 *= scale;
    return g;
}

/// dL/dp for L = mean cross-entropy over `rows` of a single network. Row r of
/// the result corresponds to rows[r].
inline Matrix cross_entropy_gradient(const Eigen::Ref<const Matrix>& p, const Labels& labels,
                                     const std::vector<std::size_t>& rows) {
    detail::check_labels(labels, p.rows(), p.cols());
    if (rows.empty()) throw DataError("cross_entropy_gradient: empty selection");
    Matrix g = Matrix::Zero(static_cast<Eigen::Index>(rows.size()), p.cols());
    const double scale = 1.0 / static_cast<double>(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto i = static_cast<Eigen::Index>(rows[r]);
        const Label y = labels[rows[r]];
        g(static_cast<Eigen::Index>(r), y) = -scale / clamp_probability(p(i, y)) * clamp_slope(p(i, y));
    }
    return g;
}

}  // namespace jocor
