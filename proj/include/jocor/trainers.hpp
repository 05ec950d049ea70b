#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jocor/adam.hpp"
#include "jocor/dataset.hpp"
#include "jocor/error.hpp"
#include "jocor/losses.hpp"
#include "jocor/mlp.hpp"
#include "jocor/random.hpp"

namespace jocor {

enum class Variant { jocor, standard, standard_plus, joint_only, decoupling, co_teaching };

inline const char* to_string(Variant v) {
    switch (v) {
        case Variant::jocor: return "jocor";
        case Variant::standard: return "standard";
        case Variant::standard_plus: return "standard_plus";
        case Variant::joint_only: return "joint_only";
        case Variant::decoupling: return "decoupling";
        case Variant::co_teaching: return "co_teaching";
    }
    return "?";
}

inline Variant parse_variant(const std::string& s) {
    for (Variant v : {Variant::jocor, Variant::standard, Variant::standard_plus, Variant::joint_only,
                      Variant::decoupling, Variant::co_teaching}) {
        if (s == to_string(v)) return v;
    }
    throw ConfigError("unknown trainer '" + s +
                      "' (expected jocor, standard, standard_plus, joint_only, decoupling or co_teaching)");
}

inline int network_count(Variant v) {
    return (v == Variant::standard || v == Variant::standard_plus) ? 1 : 2;
}

/// Linear decay to zero. `start_epoch`/`end_epoch` count completed epochs:
/// the rate is constant while at most `start_epoch` epochs have finished and
/// reaches zero once `end_epoch` have.
struct LrDecay {
    int start_epoch = 0;
    int end_epoch = 0;
};

/// Learning rate for 1-based `epoch`.
inline double learning_rate_at(double base, const std::optional<LrDecay>& decay, int epoch) {
    if (!decay) return base;
    const int done = epoch - 1;
    if (done <= decay->start_epoch) return base;
    if (done >= decay->end_epoch) return 0.0;
    return base * static_cast<double>(decay->end_epoch - done) /
           static_cast<double>(decay->end_epoch - decay->start_epoch);
}

struct TrainerConfig {
    Variant variant = Variant::jocor;
    double lambda = 0.95;
    KeepSchedule schedule;
    AdamConfig adam;
    int epochs = 200;
    std::size_t batch_size = 128;
    std::optional<LrDecay> lr_decay;
    std::vector<std::size_t> hidden_widths{256};
    /// Initialization seeds for network 1 and network 2.
    std::array<std::uint64_t, 2> seeds{1, 2};
    std::uint64_t shuffle_seed = 0;

    void validate() const {
        if (variant == Variant::jocor) check_lambda(lambda);
        schedule.validate();
        adam.validate();
        if (epochs < 0) throw ConfigError("trainer: epochs must be >= 0");
        if (batch_size == 0) throw ConfigError("trainer: batch_size must be positive");
        if (lr_decay && !(lr_decay->start_epoch >= 0 && lr_decay->end_epoch > lr_decay->start_epoch)) {
            throw ConfigError("trainer: lr decay needs 0 <= start_epoch < end_epoch");
        }
        for (std::size_t w : hidden_widths) {
            if (w == 0) throw ConfigError("trainer: hidden widths must be positive");
        }
    }
};

/// One row of the per-epoch metric log. For single-network trainers
/// `test_accuracy[1]` is empty.
struct EpochRecord {
    int epoch = 0;
    std::array<std::optional<double>, 2> test_accuracy;
    double label_precision = 0.0;
    double keep_rate = 1.0;
    double mean_joint_loss = 0.0;
    double learning_rate = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> records;
    std::vector<MlpNetwork> networks;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Fraction of examples predicted correctly (argmax, lowest class on ties)
/// against the ground-truth labels.
inline double evaluate(const MlpNetwork& net, const LabeledDataset& test) {
    if (test.empty()) throw DataError("evaluate: empty test set");
    constexpr Eigen::Index chunk = 1024;
    std::size_t correct = 0;
    const Eigen::Index n = test.features.rows();
    for (Eigen::Index start = 0; start < n; start += chunk) {
        const Eigen::Index rows = std::min(chunk, n - start);
        const Labels predicted = predict(net, test.features.middleRows(start, rows));
        for (Eigen::Index r = 0; r < rows; ++r) {
            correct += predicted[static_cast<std::size_t>(r)] == test.true_labels[static_cast<std::size_t>(start + r)];
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

inline std::vector<double> evaluate(const std::vector<MlpNetwork>& nets, const LabeledDataset& test) {
    std::vector<double> out;
    for (const auto& net : nets) out.push_back(evaluate(net, test));
    return out;
}

/// Fraction of the selected examples whose observed label is the true one.
inline double label_precision(const Selection& sel, const Labels& batch_observed, const Labels& batch_true) {
    if (sel.kept_indices.empty()) throw DataError("label_precision: empty selection");
    std::size_t clean = 0;
    for (std::size_t i : sel.kept_indices) clean += batch_observed.at(i) == batch_true.at(i);
    return static_cast<double>(clean) / static_cast<double>(sel.kept_indices.size());
}

namespace detail {

struct Batch {
    Matrix x;
    Labels observed;
    Labels truth;  // metrics only
};

struct BatchOutcome {
    std::optional<double> loss;  // empty when the batch caused no update
    std::size_t selected = 0;
    std::size_t clean_selected = 0;
};

inline std::size_t count_clean(const std::vector<std::size_t>& rows, const Batch& b) {
    std::size_t clean = 0;
    for (std::size_t i : rows) clean += b.observed[i] == b.truth[i];
    return clean;
}

inline std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

/// Mean cross-entropy over `rows`, backpropagated through `net`.
inline Gradients cross_entropy_step_gradients(const MlpNetwork& net, const ForwardTrace& trace, const Labels& labels,
                                              const std::vector<std::size_t>& rows) {
    const Matrix d_p = cross_entropy_gradient(trace.probabilities, labels, rows);
    if (rows.size() == static_cast<std::size_t>(trace.batch_size())) return backward(net, trace, d_p);
    return backward(net, select_rows(trace, rows), d_p);
}

inline void require_finite(const Eigen::Ref<const Vector>& losses) {
    if (!losses.allFinite()) throw NumericError("non-finite loss");
}

class NumericContext {
public:
    NumericContext(int epoch, std::size_t batch) : epoch_(epoch), batch_(batch) {}

    template <typename F>
    void run(F&& f) const {
        try {
            f();
        } catch (const NumericError& e) {
            throw NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch_) + ", batch " +
                               std::to_string(batch_) + ")");
        }
    }

private:
    int epoch_;
    std::size_t batch_;
};

using StepFn = std::function<BatchOutcome(std::vector<MlpNetwork>&, const Batch&, double keep, const AdamConfig&)>;

/// Shared epoch loop: seeded shuffle, fixed-size mini-batches (the short tail
/// batch is kept), per-epoch keep rate and learning rate, evaluation, record.
/// Epoch t (1-based) uses keep rate R(t - 1).
inline TrainResult run_epochs(const LabeledDataset& data, const LabeledDataset& test, const TrainerConfig& cfg,
                              int nets, bool uses_schedule, const StepFn& step, const EpochCallback& on_epoch) {
    cfg.validate();
    data.validate();
    if (data.empty()) throw DataError("trainer: empty training set");
    if (test.class_count != data.class_count) throw ConfigError("trainer: train and test class counts differ");
    if (test.dim() != data.dim() && !test.empty()) throw ShapeError("trainer: train and test feature widths differ");

    std::vector<std::size_t> widths{static_cast<std::size_t>(data.dim())};
    widths.insert(widths.end(), cfg.hidden_widths.begin(), cfg.hidden_widths.end());
    widths.push_back(static_cast<std::size_t>(data.class_count));

    TrainResult result;
    for (int k = 0; k < nets; ++k) result.networks.push_back(init_network(widths, cfg.seeds[static_cast<std::size_t>(k)]));

    Rng shuffler(cfg.shuffle_seed);
    std::vector<std::size_t> order = all_rows(data.size());
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double keep = uses_schedule ? keep_rate(cfg.schedule, epoch - 1) : 1.0;
        AdamConfig adam = cfg.adam;
        adam.learning_rate = learning_rate_at(cfg.adam.learning_rate, cfg.lr_decay, epoch);

        shuffler.shuffle(std::span<std::size_t>(order));
        double loss_sum = 0.0;
        std::size_t loss_batches = 0, selected = 0, clean = 0, seen = 0;
        std::size_t batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const std::size_t end = std::min(start + cfg.batch_size, order.size());
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                order.begin() + static_cast<std::ptrdiff_t>(end));
            Batch b{gather_rows(data.features, rows), {}, {}};
            for (std::size_t i : rows) {
                b.observed.push_back(data.observed_labels[i]);
                b.truth.push_back(data.true_labels[i]);
            }

            BatchOutcome out;
            NumericContext(epoch, batch_index).run([&] { out = step(result.networks, b, keep, adam); });
            if (out.loss) {
                loss_sum += *out.loss;
                ++loss_batches;
            }
            selected += out.selected;
            clean += out.clean_selected;
            seen += rows.size();
        }

        EpochRecord rec;
        rec.epoch = epoch;
        for (int k = 0; k < nets; ++k) {
            rec.test_accuracy[static_cast<std::size_t>(k)] = evaluate(result.networks[static_cast<std::size_t>(k)], test);
        }
        rec.label_precision = selected ? static_cast<double>(clean) / static_cast<double>(selected) : 0.0;
        rec.keep_rate = uses_schedule ? keep : static_cast<double>(selected) / static_cast<double>(seen);
        rec.mean_joint_loss = loss_batches ? loss_sum / static_cast<double>(loss_batches) : 0.0;
        rec.learning_rate = adam.learning_rate;
        result.records.push_back(rec);
        if (on_epoch) on_epoch(rec);
    }
    return result;
}

/// Validates all gradients before stepping either network, so both networks
/// move together or not at all. Lock-step per-network Adam states are
/// element-wise identical to one state over the concatenated parameters.
inline void adam_step_joint(MlpNetwork& a, const Gradients& ga, MlpNetwork& b, const Gradients& gb,
                            const AdamConfig& cfg) {
    check_gradients(a, ga);
    check_gradients(b, gb);
    adam_step(a, ga, cfg);
    adam_step(b, gb, cfg);
}

struct JointStepGradients {
    Selection selection;
    double loss = 0.0;
    Gradients net1;
    Gradients net2;
};

/// Selection plus gradients of the averaged selected joint loss for both networks.
inline JointStepGradients joint_gradients(const MlpNetwork& n1, const MlpNetwork& n2, const Eigen::Ref<const Matrix>& x,
                                          const Labels& observed, double lambda, double keep) {
    const ForwardTrace t1 = forward(n1, x);
    const ForwardTrace t2 = forward(n2, x);
    const LossBreakdown losses = joint_loss(t1.probabilities, t2.probabilities, observed, lambda);
    require_finite(losses.per_example_joint);
    JointStepGradients out;
    out.selection = select_small_loss(losses.per_example_joint, keep);
    out.loss = reduce_selected(losses.per_example_joint, out.selection);

    const PredictionGradients d = joint_loss_gradient(t1.probabilities, t2.probabilities, observed, lambda, out.selection);
    out.net1 = backward(n1, select_rows(t1, out.selection.kept_indices), d.d_p1);
    out.net2 = backward(n2, select_rows(t2, out.selection.kept_indices), d.d_p2);
    return out;
}

inline BatchOutcome jocor_step(std::vector<MlpNetwork>& nets, const Batch& b, double keep, const AdamConfig& adam,
                               double lambda) {
    const JointStepGradients g = joint_gradients(nets[0], nets[1], b.x, b.observed, lambda, keep);
    adam_step_joint(nets[0], g.net1, nets[1], g.net2, adam);
    const auto& kept = g.selection.kept_indices;
    return {g.loss, kept.size(), count_clean(kept, b)};
}

inline BatchOutcome single_step(std::vector<MlpNetwork>& nets, const Batch& b, double keep, const AdamConfig& adam) {
    const ForwardTrace t = forward(nets[0], b.x);
    const Vector ce = cross_entropy(t.probabilities, b.observed);
    require_finite(ce);
    const Selection sel = select_small_loss(ce, keep);
    const double loss = reduce_selected(ce, sel);
    adam_step(nets[0], cross_entropy_step_gradients(nets[0], t, b.observed, sel.kept_indices), adam);
    return {loss, sel.kept_indices.size(), count_clean(sel.kept_indices, b)};
}

inline BatchOutcome co_teaching_step(std::vector<MlpNetwork>& nets, const Batch& b, double keep,
                                     const AdamConfig& adam) {
    const ForwardTrace t1 = forward(nets[0], b.x);
    const ForwardTrace t2 = forward(nets[1], b.x);
    const Vector ce1 = cross_entropy(t1.probabilities, b.observed);
    const Vector ce2 = cross_entropy(t2.probabilities, b.observed);
    require_finite(ce1);
    require_finite(ce2);
    const Selection sel1 = select_small_loss(ce1, keep);
    const Selection sel2 = select_small_loss(ce2, keep);

    // Cross update: each network learns from the examples its peer picked.
    const double loss1 = reduce_selected(ce1, sel2);
    const double loss2 = reduce_selected(ce2, sel1);
    const Gradients g1 = cross_entropy_step_gradients(nets[0], t1, b.observed, sel2.kept_indices);
    const Gradients g2 = cross_entropy_step_gradients(nets[1], t2, b.observed, sel1.kept_indices);
    adam_step(nets[0], g1, adam);
    adam_step(nets[1], g2, adam);
    return {0.5 * (loss1 + loss2), sel1.kept_indices.size() + sel2.kept_indices.size(),
            count_clean(sel1.kept_indices, b) + count_clean(sel2.kept_indices, b)};
}

inline BatchOutcome decoupling_step(std::vector<MlpNetwork>& nets, const Batch& b, const AdamConfig& adam) {
    const ForwardTrace t1 = forward(nets[0], b.x);
    const ForwardTrace t2 = forward(nets[1], b.x);
    std::vector<std::size_t> disagree;
    for (Eigen::Index r = 0; r < t1.batch_size(); ++r) {
        if (argmax_row(t1.probabilities, r) != argmax_row(t2.probabilities, r)) {
            disagree.push_back(static_cast<std::size_t>(r));
        }
    }
    if (disagree.empty()) return {};

    const Selection sel{disagree, 1.0};
    const Vector ce1 = cross_entropy(t1.probabilities, b.observed);
    const Vector ce2 = cross_entropy(t2.probabilities, b.observed);
    require_finite(ce1);
    require_finite(ce2);
    const double loss1 = reduce_selected(ce1, sel);
    const double loss2 = reduce_selected(ce2, sel);
    const Gradients g1 = cross_entropy_step_gradients(nets[0], t1, b.observed, disagree);
    const Gradients g2 = cross_entropy_step_gradients(nets[1], t2, b.observed, disagree);
    adam_step(nets[0], g1, adam);
    adam_step(nets[1], g2, adam);
    // Both networks train on the same set; count it once.
    return {0.5 * (loss1 + loss2), disagree.size(), count_clean(disagree, b)};
}

inline void require_variant(const TrainerConfig& cfg, Variant expected, const char* fn) {
    if (cfg.variant != expected) {
        throw ConfigError(std::string(fn) + ": config variant is " + to_string(cfg.variant) + ", expected " +
                          to_string(expected));
    }
}

}  // namespace detail

/// Two networks, one joint loss (supervised + lambda-weighted symmetric KL),
/// small-loss selection on that joint loss, one update of both networks.
inline TrainResult train_jocor(const LabeledDataset& data, const LabeledDataset& test, const TrainerConfig& cfg,
                               const EpochCallback& on_epoch = {}) {
    if (cfg.variant != Variant::jocor && cfg.variant != Variant::joint_only) {
        detail::require_variant(cfg, Variant::jocor, "train_jocor");
    }
    const double lambda = cfg.variant == Variant::joint_only ? 0.0 : cfg.lambda;
    return detail::run_epochs(
        data, test, cfg, 2, true,
        [lambda](auto& nets, const auto& b, double keep, const AdamConfig& adam) {
            return detail::jocor_step(nets, b, keep, adam, lambda);
        },
        on_epoch);
}

/// JoCoR with the co-regularization weight forced to zero.
inline TrainResult train_joint_only(const LabeledDataset& data, const LabeledDataset& test, TrainerConfig cfg,
                                    const EpochCallback& on_epoch = {}) {
    detail::require_variant(cfg, Variant::joint_only, "train_joint_only");
    cfg.lambda = 0.0;
    return train_jocor(data, test, cfg, on_epoch);
}

/// One network, plain cross-entropy on every example. Label precision is the
/// clean fraction of the whole batch.
inline TrainResult train_standard(const LabeledDataset& data, const LabeledDataset& test, const TrainerConfig& cfg,
                                  const EpochCallback& on_epoch = {}) {
    detail::require_variant(cfg, Variant::standard, "train_standard");
    return detail::run_epochs(
        data, test, cfg, 1, false,
        [](auto& nets, const auto& b, double, const AdamConfig& adam) {
            return detail::single_step(nets, b, 1.0, adam);
        },
        on_epoch);
}

/// One network trained on the small-loss fraction of each batch, ranked by its own loss.
inline TrainResult train_standard_plus(const LabeledDataset& data, const LabeledDataset& test,
                                       const TrainerConfig& cfg, const EpochCallback& on_epoch = {}) {
    detail::require_variant(cfg, Variant::standard_plus, "train_standard_plus");
    return detail::run_epochs(data, test, cfg, 1, true, detail::single_step, on_epoch);
}

/// Two networks with independent optimizers; each updates on the small-loss
/// examples chosen by the other. Label precision pools both selections.
inline TrainResult train_co_teaching(const LabeledDataset& data, const LabeledDataset& test,
                                     const TrainerConfig& cfg, const EpochCallback& on_epoch = {}) {
    detail::require_variant(cfg, Variant::co_teaching, "train_co_teaching");
    return detail::run_epochs(data, test, cfg, 2, true, detail::co_teaching_step, on_epoch);
}

/// Two networks that update only on examples where their predicted classes
/// differ; a batch with no disagreement causes no update.
inline TrainResult train_decoupling(const LabeledDataset& data, const LabeledDataset& test, const TrainerConfig& cfg,
                                    const EpochCallback& on_epoch = {}) {
    detail::require_variant(cfg, Variant::decoupling, "train_decoupling");
    return detail::run_epochs(
        data, test, cfg, 2, false,
        [](auto& nets, const auto& b, double, const AdamConfig& adam) {
            return detail::decoupling_step(nets, b, adam);
        },
        on_epoch);
}

/// Dispatches on `cfg.variant`.
inline TrainResult train(const LabeledDataset& data, const LabeledDataset& test, const TrainerConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
    switch (cfg.variant) {
        case Variant::jocor: return train_jocor(data, test, cfg, on_epoch);
        case Variant::joint_only: return train_joint_only(data, test, cfg, on_epoch);
        case Variant::standard: return train_standard(data, test, cfg, on_epoch);
        case Variant::standard_plus: return train_standard_plus(data, test, cfg, on_epoch);
        case Variant::co_teaching: return train_co_teaching(data, test, cfg, on_epoch);
        case Variant::decoupling: return train_decoupling(data, test, cfg, on_epoch);
    }
    throw ConfigError("train: unknown variant");
}

}  // namespace jocor
