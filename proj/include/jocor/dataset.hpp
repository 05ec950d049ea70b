#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "jocor/error.hpp"
#include "jocor/matrix.hpp"

namespace jocor {

/// Features with the labels a learner sees (`observed_labels`) and the
/// ground truth (`true_labels`). Trainers read `true_labels` only to compute
/// metrics.
struct LabeledDataset {
    Matrix features;
    Labels observed_labels;
    Labels true_labels;
    int class_count = 0;

    std::size_t size() const { return observed_labels.size(); }
    bool empty() const { return observed_labels.empty(); }
    Eigen::Index dim() const { return features.cols(); }

    void validate() const {
        if (class_count < 2) throw ConfigError("dataset: class_count must be >= 2");
        if (static_cast<std::size_t>(features.rows()) != observed_labels.size() ||
            observed_labels.size() != true_labels.size()) {
            throw ShapeError("dataset: " + std::to_string(features.rows()) + " feature rows, " +
                             std::to_string(observed_labels.size()) + " observed labels, " +
                             std::to_string(true_labels.size()) + " true labels");
        }
        for (std::size_t i = 0; i < observed_labels.size(); ++i) {
            if (observed_labels[i] < 0 || observed_labels[i] >= class_count || true_labels[i] < 0 ||
                true_labels[i] >= class_count) {
                throw DataError("dataset: label out of range at index " + std::to_string(i));
            }
        }
    }
};

/// The listed examples, in order.
inline LabeledDataset subset(const LabeledDataset& data, const std::vector<std::size_t>& indices) {
    LabeledDataset out;
    out.class_count = data.class_count;
    out.features = gather_rows(data.features, indices);
    out.observed_labels.reserve(indices.size());
    out.true_labels.reserve(indices.size());
    for (std::size_t i : indices) {
        out.observed_labels.push_back(data.observed_labels.at(i));
        out.true_labels.push_back(data.true_labels.at(i));
    }
    return out;
}

/// Fraction of examples whose observed label differs from the true label.
inline double noise_fraction(const LabeledDataset& data) {
    if (data.empty()) return 0.0;
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < data.size(); ++i) flipped += data.observed_labels[i] != data.true_labels[i];
    return static_cast<double>(flipped) / static_cast<double>(data.size());
}

/// FNV-1a over a label vector; identifies a corruption draw in run metadata.
inline std::uint64_t label_hash(const Labels& labels) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Label l : labels) {
        auto v = static_cast<std::uint32_t>(l);
        for (int b = 0; b < 4; ++b) {
            h ^= (v >> (8 * b)) & 0xffU;
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

}  // namespace jocor
