#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

#include "jocor/error.hpp"

namespace jocor {

/// Row-major dense matrix of doubles; rows are examples throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

using Label = int;
using Labels = std::vector<Label>;

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
    return std::to_string(rows) + "x" + std::to_string(cols);
}

inline void require_shape(const Eigen::Ref<const Matrix>& m, Eigen::Index rows, Eigen::Index cols,
                          const char* what) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ShapeError(std::string(what) + ": expected " + shape_string(rows, cols) + ", got " +
                         shape_string(m.rows(), m.cols()));
    }
}

/// Copy of the listed rows, in the listed order.
inline Matrix gather_rows(const Eigen::Ref<const Matrix>& m, const std::vector<std::size_t>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

/// Index of the largest entry in a row; the lowest index wins ties.
inline Label argmax_row(const Eigen::Ref<const Matrix>& m, Eigen::Index row) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
        if (m(row, c) > m(row, best)) best = c;
    }
    return static_cast<Label>(best);
}

}  // namespace jocor
