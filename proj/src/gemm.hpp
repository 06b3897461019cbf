#pragma once

#include <Eigen/Core>

#include "docnn/tensor.hpp"

namespace docnn::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixView = Eigen::Map<RowMatrix>;
using ConstMatrixView = Eigen::Map<const RowMatrix>;

inline ConstMatrixView as_matrix(const Tensor& t, std::size_t rows, std::size_t cols) {
    return ConstMatrixView(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

inline MatrixView as_matrix(Tensor& t, std::size_t rows, std::size_t cols) {
    return MatrixView(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

}  // namespace docnn::detail
