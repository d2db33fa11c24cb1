#pragma once

#include <cstddef>
#include <vector>

namespace dk {

// Plain row-major matrix of doubles. Used for frame features, embeddings and
// cluster centroids; the autodiff Tensor is reserved for differentiable state.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
    Mat(std::size_t r, std::size_t c, std::vector<double> d)
        : rows(r), cols(c), data(std::move(d)) {}

    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    double* row(std::size_t r) { return data.data() + r * cols; }
    const double* row(std::size_t r) const { return data.data() + r * cols; }
    bool empty() const { return rows == 0 || cols == 0; }

    bool operator==(const Mat& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

} // namespace dk
