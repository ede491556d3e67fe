#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "stvsa/errors.hpp"

namespace stvsa {

/// Plain row-major matrix of doubles for feature data. No graph attachment;
/// the autodiff Tensor is for model internals, this is for datasets.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), v(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> data)
        : rows(r), cols(c), v(std::move(data)) {
        if (v.size() != r * c)
            throw ShapeError("matrix: " + std::to_string(r) + "x" +
                             std::to_string(c) + " needs " + std::to_string(r * c) +
                             " values, got " + std::to_string(v.size()));
    }

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    std::span<const double> row(std::size_t r) const {
        return {v.data() + r * cols, cols};
    }
    bool empty() const { return rows == 0 || cols == 0; }
};

}  // namespace stvsa
