#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace heml {

// Dense row-major matrix of feature vectors, one sample per row.
struct EmbeddingMatrix {
    std::vector<double> data;
    std::size_t rows = 0;
    std::size_t dim = 0;

    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::size_t rows_, std::size_t dim_)
        : data(rows_ * dim_, 0.0), rows(rows_), dim(dim_) {}
    EmbeddingMatrix(std::size_t rows_, std::size_t dim_, std::vector<double> values)
        : data(std::move(values)), rows(rows_), dim(dim_) {
        if (data.size() != rows * dim)
            throw std::invalid_argument("EmbeddingMatrix: data length != rows * dim");
    }

    std::span<const double> row(std::size_t i) const {
        return {data.data() + i * dim, dim};
    }
    std::span<double> row(std::size_t i) {
        return {data.data() + i * dim, dim};
    }

    void set_row(std::size_t i, std::span<const double> values) {
        if (values.size() != dim)
            throw std::invalid_argument("EmbeddingMatrix::set_row: dimension mismatch");
        std::copy(values.begin(), values.end(), data.begin() + static_cast<std::ptrdiff_t>(i * dim));
    }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

// Non-negative identity index.
struct IdentityLabel {
    std::uint32_t id = 0;

    IdentityLabel() = default;
    explicit IdentityLabel(std::uint32_t id_) : id(id_) {}

    friend bool operator==(IdentityLabel, IdentityLabel) = default;
    friend auto operator<=>(IdentityLabel, IdentityLabel) = default;
};

// A batch of `groups` identity groups with `per_group` instances each.
// Row i of `features` carries label labels[i].
struct GroupedBatch {
    EmbeddingMatrix features;
    std::vector<IdentityLabel> labels;
    std::size_t groups = 0;
    std::size_t per_group = 0;

    std::size_t size() const { return groups * per_group; }

    // Enforces the batch shape: C >= 2, N >= 2, exactly C distinct labels
    // occurring N times each.
    void validate() const;
};

// Distances from one query to a set of samples; sample_indices[i] names the
// source row of values[i]. Sorting keeps the two arrays parallel and breaks
// value ties by ascending sample index.
struct DistanceList {
    std::vector<double> values;
    std::vector<std::size_t> sample_indices;
    bool sorted = false;

    std::size_t size() const { return values.size(); }
    void sort_ascending();
};

}  // namespace heml
