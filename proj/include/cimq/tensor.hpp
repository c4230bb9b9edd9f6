#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "cimq/common.hpp"

namespace cimq {

// Dense row-major tensor of doubles. Shape is dynamic; every dim must be >= 1.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    static Tensor zeros(std::vector<size_t> shape);
    static Tensor from_data(std::vector<size_t> shape, std::vector<double> data);

    size_t ndim() const { return shape.size(); }
    size_t size() const { return data.size(); }

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    // row-major offset; bounds are the caller's problem (hot path)
    size_t offset(std::initializer_list<size_t> idx) const {
        size_t off = 0;
        size_t axis = 0;
        for (size_t i : idx) {
            off = off * shape[axis] + i;
            ++axis;
        }
        return off;
    }

    double at(std::initializer_list<size_t> idx) const { return data[offset(idx)]; }
    double& at(std::initializer_list<size_t> idx) { return data[offset(idx)]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    std::string shape_str() const;
};

size_t shape_product(const std::vector<size_t>& shape);
std::string shape_to_string(const std::vector<size_t>& shape);

// throws DimensionError naming `what` when shapes differ
void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what);

}  // namespace cimq
