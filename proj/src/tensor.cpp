#include "cimq/tensor.hpp"

namespace cimq {

size_t shape_product(const std::vector<size_t>& shape) {
    size_t p = 1;
    for (size_t d : shape) p *= d;
    return p;
}

std::string shape_to_string(const std::vector<size_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

static void validate_shape(const std::vector<size_t>& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    for (size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == 0) {
            throw DimensionError("tensor axis " + std::to_string(i) + " has extent 0 in shape " +
                                 shape_to_string(shape));
        }
    }
}

Tensor Tensor::zeros(std::vector<size_t> shape) {
    validate_shape(shape);
    Tensor t;
    t.data.assign(shape_product(shape), 0.0);
    t.shape = std::move(shape);
    return t;
}

Tensor Tensor::from_data(std::vector<size_t> shape, std::vector<double> data) {
    validate_shape(shape);
    if (shape_product(shape) != data.size()) {
        throw DimensionError("data size " + std::to_string(data.size()) +
                             " does not match shape " + shape_to_string(shape) + " (expected " +
                             std::to_string(shape_product(shape)) + ")");
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data = std::move(data);
    return t;
}

std::string Tensor::shape_str() const { return shape_to_string(shape); }

void require_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
    if (!a.same_shape(b)) {
        throw DimensionError(what + ": shape " + a.shape_str() + " vs " + b.shape_str());
    }
}

}  // namespace cimq
