#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cimq/tensor.hpp"

namespace cimq {

enum class LayerKind { Conv2d, Relu, Dense };

struct LayerDesc {
    LayerKind kind = LayerKind::Relu;
    std::string param;  // parameter name for conv2d/dense; empty for relu
    int stride = 1;     // conv2d only
    int pad = 0;        // conv2d only
};

enum class LossKind {
    CrossEntropy,   // mean softmax cross-entropy over the batch
    SquaredLogits,  // mean over the batch of sum(z_o^2); quadratic in weights for
                    // linear nets, which gives tests closed-form Hessians
};

using ParamMap = std::map<std::string, Tensor>;

// Fixed-zoo feed-forward net: conv2d / relu / dense, then a batch loss on the
// final logits. Dense layers flatten their input implicitly.
struct ModelGraph {
    std::vector<size_t> input_shape;  // [C,H,W] or [F]
    size_t num_classes = 0;
    LossKind loss = LossKind::CrossEntropy;
    std::vector<LayerDesc> layers;
    ParamMap params;

    // layer shape composition + parameter presence; throws DimensionError
    void validate() const;
    size_t param_count() const;
    // canonical flat parameter order: layer order, tensors row-major
    std::vector<std::string> param_order() const;
};

struct Dataset {
    Tensor inputs;            // [n, ...sample shape]
    std::vector<int> labels;  // size n

    size_t n() const { return labels.size(); }
    void validate(size_t num_classes) const;
    // copy of sample i with the leading axis dropped
    Tensor sample(size_t i) const;
    Dataset subset(const std::vector<size_t>& idx) const;
};

// Direct-summation convolution. input [D,H,W], kernel [Kh,Kw,D,N] -> [N,Ho,Wo]
// with Ho = floor((H+2*pad-Kh)/stride)+1.
Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, int stride, int pad);

// logits for one sample
Tensor forward(const ModelGraph& model, const Tensor& x);

// mean loss over the batch and gradients matching parameter shapes
std::pair<double, ParamMap> loss_and_grad(const ModelGraph& model, const Dataset& batch);

// per-sample loss/gradient visitor; `grad` is reused scratch valid only inside
// the callback. Sample order is dataset order (deterministic accumulation).
void for_each_sample_grad(const ModelGraph& model, const Dataset& batch,
                          const std::function<void(size_t, double, const ParamMap&)>& visit);

// H*v by central difference of gradients at step eps; parameters are restored
// exactly afterward. eps <= 0 -> ArgumentError.
ParamMap hvp(const ModelGraph& model, const Dataset& batch, const ParamMap& v, double eps);

// 1e-4 * (1 + max|w|): keeps the difference step proportionate to weight scale
double default_hvp_eps(const ModelGraph& model);

ParamMap zeros_like_params(const ModelGraph& model);

}  // namespace cimq
