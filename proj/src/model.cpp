#include "cimq/model.hpp"

#include <algorithm>
#include <cmath>

namespace cimq {

namespace {

const char* kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::Dense: return "dense";
    }
    return "?";
}

std::string layer_label(const ModelGraph& model, size_t idx) {
    const LayerDesc& d = model.layers[idx];
    std::string s = "layer " + std::to_string(idx) + " (" + kind_name(d.kind);
    if (!d.param.empty()) s += " '" + d.param + "'";
    return s + ")";
}

void check_finite(const Tensor& t, const std::string& where) {
    double sum = 0.0;
    for (double v : t.data) sum += v;
    if (!std::isfinite(sum)) throw NumericError("non-finite values produced", where);
}

size_t conv_out_dim(size_t in, size_t k, int stride, int pad) {
    long long num = static_cast<long long>(in) + 2ll * pad - static_cast<long long>(k);
    if (num < 0) return 0;
    return static_cast<size_t>(num / stride + 1);
}

// shape of each layer input; index layers.size() holds the logits shape
std::vector<std::vector<size_t>> infer_shapes(const ModelGraph& model) {
    std::vector<std::vector<size_t>> shapes;
    shapes.push_back(model.input_shape);
    std::vector<size_t> cur = model.input_shape;
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const LayerDesc& d = model.layers[i];
        switch (d.kind) {
            case LayerKind::Conv2d: {
                auto it = model.params.find(d.param);
                if (it == model.params.end()) {
                    throw DimensionError(layer_label(model, i) + ": missing parameter tensor");
                }
                const Tensor& ker = it->second;
                if (ker.ndim() != 4) {
                    throw DimensionError(layer_label(model, i) + ": kernel must be rank 4, got " +
                                         ker.shape_str());
                }
                if (cur.size() != 3) {
                    throw DimensionError(layer_label(model, i) + ": conv input must be [D,H,W], got " +
                                         shape_to_string(cur));
                }
                if (cur[0] != ker.shape[2]) {
                    throw DimensionError(layer_label(model, i) + ": input depth " +
                                         std::to_string(cur[0]) + " (axis 0) != kernel depth " +
                                         std::to_string(ker.shape[2]) + " (axis 2)");
                }
                if (d.stride < 1) throw ArgumentError(layer_label(model, i) + ": stride must be >= 1");
                if (d.pad < 0) throw ArgumentError(layer_label(model, i) + ": pad must be >= 0");
                size_t ho = conv_out_dim(cur[1], ker.shape[0], d.stride, d.pad);
                size_t wo = conv_out_dim(cur[2], ker.shape[1], d.stride, d.pad);
                if (ho == 0 || wo == 0) {
                    throw DimensionError(layer_label(model, i) + ": output spatial extent is empty");
                }
                cur = {ker.shape[3], ho, wo};
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::Dense: {
                auto it = model.params.find(d.param);
                if (it == model.params.end()) {
                    throw DimensionError(layer_label(model, i) + ": missing parameter tensor");
                }
                const Tensor& w = it->second;
                if (w.ndim() != 2) {
                    throw DimensionError(layer_label(model, i) + ": weight must be rank 2, got " +
                                         w.shape_str());
                }
                size_t in = shape_product(cur);
                if (in != w.shape[0]) {
                    throw DimensionError(layer_label(model, i) + ": flattened input size " +
                                         std::to_string(in) + " != weight rows " +
                                         std::to_string(w.shape[0]));
                }
                cur = {w.shape[1]};
                break;
            }
        }
        shapes.push_back(cur);
    }
    return shapes;
}

}  // namespace

void ModelGraph::validate() const {
    if (input_shape.empty()) throw DimensionError("model has empty input shape");
    if (num_classes < 1) throw ArgumentError("model needs at least one class");
    std::vector<std::string> used;
    for (const auto& d : layers) {
        if (d.kind == LayerKind::Relu) continue;
        if (d.param.empty()) throw ArgumentError("parameterized layer without a parameter name");
        if (std::find(used.begin(), used.end(), d.param) != used.end()) {
            throw ArgumentError("parameter name '" + d.param + "' used by more than one layer");
        }
        used.push_back(d.param);
    }
    auto shapes = infer_shapes(*this);
    if (shape_product(shapes.back()) != num_classes) {
        throw DimensionError("final logits size " + std::to_string(shape_product(shapes.back())) +
                             " != num_classes " + std::to_string(num_classes));
    }
}

size_t ModelGraph::param_count() const {
    size_t total = 0;
    for (const auto& name : param_order()) total += params.at(name).size();
    return total;
}

std::vector<std::string> ModelGraph::param_order() const {
    std::vector<std::string> order;
    for (const auto& d : layers) {
        if (!d.param.empty()) order.push_back(d.param);
    }
    return order;
}

void Dataset::validate(size_t num_classes) const {
    if (labels.empty()) throw ArgumentError("dataset has no samples");
    if (inputs.ndim() < 2) {
        throw DimensionError("dataset inputs must be [n, ...sample dims], got " + inputs.shape_str());
    }
    if (inputs.shape[0] != labels.size()) {
        throw DimensionError("dataset has " + std::to_string(inputs.shape[0]) + " input rows but " +
                             std::to_string(labels.size()) + " labels");
    }
    for (size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<size_t>(labels[i]) >= num_classes) {
            throw ArgumentError("label " + std::to_string(labels[i]) + " at sample " +
                                std::to_string(i) + " outside [0," + std::to_string(num_classes) + ")");
        }
    }
}

Tensor Dataset::sample(size_t i) const {
    std::vector<size_t> shape(inputs.shape.begin() + 1, inputs.shape.end());
    size_t stride = shape_product(shape);
    std::vector<double> data(inputs.data.begin() + i * stride, inputs.data.begin() + (i + 1) * stride);
    return Tensor::from_data(std::move(shape), std::move(data));
}

Dataset Dataset::subset(const std::vector<size_t>& idx) const {
    size_t stride = shape_product({inputs.shape.begin() + 1, inputs.shape.end()});
    std::vector<size_t> shape = inputs.shape;
    shape[0] = idx.size();
    std::vector<double> data;
    data.reserve(idx.size() * stride);
    Dataset out;
    out.labels.reserve(idx.size());
    for (size_t i : idx) {
        data.insert(data.end(), inputs.data.begin() + i * stride, inputs.data.begin() + (i + 1) * stride);
        out.labels.push_back(labels[i]);
    }
    out.inputs = Tensor::from_data(std::move(shape), std::move(data));
    return out;
}

Tensor conv2d_forward(const Tensor& input, const Tensor& kernel, int stride, int pad) {
    if (kernel.ndim() != 4) {
        throw DimensionError("conv2d: kernel must be rank 4 [Kh,Kw,D,N], got " + kernel.shape_str());
    }
    if (input.ndim() != 3) {
        throw DimensionError("conv2d: input must be rank 3 [D,H,W], got " + input.shape_str());
    }
    if (input.shape[0] != kernel.shape[2]) {
        throw DimensionError("conv2d: input depth " + std::to_string(input.shape[0]) +
                             " (input axis 0) != kernel depth " + std::to_string(kernel.shape[2]) +
                             " (kernel axis 2)");
    }
    if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1");
    if (pad < 0) throw ArgumentError("conv2d: pad must be >= 0");

    const size_t kh = kernel.shape[0], kw = kernel.shape[1];
    const size_t depth = kernel.shape[2], nout = kernel.shape[3];
    const size_t h = input.shape[1], w = input.shape[2];
    const size_t ho = conv_out_dim(h, kh, stride, pad);
    const size_t wo = conv_out_dim(w, kw, stride, pad);
    if (ho == 0 || wo == 0) throw DimensionError("conv2d: output spatial extent is empty");

    Tensor out = Tensor::zeros({nout, ho, wo});
    for (size_t n = 0; n < nout; ++n) {
        for (size_t i = 0; i < ho; ++i) {
            for (size_t j = 0; j < wo; ++j) {
                double acc = 0.0;
                const long long ih0 = static_cast<long long>(i) * stride - pad;
                const long long iw0 = static_cast<long long>(j) * stride - pad;
                for (size_t m = 0; m < kh; ++m) {
                    const long long ih = ih0 + static_cast<long long>(m);
                    if (ih < 0 || ih >= static_cast<long long>(h)) continue;
                    for (size_t kk = 0; kk < kw; ++kk) {
                        const long long iw = iw0 + static_cast<long long>(kk);
                        if (iw < 0 || iw >= static_cast<long long>(w)) continue;
                        for (size_t d = 0; d < depth; ++d) {
                            acc += kernel.data[((m * kw + kk) * depth + d) * nout + n] *
                                   input.data[(d * h + ih) * w + iw];
                        }
                    }
                }
                out.data[(n * ho + i) * wo + j] = acc;
            }
        }
    }
    return out;
}

namespace {

// forward pass keeping every activation; acts[0] = x, acts[L] = logits
void forward_trace(const ModelGraph& model, const Tensor& x, std::vector<Tensor>& acts) {
    acts.clear();
    acts.reserve(model.layers.size() + 1);
    acts.push_back(x);
    for (size_t i = 0; i < model.layers.size(); ++i) {
        const LayerDesc& d = model.layers[i];
        switch (d.kind) {
            case LayerKind::Conv2d:
                acts.push_back(conv2d_forward(acts.back(), model.params.at(d.param), d.stride, d.pad));
                break;
            case LayerKind::Relu: {
                Tensor t = acts.back();
                for (double& v : t.data) v = v > 0.0 ? v : 0.0;
                acts.push_back(std::move(t));
                break;
            }
            case LayerKind::Dense: {
                const Tensor& w = model.params.at(d.param);
                const Tensor& in = acts.back();
                const size_t ni = w.shape[0], no = w.shape[1];
                if (in.size() != ni) {
                    throw DimensionError(layer_label(model, i) + ": flattened input size " +
                                         std::to_string(in.size()) + " != weight rows " +
                                         std::to_string(ni));
                }
                Tensor z = Tensor::zeros({no});
                for (size_t a = 0; a < ni; ++a) {
                    const double xv = in.data[a];
                    if (xv == 0.0) continue;
                    const double* wrow = &w.data[a * no];
                    for (size_t o = 0; o < no; ++o) z.data[o] += xv * wrow[o];
                }
                acts.push_back(std::move(z));
                break;
            }
        }
        check_finite(acts.back(), layer_label(model, i));
    }
}

// loss value and d(loss)/d(logits) for one sample
double loss_and_dlogits(const ModelGraph& model, const Tensor& logits, int label, Tensor& dz) {
    dz = Tensor::zeros(logits.shape);
    if (model.loss == LossKind::SquaredLogits) {
        double loss = 0.0;
        for (size_t o = 0; o < logits.size(); ++o) {
            loss += logits.data[o] * logits.data[o];
            dz.data[o] = 2.0 * logits.data[o];
        }
        return loss;
    }
    // stable softmax cross-entropy
    double zmax = logits.data[0];
    for (double v : logits.data) zmax = std::max(zmax, v);
    double sum = 0.0;
    for (double v : logits.data) sum += std::exp(v - zmax);
    const double lse = zmax + std::log(sum);
    for (size_t o = 0; o < logits.size(); ++o) {
        dz.data[o] = std::exp(logits.data[o] - lse);
    }
    dz.data[static_cast<size_t>(label)] -= 1.0;
    return lse - logits.data[static_cast<size_t>(label)];
}

// backward through the graph, adding weight * dL/dparam into grads
void backward_accumulate(const ModelGraph& model, const std::vector<Tensor>& acts, Tensor dz,
                         double weight, ParamMap& grads) {
    for (size_t ii = model.layers.size(); ii-- > 0;) {
        const LayerDesc& d = model.layers[ii];
        const Tensor& in = acts[ii];
        switch (d.kind) {
            case LayerKind::Relu: {
                Tensor dx = Tensor::zeros(in.shape);
                for (size_t a = 0; a < in.size(); ++a) {
                    dx.data[a] = in.data[a] > 0.0 ? dz.data[a] : 0.0;
                }
                dz = std::move(dx);
                break;
            }
            case LayerKind::Dense: {
                const Tensor& w = model.params.at(d.param);
                Tensor& gw = grads.at(d.param);
                const size_t ni = w.shape[0], no = w.shape[1];
                Tensor dx = Tensor::zeros(in.shape);
                for (size_t a = 0; a < ni; ++a) {
                    const double xv = in.data[a];
                    const double* wrow = &w.data[a * no];
                    double* grow = &gw.data[a * no];
                    double acc = 0.0;
                    for (size_t o = 0; o < no; ++o) {
                        const double g = dz.data[o];
                        grow[o] += weight * xv * g;
                        acc += wrow[o] * g;
                    }
                    dx.data[a] = acc;
                }
                dz = std::move(dx);
                break;
            }
            case LayerKind::Conv2d: {
                const Tensor& ker = model.params.at(d.param);
                Tensor& gk = grads.at(d.param);
                const size_t kh = ker.shape[0], kw = ker.shape[1];
                const size_t depth = ker.shape[2], nout = ker.shape[3];
                const size_t h = in.shape[1], w = in.shape[2];
                const size_t ho = dz.shape[1], wo = dz.shape[2];
                Tensor dx = Tensor::zeros(in.shape);
                for (size_t n = 0; n < nout; ++n) {
                    for (size_t i = 0; i < ho; ++i) {
                        for (size_t j = 0; j < wo; ++j) {
                            const double g = dz.data[(n * ho + i) * wo + j];
                            if (g == 0.0) continue;
                            const long long ih0 = static_cast<long long>(i) * d.stride - d.pad;
                            const long long iw0 = static_cast<long long>(j) * d.stride - d.pad;
                            for (size_t m = 0; m < kh; ++m) {
                                const long long ih = ih0 + static_cast<long long>(m);
                                if (ih < 0 || ih >= static_cast<long long>(h)) continue;
                                for (size_t kk = 0; kk < kw; ++kk) {
                                    const long long iw = iw0 + static_cast<long long>(kk);
                                    if (iw < 0 || iw >= static_cast<long long>(w)) continue;
                                    const size_t kbase = ((m * kw + kk) * depth) * nout + n;
                                    const size_t xbase = static_cast<size_t>(ih) * w + iw;
                                    for (size_t dd = 0; dd < depth; ++dd) {
                                        const size_t ki = kbase + dd * nout;
                                        const size_t xi = dd * h * w + xbase;
                                        gk.data[ki] += weight * g * in.data[xi];
                                        dx.data[xi] += ker.data[ki] * g;
                                    }
                                }
                            }
                        }
                    }
                }
                dz = std::move(dx);
                break;
            }
        }
    }
}

}  // namespace

Tensor forward(const ModelGraph& model, const Tensor& x) {
    std::vector<Tensor> acts;
    forward_trace(model, x, acts);
    return acts.back();
}

void for_each_sample_grad(const ModelGraph& model, const Dataset& batch,
                          const std::function<void(size_t, double, const ParamMap&)>& visit) {
    if (batch.n() == 0) throw ArgumentError("empty batch");
    ParamMap grads = zeros_like_params(model);
    std::vector<Tensor> acts;
    Tensor dz;
    for (size_t s = 0; s < batch.n(); ++s) {
        for (auto& [name, g] : grads) std::fill(g.data.begin(), g.data.end(), 0.0);
        forward_trace(model, batch.sample(s), acts);
        double loss = loss_and_dlogits(model, acts.back(), batch.labels[s], dz);
        if (!std::isfinite(loss)) throw NumericError("non-finite loss", "loss (sample " + std::to_string(s) + ")");
        backward_accumulate(model, acts, std::move(dz), 1.0, grads);
        visit(s, loss, grads);
    }
}

std::pair<double, ParamMap> loss_and_grad(const ModelGraph& model, const Dataset& batch) {
    if (batch.n() == 0) throw ArgumentError("empty batch");
    ParamMap grads = zeros_like_params(model);
    const double wgt = 1.0 / static_cast<double>(batch.n());
    double total = 0.0;
    std::vector<Tensor> acts;
    Tensor dz;
    for (size_t s = 0; s < batch.n(); ++s) {
        forward_trace(model, batch.sample(s), acts);
        double loss = loss_and_dlogits(model, acts.back(), batch.labels[s], dz);
        if (!std::isfinite(loss)) throw NumericError("non-finite loss", "loss (sample " + std::to_string(s) + ")");
        total += loss;
        backward_accumulate(model, acts, std::move(dz), wgt, grads);
    }
    for (const auto& [name, g] : grads) check_finite(g, "gradient of '" + name + "'");
    return {total * wgt, grads};
}

ParamMap hvp(const ModelGraph& model, const Dataset& batch, const ParamMap& v, double eps) {
    if (eps <= 0.0) throw ArgumentError("hvp: eps must be > 0, got " + format_double(eps));
    for (const auto& [name, t] : v) {
        auto it = model.params.find(name);
        if (it == model.params.end()) throw ArgumentError("hvp: unknown parameter '" + name + "'");
        require_same_shape(t, it->second, "hvp direction for '" + name + "'");
    }
    ModelGraph work = model;
    auto shift = [&](double sign) {
        for (const auto& [name, t] : v) {
            Tensor& p = work.params.at(name);
            const Tensor& orig = model.params.at(name);
            for (size_t i = 0; i < p.size(); ++i) p.data[i] = orig.data[i] + sign * eps * t.data[i];
        }
    };
    shift(+1.0);
    ParamMap gp = loss_and_grad(work, batch).second;
    shift(-1.0);
    ParamMap gm = loss_and_grad(work, batch).second;
    ParamMap out = zeros_like_params(model);
    for (auto& [name, t] : out) {
        const Tensor& a = gp.at(name);
        const Tensor& b = gm.at(name);
        for (size_t i = 0; i < t.size(); ++i) t.data[i] = (a.data[i] - b.data[i]) / (2.0 * eps);
    }
    return out;
}

double default_hvp_eps(const ModelGraph& model) {
    double wmax = 0.0;
    for (const auto& [name, t] : model.params) {
        for (double v : t.data) wmax = std::max(wmax, std::abs(v));
    }
    return 1e-4 * (1.0 + wmax);
}

ParamMap zeros_like_params(const ModelGraph& model) {
    ParamMap out;
    for (const auto& [name, t] : model.params) out.emplace(name, Tensor::zeros(t.shape));
    return out;
}

}  // namespace cimq
