#pragma once

// Reference implementations the tests trust instead of the library: different
// algorithms for the same contracts, kept deliberately naive. Anything here
// that calls back into the library does so only through surfaces that have
// their own hand-computed checks (loss values, fisher_diag arithmetic).

#include <cstdint>
#include <string>
#include <vector>

#include "cimq/pipeline.hpp"

namespace oracle {

// im2col convolution: gathers each output position's receptive field into a
// flat patch, then takes one dot product per output channel
cimq::Tensor conv2d_im2col(const cimq::Tensor& input, const cimq::Tensor& kernel,
                           int stride, int pad);

// batch loss with one parameter entry displaced by delta
double loss_displaced(const cimq::ModelGraph& model, const cimq::Dataset& batch,
                      const std::string& param, size_t flat, double delta);

// central-difference gradient from loss values only (no backprop involved)
cimq::ParamMap grad_fd(const cimq::ModelGraph& model, const cimq::Dataset& batch, double h);

// H_ii by the second difference [L(+h) - 2 L(0) + L(-h)] / h^2
double hessian_diag_fd(const cimq::ModelGraph& model, const cimq::Dataset& batch,
                       const std::string& param, size_t flat, double h);

// sum of second-difference H_ii over a coordinate set
double block_trace_fd(const cimq::ModelGraph& model, const cimq::Dataset& batch,
                      const std::vector<cimq::ParamCoord>& coords, double h);

// H*v as the central difference of analytic gradients at a caller-chosen step,
// so step-size agreement with the library path is part of what gets tested
cimq::ParamMap hvp_fd(const cimq::ModelGraph& model, const cimq::Dataset& batch,
                      const cimq::ParamMap& v, double h);

// Scalar-arithmetic twin of the crossbar conv path: quantize activation and
// weights, one int64 dot per strip, LOW dots shifted up by the layer's k,
// summed per output. No tiles, no bit-serial slices, no symmetric shift.
struct MixedMvmRef {
    std::vector<int64_t> z;  // integer-domain outputs, flat [N, Ho, Wo]
    cimq::Tensor real;       // s_q * s_a * z
};
MixedMvmRef mixed_mvm_ref(const cimq::ModelGraph& model, int layer_id,
                          const cimq::Tensor& activation, const cimq::BitwidthMap& map,
                          const cimq::HardwareConfig& hw);

// the double-precision dot the quantized path approximates: dequantized
// weights times dequantized activation, accumulated in doubles
cimq::Tensor mixed_mvm_dequant(const cimq::ModelGraph& model, int layer_id,
                               const cimq::Tensor& activation, const cimq::BitwidthMap& map,
                               const cimq::HardwareConfig& hw);

// threshold value whose assignment puts exactly r strips LOW (records ranked
// descending); r == 0 sits below every score
double threshold_at(const std::vector<cimq::SensitivityRecord>& ranked, size_t r);

// Fisher drift at every one of the R+1 rank partitions. The search under test
// walks this landscape; the sweep enumerates it.
struct SweepResult {
    std::vector<double> loss;  // index r = LOW count
    size_t argmin = 0;         // ties resolved toward larger r (more compression)
};
SweepResult threshold_sweep(const cimq::ModelGraph& model,
                            const std::vector<cimq::SensitivityRecord>& ranked,
                            const cimq::Dataset& calib);

}  // namespace oracle
