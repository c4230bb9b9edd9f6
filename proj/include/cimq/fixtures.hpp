#pragma once

#include <filesystem>

#include "cimq/model.hpp"

namespace cimq {

// Synthetic 4-class set: a Gaussian intensity blob rendered into an 8x8
// single-channel image, class = blob quadrant, plus mild pixel noise.
// label_noise flips that fraction of labels to a random other class; the
// training split uses it to keep the fitted model off the softmax-saturation
// plateau, where loss curvature vanishes.
Dataset make_blob_dataset(size_t n, uint64_t seed, double label_noise = 0.0);

// 2-conv toy CNN for the blob task (conv 3x3x1x6 / relu / conv 3x3x6x12 s2 /
// relu / dense 192x4), weights trained in-process by seeded SGD. 162 strips.
ModelGraph make_toy_model(uint64_t seed, const Dataset& train);

// Small 2-conv net (36 strips) where one conv2 strip carries far larger weights
// than every other; its sensitivity score dominates by construction. Keeping it
// LOW stretches the 4-bit scale until the layer's small weights round away,
// which spikes the Fisher drift; once it is HIGH every remaining weight sits
// exactly on the fitted grids and the drift falls to the floating-point floor.
ModelGraph make_rigged_model(uint64_t seed);

// Linear probe whose loss Hessian is exactly diag(2, 4): dense [2,1], squared
// logits, samples (sqrt 2, 0) and (0, 2).
ModelGraph make_diag_quadratic_model();
Dataset make_diag_quadratic_batch();

// One weight w with loss w^2 (dense [1,1], squared logits, single sample x=1)
ModelGraph make_scalar_quadratic_model(double w);
Dataset make_scalar_quadratic_batch();

// <=200-parameter CNN (120 params, 28 strips) with iid Gaussian inputs
ModelGraph make_small_cnn(uint64_t seed);
Dataset make_small_cnn_batch(size_t n, uint64_t seed);

// Relu-free twin of make_small_cnn, same shapes and strip layout. Its loss is
// twice differentiable everywhere, which Hessian-oracle comparisons require: a
// second difference taken across a relu kink measures the derivative jump
// divided by the step, not curvature, and no probe count can average that out.
ModelGraph make_smooth_cnn(uint64_t seed);

// writes both bundled fixtures (toy + rigged), their datasets, and ready-to-run
// pipeline configs into dir
void write_fixture_tree(const std::filesystem::path& dir, uint64_t seed);

}  // namespace cimq
