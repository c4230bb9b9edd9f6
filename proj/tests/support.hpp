#pragma once

#include <filesystem>
#include <string>

#include "cimq/pipeline.hpp"

namespace testsup {

// unique disposable directory under the system temp root; removed on destruction
struct ScopedDir {
    std::filesystem::path path;

    explicit ScopedDir(const std::string& tag);
    ~ScopedDir();
    ScopedDir(const ScopedDir&) = delete;
    ScopedDir& operator=(const ScopedDir&) = delete;
};

// one conv layer (optionally relu-capped) with seeded Gaussian weights; handy
// for crossbar and quantizer tests that need strips but no training
cimq::ModelGraph single_conv_model(size_t kh, size_t kw, size_t depth, size_t nout, int stride,
                                   int pad, uint64_t seed, size_t h = 5, size_t w = 5);

// bundled fixture tree (models, datasets, configs), generated once per process
const std::filesystem::path& fixture_tree();

}  // namespace testsup
