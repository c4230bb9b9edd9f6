#include "support.hpp"

#include <unistd.h>

#include <atomic>

namespace testsup {

using namespace cimq;

namespace {
std::atomic<uint64_t> dir_counter{0};
}

ScopedDir::ScopedDir(const std::string& tag) {
    const uint64_t id = dir_counter.fetch_add(1);
    path = std::filesystem::temp_directory_path() /
           ("cimq_" + tag + "_" + std::to_string(static_cast<unsigned>(::getpid())) + "_" +
            std::to_string(id));
    std::filesystem::create_directories(path);
}

ScopedDir::~ScopedDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);  // best effort; leftovers are in tmp anyway
}

ModelGraph single_conv_model(size_t kh, size_t kw, size_t depth, size_t nout, int stride, int pad,
                             uint64_t seed, size_t h, size_t w) {
    ModelGraph m;
    m.input_shape = {depth, h, w};
    m.layers.push_back({LayerKind::Conv2d, "conv", stride, pad});
    Tensor ker = Tensor::zeros({kh, kw, depth, nout});
    Rng rng(mix_seed(seed, 0x51c));
    for (double& v : ker.data) v = rng.normal();
    m.params.emplace("conv", std::move(ker));
    const size_t ho = (h + 2 * static_cast<size_t>(pad) - kh) / static_cast<size_t>(stride) + 1;
    const size_t wo = (w + 2 * static_cast<size_t>(pad) - kw) / static_cast<size_t>(stride) + 1;
    m.num_classes = nout * ho * wo;
    m.loss = LossKind::SquaredLogits;
    return m;
}

const std::filesystem::path& fixture_tree() {
    static ScopedDir dir("fixtures");
    static bool built = [] {
        write_fixture_tree(dir.path, 1234);
        return true;
    }();
    (void)built;
    return dir.path;
}

}  // namespace testsup
