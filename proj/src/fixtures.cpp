#include "cimq/fixtures.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cimq/model_io.hpp"

namespace cimq {

Dataset make_blob_dataset(size_t n, uint64_t seed, double label_noise) {
    if (n == 0) throw ArgumentError("blob dataset needs n >= 1");
    if (label_noise < 0.0 || label_noise >= 1.0) throw ArgumentError("label_noise must be in [0,1)");
    Rng rng(mix_seed(seed, 0xb10b));
    const double centers[4][2] = {{2.0, 2.0}, {2.0, 5.0}, {5.0, 2.0}, {5.0, 5.0}};
    Dataset d;
    d.inputs = Tensor::zeros({n, 1, 8, 8});
    d.labels.resize(n);
    for (size_t s = 0; s < n; ++s) {
        const int cls = static_cast<int>(rng.next_u64() % 4);
        d.labels[s] = cls;
        if (label_noise > 0.0 && rng.uniform() < label_noise) {
            d.labels[s] = static_cast<int>((cls + 1 + rng.next_u64() % 3) % 4);
        }
        const double cy = centers[cls][0] + 0.6 * (rng.uniform() - 0.5);
        const double cx = centers[cls][1] + 0.6 * (rng.uniform() - 0.5);
        const double amp = 0.9 + 0.2 * rng.uniform();
        const double sigma = 1.1 + 0.2 * rng.uniform();
        for (size_t y = 0; y < 8; ++y) {
            for (size_t x = 0; x < 8; ++x) {
                const double dy = static_cast<double>(y) - cy;
                const double dx = static_cast<double>(x) - cx;
                double v = amp * std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                v += 0.02 * rng.uniform();
                d.inputs.data[((s * 1 + 0) * 8 + y) * 8 + x] = v;
            }
        }
    }
    return d;
}

namespace {

Tensor random_tensor(std::vector<size_t> shape, double scale, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = scale * rng.normal();
    return t;
}

// plain SGD with momentum over sequentially cycled minibatches
void train_sgd(ModelGraph& model, const Dataset& train, int steps, size_t batch_size, double lr,
               double momentum) {
    ParamMap velocity = zeros_like_params(model);
    size_t cursor = 0;
    for (int step = 0; step < steps; ++step) {
        std::vector<size_t> idx(batch_size);
        for (size_t i = 0; i < batch_size; ++i) {
            idx[i] = cursor;
            cursor = (cursor + 1) % train.n();
        }
        const Dataset batch = train.subset(idx);
        auto [loss, grads] = loss_and_grad(model, batch);
        const double step_lr = step < steps * 2 / 3 ? lr : lr * 0.3;
        for (auto& [name, v] : velocity) {
            const Tensor& g = grads.at(name);
            Tensor& p = model.params.at(name);
            for (size_t i = 0; i < v.size(); ++i) {
                v.data[i] = momentum * v.data[i] - step_lr * g.data[i];
                p.data[i] += v.data[i];
            }
        }
    }
}

}  // namespace

ModelGraph make_toy_model(uint64_t seed, const Dataset& train) {
    Rng rng(mix_seed(seed, 0x70f));
    ModelGraph m;
    m.input_shape = {1, 8, 8};
    m.num_classes = 4;
    m.loss = LossKind::CrossEntropy;
    m.layers = {{LayerKind::Conv2d, "conv1", 1, 1},
                {LayerKind::Relu, "", 1, 0},
                {LayerKind::Conv2d, "conv2", 2, 1},
                {LayerKind::Relu, "", 1, 0},
                {LayerKind::Dense, "fc", 1, 0}};
    m.params.emplace("conv1", random_tensor({3, 3, 1, 6}, std::sqrt(2.0 / 9.0), rng));
    m.params.emplace("conv2", random_tensor({3, 3, 6, 12}, std::sqrt(2.0 / 54.0), rng));
    m.params.emplace("fc", random_tensor({192, 4}, std::sqrt(1.0 / 192.0), rng));
    m.validate();
    train_sgd(m, train, 120, 64, 0.05, 0.9);
    return m;
}

ModelGraph make_rigged_model(uint64_t seed) {
    Rng rng(mix_seed(seed, 0x419));
    ModelGraph m;
    m.input_shape = {1, 8, 8};
    m.num_classes = 4;
    m.loss = LossKind::CrossEntropy;
    m.layers = {{LayerKind::Conv2d, "conv1", 1, 1},
                {LayerKind::Relu, "", 1, 0},
                {LayerKind::Conv2d, "conv2", 2, 1},
                {LayerKind::Relu, "", 1, 0},
                {LayerKind::Dense, "fc", 1, 0}};

    // conv2 holds the dominant strip; its smalls are j/127-multiples of the
    // dominant value, j in 1..7 with 7 pinned on one strip. Once the dominant
    // is HIGH the fitted scales become s_q = dom2/127 and s_p = s_q (k = 0),
    // so every small sits exactly on both grids and the Fisher drift of any
    // dominant-HIGH split is exactly zero. With everything LOW the scale
    // stretches to dom2/7, the smalls round away, and the drift is large: the
    // descent has one big step to take and a flat floor to land on. conv1's
    // strips are all identical, so any unsplit fit reproduces them exactly and
    // conv1 adds no drift on that path.
    const double dom2 = 3.0;
    const double g2 = dom2 / 127.0;

    Tensor c1 = Tensor::zeros({3, 3, 1, 2});  // positive: keeps relu transparent
    for (double& v : c1.data) v = 0.15;

    Tensor c2 = Tensor::zeros({3, 3, 2, 2});
    for (double& v : c2.data) v = static_cast<double>(1 + rng.next_u64() % 7) * g2;
    c2.data[0 * 2 + 1] = 7.0 * g2;  // pins the LOW pool max at 7*g2
    const size_t kw = 3, depth = 2, nout = 2;
    for (size_t d = 0; d < depth; ++d) {
        c2.data[(((2 - 1) * kw + (2 - 1)) * depth + d) * nout + 0] = dom2;  // (m=2, n=2, oc=1)
    }

    Tensor fc = Tensor::zeros({32, 4});
    for (double& v : fc.data) v = 0.15 * rng.normal();

    m.params.emplace("conv1", std::move(c1));
    m.params.emplace("conv2", std::move(c2));
    m.params.emplace("fc", std::move(fc));
    m.validate();
    return m;
}

ModelGraph make_diag_quadratic_model() {
    ModelGraph m;
    m.input_shape = {2};
    m.num_classes = 1;
    m.loss = LossKind::SquaredLogits;
    m.layers = {{LayerKind::Dense, "w", 1, 0}};
    m.params.emplace("w", Tensor::from_data({2, 1}, {0.25, -0.5}));
    m.validate();
    return m;
}

Dataset make_diag_quadratic_batch() {
    Dataset d;
    d.inputs = Tensor::from_data({2, 2}, {std::sqrt(2.0), 0.0, 0.0, 2.0});
    d.labels = {0, 0};
    return d;
}

ModelGraph make_scalar_quadratic_model(double w) {
    ModelGraph m;
    m.input_shape = {1};
    m.num_classes = 1;
    m.loss = LossKind::SquaredLogits;
    m.layers = {{LayerKind::Dense, "w", 1, 0}};
    m.params.emplace("w", Tensor::from_data({1, 1}, {w}));
    m.validate();
    return m;
}

Dataset make_scalar_quadratic_batch() {
    Dataset d;
    d.inputs = Tensor::from_data({1, 1}, {1.0});
    d.labels = {0};
    return d;
}

ModelGraph make_small_cnn(uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5ca));
    ModelGraph m;
    m.input_shape = {2, 4, 4};
    m.num_classes = 3;
    m.loss = LossKind::CrossEntropy;
    m.layers = {{LayerKind::Conv2d, "c1", 1, 0},
                {LayerKind::Relu, "", 1, 0},
                {LayerKind::Conv2d, "c2", 1, 0},
                {LayerKind::Relu, "", 1, 0},
                {LayerKind::Dense, "fc", 1, 0}};
    m.params.emplace("c1", random_tensor({2, 2, 2, 3}, 0.5, rng));   // 24 params, 12 strips
    m.params.emplace("c2", random_tensor({2, 2, 3, 4}, 0.4, rng));   // 48 params, 16 strips
    m.params.emplace("fc", random_tensor({16, 3}, 0.4, rng));        // 48 params
    m.validate();
    return m;
}

ModelGraph make_smooth_cnn(uint64_t seed) {
    Rng rng(mix_seed(seed, 0x5ca));
    ModelGraph m;
    m.input_shape = {2, 4, 4};
    m.num_classes = 3;
    m.loss = LossKind::CrossEntropy;
    m.layers = {{LayerKind::Conv2d, "c1", 1, 0},
                {LayerKind::Conv2d, "c2", 1, 0},
                {LayerKind::Dense, "fc", 1, 0}};
    m.params.emplace("c1", random_tensor({2, 2, 2, 3}, 0.5, rng));
    m.params.emplace("c2", random_tensor({2, 2, 3, 4}, 0.4, rng));
    m.params.emplace("fc", random_tensor({16, 3}, 0.4, rng));
    m.validate();
    return m;
}

Dataset make_small_cnn_batch(size_t n, uint64_t seed) {
    Rng rng(mix_seed(seed, 0xda7a));
    Dataset d;
    d.inputs = Tensor::zeros({n, 2, 4, 4});
    for (double& v : d.inputs.data) v = rng.normal();
    d.labels.resize(n);
    for (size_t i = 0; i < n; ++i) d.labels[i] = static_cast<int>(rng.next_u64() % 3);
    return d;
}

namespace {

nlohmann::json base_config(const std::string& model_file, const std::string& out_dir, int m_probes) {
    nlohmann::json j;
    j["model"] = model_file;
    j["train_inputs"] = "train_x.cimt";
    j["train_labels"] = "train_y.cimt";
    j["eval_inputs"] = "eval_x.cimt";
    j["eval_labels"] = "eval_y.cimt";
    j["out_dir"] = out_dir;
    j["calibration"] = {{"samples", 96}, {"seed", 7}};
    j["hutchinson"] = {{"m", m_probes}, {"seed", 42}, {"eps", 0.0}};
    j["threshold"] = {{"t0_quantile", 1.0}, {"eta", 1.0},   {"eps_tol", -1.0},
                      {"max_iter", 50},     {"fd_step", 1.0}, {"align", "per_layer"}};
    j["workload"] = {{"n_input_vectors", 0}};
    return j;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out << j.dump(2) << "\n";
}

}  // namespace

void write_fixture_tree(const std::filesystem::path& dir, uint64_t seed) {
    std::filesystem::create_directories(dir);
    const Dataset train = make_blob_dataset(512, mix_seed(seed, 1), 0.08);
    const Dataset eval = make_blob_dataset(256, mix_seed(seed, 2));
    save_dataset(dir / "train_x.cimt", dir / "train_y.cimt", train);
    save_dataset(dir / "eval_x.cimt", dir / "eval_y.cimt", eval);

    const ModelGraph toy = make_toy_model(mix_seed(seed, 3), train);
    save_model(dir, "toy_model", toy);
    const ModelGraph rigged = make_rigged_model(mix_seed(seed, 4));
    save_model(dir, "rigged_model", rigged);

    write_json(dir / "toy.json", base_config("toy_model.json", "out/toy", 4));
    write_json(dir / "rigged.json", base_config("rigged_model.json", "out/rigged", 8));

    // CR-pinned variants for sweeps: the threshold is forced to a quantile and
    // capacity alignment is disabled so the CR point lands exactly
    auto cr0 = base_config("toy_model.json", "out/toy_cr0", 4);
    cr0["threshold"]["fixed_quantile"] = 0.0;
    cr0["threshold"]["align"] = "none";
    write_json(dir / "toy_cr0.json", cr0);
    auto cr50 = base_config("toy_model.json", "out/toy_cr50", 4);
    cr50["threshold"]["fixed_quantile"] = 0.5;
    cr50["threshold"]["align"] = "none";
    write_json(dir / "toy_cr50.json", cr50);
}

}  // namespace cimq
