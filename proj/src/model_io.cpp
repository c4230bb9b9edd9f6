#include "cimq/model_io.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "cimq/tensor_io.hpp"

namespace cimq {

namespace {

std::string loss_name(LossKind k) {
    return k == LossKind::CrossEntropy ? "cross_entropy" : "squared_logits";
}

LossKind loss_from_name(const std::string& s) {
    if (s == "cross_entropy") return LossKind::CrossEntropy;
    if (s == "squared_logits") return LossKind::SquaredLogits;
    throw FormatError("unknown loss '" + s + "'", 0);
}

std::string kind_string(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::Dense: return "dense";
    }
    return "?";
}

LayerKind kind_from_string(const std::string& s) {
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "relu") return LayerKind::Relu;
    if (s == "dense") return LayerKind::Dense;
    throw FormatError("unknown layer kind '" + s + "'", 0);
}

}  // namespace

void save_model(const std::filesystem::path& dir, const std::string& name, const ModelGraph& model) {
    model.validate();
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["input_shape"] = model.input_shape;
    j["num_classes"] = model.num_classes;
    j["loss"] = loss_name(model.loss);
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& d : model.layers) {
        nlohmann::json l;
        l["kind"] = kind_string(d.kind);
        if (!d.param.empty()) l["param"] = d.param;
        if (d.kind == LayerKind::Conv2d) {
            l["stride"] = d.stride;
            l["pad"] = d.pad;
        }
        layers.push_back(l);
    }
    j["layers"] = layers;
    nlohmann::json tensors = nlohmann::json::object();
    for (const auto& pname : model.param_order()) {
        const std::string file = name + "." + pname + ".cimt";
        write_tensor(dir / file, model.params.at(pname));
        tensors[pname] = file;
    }
    j["tensors"] = tensors;

    std::ofstream out(dir / (name + ".json"), std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + (dir / (name + ".json")).string());
    out << j.dump(2) << "\n";
}

ModelGraph load_model(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw Error("cannot open model manifest: " + manifest_path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad JSON in " + manifest_path.string() + ": " + e.what(), 0);
    }
    ModelGraph model;
    try {
        model.input_shape = j.at("input_shape").get<std::vector<size_t>>();
        model.num_classes = j.at("num_classes").get<size_t>();
        model.loss = loss_from_name(j.at("loss").get<std::string>());
        for (const auto& l : j.at("layers")) {
            LayerDesc d;
            d.kind = kind_from_string(l.at("kind").get<std::string>());
            if (d.kind != LayerKind::Relu) d.param = l.at("param").get<std::string>();
            if (d.kind == LayerKind::Conv2d) {
                d.stride = l.value("stride", 1);
                d.pad = l.value("pad", 0);
            }
            model.layers.push_back(d);
        }
        const auto dir = manifest_path.parent_path();
        for (const auto& [pname, file] : j.at("tensors").items()) {
            model.params.emplace(pname, read_tensor(dir / file.get<std::string>()));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad model manifest " + manifest_path.string() + ": " + e.what(), 0);
    }
    model.validate();
    return model;
}

void save_dataset(const std::filesystem::path& inputs_path, const std::filesystem::path& labels_path,
                  const Dataset& data) {
    write_tensor(inputs_path, data.inputs);
    Tensor labels = Tensor::zeros({data.labels.size()});
    for (size_t i = 0; i < data.labels.size(); ++i) labels.data[i] = data.labels[i];
    write_tensor(labels_path, labels);
}

Dataset load_dataset(const std::filesystem::path& inputs_path,
                     const std::filesystem::path& labels_path) {
    Dataset d;
    d.inputs = read_tensor(inputs_path);
    Tensor labels = read_tensor(labels_path);
    if (labels.ndim() != 1) {
        throw FormatError("labels tensor must be rank 1, got " + labels.shape_str() + " in " +
                          labels_path.string(), 0);
    }
    d.labels.resize(labels.size());
    for (size_t i = 0; i < labels.size(); ++i) d.labels[i] = static_cast<int>(labels.data[i]);
    return d;
}

}  // namespace cimq
