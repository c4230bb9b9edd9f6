#pragma once

#include <filesystem>

#include "cimq/model.hpp"

namespace cimq {

// Model manifest: JSON with input shape, classes, loss, layer descriptors, and
// relative tensor-file references. Tensors live next to the manifest.
void save_model(const std::filesystem::path& dir, const std::string& name, const ModelGraph& model);
ModelGraph load_model(const std::filesystem::path& manifest_path);

// datasets are a pair of tensor files: inputs [n,...], labels [n]
void save_dataset(const std::filesystem::path& inputs_path, const std::filesystem::path& labels_path,
                  const Dataset& data);
Dataset load_dataset(const std::filesystem::path& inputs_path,
                     const std::filesystem::path& labels_path);

}  // namespace cimq
