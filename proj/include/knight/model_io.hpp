#pragma once

#include <filesystem>

#include "knight/corpus_io.hpp"
#include "knight/trainer.hpp"

namespace knight {

/// Tensors in checkpoint order, 1 x n biases stored with rank 1.
NamedTensors model_to_tensors(const Model<float>& model);

/// Rebuilds a model from checkpoint tensors. Throws MissingTensor,
/// UnknownTensor or ShapeMismatch against the shapes `config` implies.
Model<float> model_from_tensors(const NamedTensors& tensors, const DecoderConfig& config);

/// Writes `path` (KNCK), `path`.vocab.jsonl and `path`.config.json.
void save_captioner(const Captioner& captioner, const std::filesystem::path& path);
Captioner load_captioner(const std::filesystem::path& path);

std::filesystem::path vocab_sidecar(const std::filesystem::path& checkpoint);
std::filesystem::path config_sidecar(const std::filesystem::path& checkpoint);

}  // namespace knight
