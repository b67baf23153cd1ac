#include "knight/model_io.hpp"

#include <fstream>
#include <map>

#include <json.hpp>

#include "knight/error.hpp"

namespace knight {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

bool is_row_vector_name(const std::string& name) {
  auto ends_with = [&](std::string_view s) {
    return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
  };
  return ends_with(".b") || ends_with("_g") || ends_with("_b") || ends_with(".g");
}

json config_to_json(const DecoderConfig& c, std::size_t k) {
  return json{{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim}, {"d_model", c.d_model},
              {"layers", c.layers},         {"heads", c.heads},         {"max_len", c.max_len},
              {"ff_mult", c.ff_mult},       {"mlp_hidden", c.mlp_hidden}, {"tie_output", c.tie_output},
              {"prefix_positions", c.prefix_positions}, {"k", k}};
}

}  // namespace

fs::path vocab_sidecar(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".vocab.jsonl"); }
fs::path config_sidecar(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".config.json"); }

NamedTensors model_to_tensors(const Model<float>& model) {
  NamedTensors out;
  for (const auto& [name, m] : model.tensors()) {
    Tensor t;
    if (m->rows() == 1 && is_row_vector_name(name)) {
      t.dims = {static_cast<std::uint32_t>(m->cols())};
    } else {
      t.dims = {static_cast<std::uint32_t>(m->rows()), static_cast<std::uint32_t>(m->cols())};
    }
    t.data.assign(m->data(), m->data() + m->size());
    out.emplace_back(name, std::move(t));
  }
  return out;
}

Model<float> model_from_tensors(const NamedTensors& tensors, const DecoderConfig& config) {
  // Shapes come from a freshly initialized model of the same config.
  Model<float> model = model_init<float>(config, 0);
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : tensors) by_name.emplace(name, &t);

  auto refs = model.tensors();
  for (auto& [name, m] : refs) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw Error(ErrorCode::kMissingTensor, name);
    const Tensor& t = *it->second;
    const bool row = m->rows() == 1 && is_row_vector_name(name);
    const bool shape_ok = row ? (t.dims.size() == 1 && t.dims[0] == m->cols())
                              : (t.dims.size() == 2 && t.dims[0] == m->rows() && t.dims[1] == m->cols());
    if (!shape_ok || t.data.size() != static_cast<std::size_t>(m->size())) {
      throw Error(ErrorCode::kShapeMismatch, name);
    }
    std::copy(t.data.begin(), t.data.end(), m->data());
    by_name.erase(it);
  }
  if (!by_name.empty()) throw Error(ErrorCode::kUnknownTensor, by_name.begin()->first);
  return model;
}

void save_captioner(const Captioner& captioner, const fs::path& path) {
  save_checkpoint(model_to_tensors(captioner.model), path);
  captioner.vocab.save(vocab_sidecar(path));
  std::ofstream out(config_sidecar(path), std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + config_sidecar(path).string());
  out << config_to_json(captioner.model.config, captioner.k).dump(2) << '\n';
}

Captioner load_captioner(const fs::path& path) {
  std::ifstream in(config_sidecar(path));
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + config_sidecar(path).string());
  DecoderConfig c;
  std::size_t k = 0;
  try {
    json j = json::parse(in);
    c.vocab_size = j.at("vocab_size");
    c.embed_dim = j.at("embed_dim");
    c.d_model = j.at("d_model");
    c.layers = j.at("layers");
    c.heads = j.at("heads");
    c.max_len = j.at("max_len");
    c.ff_mult = j.at("ff_mult");
    c.mlp_hidden = j.at("mlp_hidden");
    c.tie_output = j.at("tie_output");
    c.prefix_positions = j.at("prefix_positions");
    k = j.at("k");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedLine, config_sidecar(path).string() + ": " + e.what());
  }
  Captioner cap{model_from_tensors(load_checkpoint(path), c), Vocabulary::load(vocab_sidecar(path)), k};
  if (cap.vocab.size() != c.vocab_size) {
    throw Error(ErrorCode::kShapeMismatch, "vocabulary sidecar has " + std::to_string(cap.vocab.size()) +
                                               " entries, checkpoint expects " + std::to_string(c.vocab_size));
  }
  return cap;
}

}  // namespace knight
