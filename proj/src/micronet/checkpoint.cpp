#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "vrepair/micronet.hpp"

namespace vrepair::micronet {

namespace {

constexpr int kFormatVersion = 1;

nlohmann::json config_json(const ModelConfig& c) {
  return {{"num_layers", c.num_layers},       {"num_heads", c.num_heads},
          {"model_dim", c.model_dim},         {"ff_dim", c.ff_dim},
          {"dropout", c.dropout},             {"label_smoothing", c.label_smoothing},
          {"max_positions", c.max_positions}};
}

ModelConfig config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.num_layers = j.at("num_layers").get<int>();
  c.num_heads = j.at("num_heads").get<int>();
  c.model_dim = j.at("model_dim").get<int>();
  c.ff_dim = j.at("ff_dim").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.label_smoothing = j.at("label_smoothing").get<double>();
  c.max_positions = j.at("max_positions").get<int>();
  c.validate();
  return c;
}

}  // namespace

void save_checkpoint(const ModelState& state, const std::string& path) {
  nlohmann::json j;
  j["format"] = "vrepair-checkpoint";
  j["version"] = kFormatVersion;
  j["config"] = config_json(state.config);
  j["vocab"] = state.vocab.lexemes();
  j["step"] = state.step;
  nlohmann::json tensors = nlohmann::json::object();
  state.params.visit([&](const std::string& name, const Matrix& m) {
    tensors[name] = {{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.values()}};
  });
  j["tensors"] = std::move(tensors);
  const auto bytes = nlohmann::json::to_cbor(j);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path);
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
    j = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt checkpoint " + path + ": " + e.what());
  }
  if (j.value("format", "") != "vrepair-checkpoint" || j.value("version", 0) != kFormatVersion) {
    throw std::runtime_error("not a checkpoint: " + path);
  }
  ModelState s;
  s.config = config_from(j.at("config"));
  s.vocab = Vocabulary(j.at("vocab").get<std::vector<std::string>>());
  s.step = j.at("step").get<std::int64_t>();
  s.params = Parameters::zeros(s.config, s.vocab.size());
  const auto& tensors = j.at("tensors");
  s.params.visit([&](const std::string& name, Matrix& m) {
    if (!tensors.contains(name)) throw std::runtime_error("checkpoint missing tensor " + name);
    const auto& t = tensors.at(name);
    if (t.at("rows").get<std::size_t>() != m.rows() || t.at("cols").get<std::size_t>() != m.cols()) {
      throw std::runtime_error("checkpoint tensor shape mismatch: " + name);
    }
    m.values() = t.at("data").get<std::vector<double>>();
    if (m.values().size() != m.rows() * m.cols()) throw std::runtime_error("checkpoint tensor size mismatch: " + name);
  });
  return s;
}

}  // namespace vrepair::micronet
