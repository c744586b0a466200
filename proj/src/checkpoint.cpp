#include "loant/checkpoint.hpp"

#include <fstream>

#include "json.hpp"

namespace loant {

using nlohmann::ordered_json;

void write_checkpoint(std::ostream& os, const ModelParams& params) {
  ordered_json j;
  j["format"] = "loant-checkpoint";
  j["version"] = kCheckpointVersion;
  const ModelConfig& c = params.config();
  j["config"] = {{"vocab_size", c.vocab_size},
                 {"embed_dim", c.embed_dim},
                 {"latent_dim", c.latent_dim}};
  ordered_json ps = ordered_json::object();
  for (const Param& p : params)
    ps[p.name] = {{"group", group_name(p.group)},
                  {"shape", p.value.shape()},
                  {"values", p.value.values()}};
  j["params"] = std::move(ps);
  os << j.dump() << '\n';
}

ModelParams read_checkpoint(std::istream& is) {
  ordered_json j;
  try {
    is >> j;
    if (j.at("format") != "loant-checkpoint") throw Error("not a checkpoint file");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw Error("unsupported checkpoint version " + std::to_string(version));
    ModelConfig c;
    c.vocab_size = j.at("config").at("vocab_size").get<std::size_t>();
    c.embed_dim = j.at("config").at("embed_dim").get<std::size_t>();
    c.latent_dim = j.at("config").at("latent_dim").get<std::size_t>();
    ModelParams params = ModelParams::zeros(c);
    const auto& ps = j.at("params");
    if (ps.size() != params.size()) throw Error("checkpoint parameter count mismatch");
    for (Param& p : params) {
      const auto& entry = ps.at(p.name);
      if (entry.at("group").get<std::string>() != group_name(p.group))
        throw Error("checkpoint group mismatch for " + p.name);
      const Shape shape = entry.at("shape").get<Shape>();
      if (shape != p.value.shape())
        throw ShapeError("checkpoint shape mismatch for " + p.name + ": " + shape_string(shape));
      p.value = Tensor(shape, entry.at("values").get<std::vector<double>>());
    }
    return params;
  } catch (const ordered_json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  write_checkpoint(os, params);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  return read_checkpoint(is);
}

}  // namespace loant
