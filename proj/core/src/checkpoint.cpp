#include "traitfuse/checkpoint.hpp"

#include <fstream>
#include <json.hpp>

#include "traitfuse/errors.hpp"
#include "traitfuse/mprt.hpp"

namespace traitfuse {

namespace fs = std::filesystem;
using nlohmann::json;

void save_checkpoint(const FusionModel& model, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
  json files = json::object();
  for (const Parameter* p : model.parameters()) {
    const std::string file = p->name + ".mprt";
    write_mprt(dir / file, p->value, Dtype::f64);
    files[p->name] = file;
  }
  const json manifest{{"format", "traitfuse-checkpoint"},
                      {"version", 1},
                      {"config", json::parse(model_config_to_json(model.config))},
                      {"parameters", files}};
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
}

FusionModel load_checkpoint(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open " + manifest_path.string());
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError(manifest_path.string() + ": " + e.what());
  }
  if (!manifest.contains("config") || !manifest.contains("parameters")) {
    throw DataError(manifest_path.string() + ": missing 'config' or 'parameters'");
  }
  FusionModel model = FusionModel::init(model_config_from_json(manifest.at("config").dump()), 0);
  const auto& files = manifest.at("parameters");
  for (Parameter* p : model.parameters()) {
    if (!files.contains(p->name)) throw DataError("checkpoint lacks parameter '" + p->name + "'");
    const auto file = dir / files.at(p->name).get<std::string>();
    if (!fs::exists(file)) throw DataError("checkpoint file for '" + p->name + "' is missing: " + file.string());
    Tensor value = read_mprt(file);
    if (value.shape() != p->value.shape()) {
      throw DataError("checkpoint parameter '" + p->name + "' has shape " + shape_string(value.shape()) +
                      ", expected " + shape_string(p->value.shape()));
    }
    p->value = std::move(value);
  }
  return model;
}

}  // namespace traitfuse
