#pragma once

// Line-JSON checkpoints. The first line is a header carrying the format tag,
// version, model configuration and free-form metadata; every following line
// holds one named parameter with its shape and row-major values. Doubles are
// written in shortest round-trip form, so save/load is bitwise exact.

#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "json.hpp"

#include "dydiff/model.hpp"

namespace dydiff {

inline constexpr const char* kCheckpointFormat = "dydiff-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  nlohmann::json meta = nlohmann::json::object();
};

inline nlohmann::json model_config_json(const ModelConfig& c) {
  return {{"dim", c.dim}, {"conv_layers", c.conv_layers}, {"ablations", c.ablations.to_string()}};
}

inline void save_checkpoint(Model& model, const nlohmann::json& meta, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  const nlohmann::json header = {{"format", kCheckpointFormat},
                                 {"version", kCheckpointVersion},
                                 {"model", model_config_json(model.config())},
                                 {"meta", meta}};
  out << header.dump() << '\n';
  for (Parameter* p : model.all_parameters()) {
    const Tensor& v = p->value();
    const nlohmann::json line = {
        {"name", p->name()}, {"shape", {v.rows(), v.cols()}}, {"values", std::vector<double>(v.values().begin(), v.values().end())}};
    out << line.dump() << '\n';
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ": empty checkpoint");
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != kCheckpointFormat) throw ParseError(path.string() + ": not a checkpoint");
  if (header.at("version").get<int>() != kCheckpointVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint version " + header.at("version").dump());
  }
  ModelConfig cfg;
  cfg.dim = header.at("model").at("dim").get<Index>();
  cfg.conv_layers = header.at("model").at("conv_layers").get<int>();
  cfg.ablations = Ablations::parse(header.at("model").at("ablations").get<std::string>());

  Checkpoint ck{Model(cfg, 0), header.value("meta", nlohmann::json::object())};
  std::map<std::string, Parameter*> by_name;
  for (Parameter* p : ck.model.all_parameters()) by_name[p->name()] = p;
  std::size_t line_no = 1;
  std::size_t loaded = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto name = j.at("name").get<std::string>();
    const auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": unknown parameter " + name);
    }
    const auto shape = j.at("shape").get<std::vector<Index>>();
    if (shape.size() != 2) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad shape");
    it->second->set_value(Tensor(shape[0], shape[1], j.at("values").get<std::vector<double>>()));
    ++loaded;
  }
  if (loaded != by_name.size()) {
    throw ParseError(path.string() + ": expected " + std::to_string(by_name.size()) + " parameters, found " +
                     std::to_string(loaded));
  }
  return ck;
}

}  // namespace dydiff
