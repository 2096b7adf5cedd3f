#pragma once

#include <string>

#include <json.hpp>

#include "csst/encoders.hpp"
#include "csst/error.hpp"

namespace csst::detail {

inline nlohmann::json backbone_json(const BackboneConfig& c) {
  return {{"variant", to_string(c.variant)}, {"hidden", c.hidden},
          {"mlp_layers", c.mlp_layers},      {"conv_layers", c.conv_layers},
          {"sigma_m", c.sigma_m},            {"hops", c.hops},
          {"max_neighbors", c.max_neighbors}, {"attr_dim", c.attr_dim},
          {"portrait_dim", c.portrait_dim},  {"report_dim", c.report_dim}};
}

// Throws DataError naming `path` when a field is missing or invalid.
inline BackboneConfig backbone_from_json(const nlohmann::json& meta, const std::string& path) {
  BackboneConfig c;
  try {
    c.variant = parse_variant(meta.at("variant").get<std::string>());
    c.hidden = meta.at("hidden").get<std::size_t>();
    c.mlp_layers = meta.at("mlp_layers").get<std::size_t>();
    c.conv_layers = meta.at("conv_layers").get<std::size_t>();
    c.sigma_m = meta.at("sigma_m").get<double>();
    c.hops = meta.at("hops").get<std::size_t>();
    c.max_neighbors = meta.at("max_neighbors").get<std::size_t>();
    c.attr_dim = meta.at("attr_dim").get<std::size_t>();
    c.portrait_dim = meta.at("portrait_dim").get<std::size_t>();
    c.report_dim = meta.at("report_dim").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": incomplete metadata: " + e.what());
  } catch (const ConfigError& e) {
    throw DataError(path + ": " + e.what());
  }
  return c;
}

inline nlohmann::json parse_metadata(const std::string& text, const std::string& path, const char* kind) {
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": malformed metadata: " + e.what());
  }
  if (!meta.is_object() || meta.value("kind", "") != kind)
    throw DataError(path + ": not a " + std::string(kind) + " checkpoint");
  return meta;
}

}  // namespace csst::detail
