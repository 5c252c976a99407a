#include "decept/serialize.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "decept/error.hpp"

namespace decept::numerics {

nlohmann::ordered_json params_to_json(const std::vector<NamedParam>& params) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const NamedParam& p : params) {
    if (!p.tensor) throw ContractError("params_to_json: null tensor");
    nlohmann::ordered_json entry;
    entry["shape"] = p.tensor->shape;
    entry["values"] = p.tensor->data;
    j[p.name] = std::move(entry);
  }
  return j;
}

void params_from_json(const nlohmann::ordered_json& j,
                      const std::vector<NamedParam>& params) {
  for (const NamedParam& p : params) {
    if (!j.contains(p.name))
      throw ContractError("checkpoint is missing parameter '" + p.name + "'");
    const auto& entry = j.at(p.name);
    Shape shape = entry.at("shape").get<Shape>();
    if (shape != p.tensor->shape)
      throw DimensionError("checkpoint shape " + shape_str(shape) +
                           " does not match parameter '" + p.name + "' (" +
                           shape_str(p.tensor->shape) + ")");
    std::vector<double> values = entry.at("values").get<std::vector<double>>();
    if (values.size() != p.tensor->data.size())
      throw DimensionError("checkpoint value count mismatch for '" + p.name +
                           "'");
    p.tensor->data = std::move(values);
  }
}

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedParam>& params) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << params_to_json(params).dump(2) << "\n";
  if (!out) throw IoError("write failed for " + path.string());
}

void load_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedParam>& params) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  params_from_json(j, params);
}

std::string format_double(double v) {
  // Round-trip formatting: try increasing precision until the string
  // parses back to the exact same double.
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

}  // namespace decept::numerics
