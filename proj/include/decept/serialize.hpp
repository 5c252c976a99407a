#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "decept/grad_check.hpp"

namespace decept::numerics {

// Flat checkpoint format: one JSON object mapping parameter name to
// {"shape": [...], "values": [...]}. Doubles survive the round trip
// bit-exactly (the JSON writer emits shortest exact representations).
nlohmann::ordered_json params_to_json(const std::vector<NamedParam>& params);

// Loads values into existing tensors; every name must be present with a
// matching shape. Gradients are untouched.
void params_from_json(const nlohmann::ordered_json& j,
                      const std::vector<NamedParam>& params);

void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedParam>& params);
void load_checkpoint(const std::filesystem::path& path,
                     const std::vector<NamedParam>& params);

// Deterministic double formatting for CSV artifacts: shortest string that
// parses back to the same bits.
std::string format_double(double v);

}  // namespace decept::numerics
