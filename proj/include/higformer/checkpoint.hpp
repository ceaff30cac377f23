#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include <json.hpp>

#include "higformer/model.hpp"
#include "higformer/nn.hpp"

namespace higformer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Hash over names, shapes, and raw values of one parameter group.
std::uint64_t hash_group(const nn::ParameterStore& store, const std::string& group);
std::map<std::string, std::uint64_t> group_hashes(const nn::ParameterStore& store);

/// Binary container: magic, version, JSON header (metadata plus parameter
/// manifest), then every parameter's values as little-endian doubles in
/// column-major order.
std::string encode_checkpoint(const nn::ParameterStore& store, const nlohmann::json& meta);

struct DecodedCheckpoint {
  nlohmann::json meta;
  nn::ParameterStore params;
};
DecodedCheckpoint decode_checkpoint(std::string_view bytes);

/// Copies values by name. Every parameter of `into` must exist in `from`
/// with the same shape and group.
void load_parameters(nn::ParameterStore& into, const nn::ParameterStore& from);

/// Whole-model checkpoint: config, team graph, and seed travel in the header.
std::string save_model(const HigFormer& model, nlohmann::json meta);
HigFormer load_model(std::string_view bytes, nlohmann::json* meta = nullptr);

}  // namespace higformer
