#include "higformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "higformer/errors.hpp"

namespace higformer {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'H', 'I', 'G', 'F', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint layout assumes little-endian");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw DataError("checkpoint truncated");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string_view raw_bytes(const nn::Matrix& m) {
  return {reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double)};
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t hash_group(const nn::ParameterStore& store, const std::string& group) {
  std::uint64_t h = fnv1a64(group);
  for (const auto& p : store.all()) {
    if (p.group != group) continue;
    h = fnv1a64(p.name, h);
    const std::int64_t shape[2] = {p.value.rows(), p.value.cols()};
    h = fnv1a64({reinterpret_cast<const char*>(shape), sizeof(shape)}, h);
    h = fnv1a64(raw_bytes(p.value), h);
  }
  return h;
}

std::map<std::string, std::uint64_t> group_hashes(const nn::ParameterStore& store) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& g : store.groups()) out[g] = hash_group(store, g);
  return out;
}

std::string encode_checkpoint(const nn::ParameterStore& store, const json& meta) {
  json manifest = json::array();
  for (const auto& p : store.all()) {
    manifest.push_back({{"name", p.name}, {"group", p.group}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  json hashes = json::object();
  for (const auto& [g, h] : group_hashes(store)) hashes[g] = hex64(h);
  const json header = {{"meta", meta}, {"parameters", manifest}, {"groupHashes", hashes}};
  const auto text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out += text;
  for (const auto& p : store.all()) out += raw_bytes(p.value);
  return out;
}

DecodedCheckpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not a checkpoint file");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto len = take<std::uint64_t>(bytes, pos);
  if (pos + len > bytes.size()) throw DataError("checkpoint header truncated");
  const auto header = json::parse(bytes.substr(pos, len));
  pos += len;

  DecodedCheckpoint out;
  out.meta = header.at("meta");
  for (const auto& entry : header.at("parameters")) {
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    nn::Matrix m(rows, cols);
    const auto n = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (pos + n > bytes.size()) throw DataError("checkpoint values truncated");
    std::memcpy(m.data(), bytes.data() + pos, n);
    pos += n;
    out.params.add(entry.at("group").get<std::string>(), entry.at("name").get<std::string>(), std::move(m));
  }
  if (pos != bytes.size()) throw DataError("trailing bytes after checkpoint values");
  for (const auto& [g, h] : header.at("groupHashes").items()) {
    if (hex64(hash_group(out.params, g)) != h.get<std::string>()) {
      throw DataError("checkpoint group '" + g + "' fails its hash check");
    }
  }
  return out;
}

void load_parameters(nn::ParameterStore& into, const nn::ParameterStore& from) {
  for (std::size_t s = 0; s < into.size(); ++s) {
    auto& dst = into.at(static_cast<int>(s));
    const int src_slot = from.find(dst.name);
    if (src_slot < 0) throw ConfigError("checkpoint lacks parameter " + dst.name);
    const auto& src = from.at(src_slot);
    if (src.group != dst.group || src.value.rows() != dst.value.rows() || src.value.cols() != dst.value.cols()) {
      throw ConfigError("checkpoint parameter " + dst.name + " has a different shape or group");
    }
    dst.value = src.value;
  }
}

std::string save_model(const HigFormer& model, json meta) {
  meta["model"] = model.config();
  meta["seed"] = model.seed();
  meta["teamGraph"] = json::parse(write_team_graph(model.team_graph()));
  return encode_checkpoint(model.store(), meta);
}

HigFormer load_model(std::string_view bytes, json* meta) {
  auto decoded = decode_checkpoint(bytes);
  const auto& m = decoded.meta;
  if (!m.contains("model") || !m.contains("teamGraph")) throw DataError("checkpoint lacks model metadata");
  HigFormer model(m.at("model").get<ModelConfig>(), read_team_graph(m.at("teamGraph").dump()),
                  m.value("seed", std::uint64_t{0}));
  load_parameters(model.store(), decoded.params);
  if (meta) *meta = std::move(decoded.meta);
  return model;
}

}  // namespace higformer
