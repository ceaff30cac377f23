#include "higformer/embedding_store.hpp"

#include <cstring>
#include <set>

#include <json.hpp>

#include "higformer/checkpoint.hpp"
#include "higformer/errors.hpp"

namespace higformer {
namespace {

constexpr char kMagic[8] = {'H', 'I', 'G', 'F', 'E', 'M', 'B', 'D'};
constexpr std::uint32_t kVersion = 1;

void put_raw(std::string& out, const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); }

void take_raw(std::string_view bytes, std::size_t& pos, void* dst, std::size_t n) {
  if (pos + n > bytes.size()) throw DataError("embedding store truncated");
  std::memcpy(dst, bytes.data() + pos, n);
  pos += n;
}

}  // namespace

void EmbeddingStore::insert(EmbeddingRecord record) {
  if (record.global.size() != width_ || record.local.size() != width_ ||
      record.features.size() != static_cast<Eigen::Index>(kNumEventKinds)) {
    throw ConfigError("embedding record has the wrong width");
  }
  const auto key = std::make_pair(record.player_id, record.match_id);
  if (index_.contains(key)) {
    throw DataError("duplicate embedding for player " + std::to_string(record.player_id) + " in match " +
                    std::to_string(record.match_id));
  }
  index_.emplace(key, records_.size());
  records_.push_back(std::move(record));
}

const EmbeddingRecord* EmbeddingStore::find(PlayerId player, MatchId match) const {
  auto it = index_.find({player, match});
  return it == index_.end() ? nullptr : &records_[it->second];
}

const EmbeddingRecord& EmbeddingStore::at(PlayerId player, MatchId match) const {
  if (const auto* r = find(player, match)) return *r;
  throw LookupError("no stored embedding for player " + std::to_string(player) + " in match " +
                    std::to_string(match));
}

std::string EmbeddingStore::serialize() const {
  std::set<PlayerId> players;
  std::set<MatchId> matches;
  for (const auto& r : records_) {
    players.insert(r.player_id);
    matches.insert(r.match_id);
  }
  const nlohmann::json manifest = {{"width", width_},
                                   {"featureWidth", kNumEventKinds},
                                   {"count", records_.size()},
                                   {"sourceCheckpoint", hex64(source_hash_)},
                                   {"players", players},
                                   {"matches", matches}};
  const auto text = manifest.dump();
  std::string out(kMagic, sizeof(kMagic));
  put_raw(out, &kVersion, sizeof(kVersion));
  const std::uint64_t len = text.size();
  put_raw(out, &len, sizeof(len));
  out += text;
  for (const auto& [key, idx] : index_) {
    const auto& r = records_[idx];
    put_raw(out, &r.player_id, sizeof(r.player_id));
    put_raw(out, &r.match_id, sizeof(r.match_id));
    put_raw(out, r.global.data(), sizeof(double) * static_cast<std::size_t>(width_));
    put_raw(out, r.local.data(), sizeof(double) * static_cast<std::size_t>(width_));
    put_raw(out, r.features.data(), sizeof(double) * kNumEventKinds);
  }
  return out;
}

EmbeddingStore EmbeddingStore::deserialize(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("not an embedding store");
  }
  std::size_t pos = sizeof(kMagic);
  std::uint32_t version = 0;
  take_raw(bytes, pos, &version, sizeof(version));
  if (version != kVersion) throw DataError("unsupported embedding store version " + std::to_string(version));
  std::uint64_t len = 0;
  take_raw(bytes, pos, &len, sizeof(len));
  if (pos + len > bytes.size()) throw DataError("embedding store manifest truncated");
  const auto manifest = nlohmann::json::parse(bytes.substr(pos, len));
  pos += len;
  if (manifest.at("featureWidth").get<std::size_t>() != kNumEventKinds) {
    throw DataError("embedding store feature width mismatch");
  }
  EmbeddingStore store(manifest.at("width").get<Eigen::Index>(),
                       std::stoull(manifest.at("sourceCheckpoint").get<std::string>(), nullptr, 16));
  const auto count = manifest.at("count").get<std::size_t>();
  for (std::size_t i = 0; i < count; ++i) {
    EmbeddingRecord r;
    take_raw(bytes, pos, &r.player_id, sizeof(r.player_id));
    take_raw(bytes, pos, &r.match_id, sizeof(r.match_id));
    r.global.resize(store.width_);
    r.local.resize(store.width_);
    r.features.resize(static_cast<Eigen::Index>(kNumEventKinds));
    take_raw(bytes, pos, r.global.data(), sizeof(double) * static_cast<std::size_t>(store.width_));
    take_raw(bytes, pos, r.local.data(), sizeof(double) * static_cast<std::size_t>(store.width_));
    take_raw(bytes, pos, r.features.data(), sizeof(double) * kNumEventKinds);
    store.insert(std::move(r));
  }
  if (pos != bytes.size()) throw DataError("trailing bytes in embedding store");
  return store;
}

}  // namespace higformer
