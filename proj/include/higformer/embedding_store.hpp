#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "higformer/events.hpp"

namespace higformer {

struct EmbeddingRecord {
  PlayerId player_id = 0;
  MatchId match_id = 0;
  Eigen::VectorXd global;    // d
  Eigen::VectorXd local;     // d
  Eigen::VectorXd features;  // 10, log(1 + count)
};

/// Per-expert player embeddings for every (player, match) participation,
/// keyed for history lookups. Expert outputs stay separate so the gate can
/// still re-weight them after the encoders are frozen.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;
  EmbeddingStore(Eigen::Index width, std::uint64_t source_hash) : width_(width), source_hash_(source_hash) {}

  void insert(EmbeddingRecord record);
  const EmbeddingRecord* find(PlayerId player, MatchId match) const;
  const EmbeddingRecord& at(PlayerId player, MatchId match) const;

  std::size_t size() const { return records_.size(); }
  Eigen::Index width() const { return width_; }
  std::uint64_t source_hash() const { return source_hash_; }
  const std::vector<EmbeddingRecord>& records() const { return records_; }

  /// Binary table with a JSON manifest (player ids, match ids, widths,
  /// source checkpoint hash). Records are written in key order.
  std::string serialize() const;
  static EmbeddingStore deserialize(std::string_view bytes);

 private:
  Eigen::Index width_ = 0;
  std::uint64_t source_hash_ = 0;
  std::vector<EmbeddingRecord> records_;
  std::map<std::pair<PlayerId, MatchId>, std::size_t> index_;
};

}  // namespace higformer
