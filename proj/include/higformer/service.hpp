#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "higformer/analysis.hpp"
#include "higformer/dataset.hpp"
#include "higformer/embedding_store.hpp"
#include "higformer/model.hpp"

namespace httplib {
class Server;
}

namespace higformer {

/// Everything a request reads. Loaded once and never written.
struct ServingSnapshot {
  HigFormer model;
  EmbeddingStore store;
  Dataset data;
  std::size_t history_length = 10;
  std::string checkpoint_hash;
  ag::Matrix team_representation;

  ServingSnapshot(HigFormer m, EmbeddingStore s, Dataset d, std::size_t history, std::string hash);
};

struct HttpResponse {
  int status = 200;
  std::string body;
};

/// JSON API over a model snapshot. Every response carries "v": 1.
///   GET  /api/health
///   GET  /api/teams
///   GET  /api/players?team=<id>
///   POST /api/predict   {v, home_team, away_team, rosters: {home: [...], away: [...]}, date?}
///   POST /api/whatif    {v, team_id, opponent?, substitutions: [{out, in}]}
/// Errors: 400 schema, 404 unknown ids or route, 405 method, 409 player without history,
/// 500 internal with an opaque id.
class PredictionService {
 public:
  explicit PredictionService(std::shared_ptr<const ServingSnapshot> snapshot);
  ~PredictionService();

  HttpResponse handle(std::string_view method, std::string_view path,
                      const std::map<std::string, std::string>& query, std::string_view body) const;

  /// Atomic replacement; in-flight requests finish on the snapshot they started with.
  void swap_snapshot(std::shared_ptr<const ServingSnapshot> snapshot);
  std::shared_ptr<const ServingSnapshot> snapshot() const;

  /// Blocks until stop() is called from another thread.
  bool listen(const std::string& host, int port);
  /// Binds to a free port and returns it; serve with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();

 private:
  nlohmann::json teams(const ServingSnapshot& s) const;
  nlohmann::json players(const ServingSnapshot& s, const std::map<std::string, std::string>& query) const;
  nlohmann::json predict(const ServingSnapshot& s, const nlohmann::json& body) const;
  nlohmann::json whatif(const ServingSnapshot& s, const nlohmann::json& body) const;
  void install_routes();

  mutable std::mutex mutex_;
  std::shared_ptr<const ServingSnapshot> snapshot_;
  std::unique_ptr<httplib::Server> server_;
  mutable std::atomic<std::uint64_t> fault_counter_{0};
};

/// Parses a /api/whatif body into a request; throws SchemaError.
SubstitutionRequest parse_whatif_request(const nlohmann::json& body);

}  // namespace higformer
