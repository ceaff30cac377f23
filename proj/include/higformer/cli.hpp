#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "higformer/training.hpp"

namespace higformer {

/// Paths and settings shared by every subcommand.
struct PipelineConfig {
  std::filesystem::path run_dir = "run";
  std::filesystem::path events;   // empty: <run_dir>/events.ndjson
  std::filesystem::path matches;  // empty: <run_dir>/matches.json
  TrainConfig train;
  double train_fraction = 0.8;
  bool cross_division_history = true;
  std::string host = "127.0.0.1";
  int port = 8080;

  std::filesystem::path events_path() const;
  std::filesystem::path matches_path() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);
void from_json(const nlohmann::json& j, PipelineConfig& c);

/// Runs one subcommand. Returns 0 on success, 1 on a pipeline error and 2
/// on a usage error. Subcommands: ingest, build-graphs, pretrain,
/// precompute, train, evaluate, attention-report, substitute, synth, serve.
int run_command(const std::vector<std::string>& args);

}  // namespace higformer
