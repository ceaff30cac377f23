#include "higformer/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "higformer/analysis.hpp"
#include "higformer/checkpoint.hpp"
#include "higformer/errors.hpp"
#include "higformer/io.hpp"
#include "higformer/service.hpp"
#include "higformer/synthetic.hpp"

namespace higformer {

using nlohmann::json;
namespace fs = std::filesystem;

std::filesystem::path PipelineConfig::events_path() const {
  return events.empty() ? run_dir / "events.ndjson" : events;
}

std::filesystem::path PipelineConfig::matches_path() const {
  return matches.empty() ? run_dir / "matches.json" : matches;
}

void to_json(json& j, const PipelineConfig& c) {
  j = {{"runDir", c.run_dir.string()},
       {"events", c.events.string()},
       {"matches", c.matches.string()},
       {"train", c.train},
       {"trainFraction", c.train_fraction},
       {"crossDivisionHistory", c.cross_division_history},
       {"host", c.host},
       {"port", c.port}};
}

void from_json(const json& j, PipelineConfig& c) {
  PipelineConfig d;
  c.run_dir = j.value("runDir", d.run_dir.string());
  c.events = j.value("events", std::string());
  c.matches = j.value("matches", std::string());
  c.train = j.contains("train") ? j.at("train").get<TrainConfig>() : d.train;
  c.train_fraction = j.value("trainFraction", d.train_fraction);
  c.cross_division_history = j.value("crossDivisionHistory", d.cross_division_history);
  c.host = j.value("host", d.host);
  c.port = j.value("port", d.port);
}

namespace {

// Artifacts inside the run directory.
struct RunLayout {
  fs::path root;
  fs::path dataset() const { return root / "dataset.json"; }
  fs::path graphs() const { return root / "graphs"; }
  fs::path team_graph() const { return root / "team_graph.json"; }
  fs::path stage1() const { return root / "stage1.ckpt"; }
  fs::path embeddings() const { return root / "embeddings.bin"; }
  fs::path model() const { return root / "model.ckpt"; }
  fs::path metrics() const { return root / "metrics.json"; }
  fs::path log() const { return root / "log.txt"; }
  fs::path reports() const { return root / "reports"; }
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)), run_{cfg_.run_dir} {
    fs::create_directories(run_.root);
  }

  void log(const std::string& line) {
    std::ofstream out(run_.log(), std::ios::app);
    out << line << "\n";
    std::cerr << line << "\n";
  }

  void ingest() {
    const auto events = parse_event_stream(read_file(cfg_.events_path()));
    const auto metadata = parse_match_metadata(read_file(cfg_.matches_path()));
    DatasetOptions opts;
    opts.train_fraction = cfg_.train_fraction;
    opts.cross_division_history = cfg_.cross_division_history;
    const auto data = build_match_dataset(events, metadata, opts);
    write_file(run_.dataset(), write_dataset(data));
    log("ingest: " + std::to_string(events.size()) + " events, " + std::to_string(data.train().size()) +
        " train / " + std::to_string(data.test().size()) + " test matches");
  }

  void build_graphs() {
    const auto& data = dataset();
    const auto events = parse_event_stream(read_file(cfg_.events_path()));
    const auto cache = build_graph_cache(data, events, cfg_.train.model.id_dim);
    fs::create_directories(run_.graphs());
    for (const auto& [id, cached] : cache) {
      write_file(run_.graphs() / (std::to_string(id) + ".json"), write_graph_cache(cached));
    }
    write_file(run_.team_graph(), write_team_graph(build_dataset_team_graph(data)));
    graphs_ = cache;
    log("build-graphs: " + std::to_string(cache.size()) + " match graphs");
  }

  void pretrain() {
    const auto& data = dataset();
    const auto& graphs = graph_cache();
    HigFormer model(cfg_.train.model, read_team_graph(read_file(run_.team_graph())), cfg_.train.seed);
    const auto examples = stage1_examples(data, graphs);
    const auto start = std::chrono::steady_clock::now();
    Stage1Result result;
    try {
      result = stage1_pretrain(model, examples, cfg_.train, progress_logger());
    } catch (const TrainingError&) {
      write_file(run_.root / "stage1.last_good.ckpt", save_model(model, {{"stage", "stage1-partial"}}));
      throw;
    }
    json meta = {{"stage", "stage1"},
                 {"train", cfg_.train},
                 {"rngState", result.sampler_state},
                 {"globalMse", result.global_mse},
                 {"localMse", result.local_mse}};
    write_file(run_.stage1(), save_model(model, meta));
    log("pretrain: " + std::to_string(result.steps) + " steps, global mse " + std::to_string(result.global_mse) +
        ", local mse " + std::to_string(result.local_mse) + ", " + seconds_since(start));
    update_metrics({{"stage1", {{"steps", result.steps}, {"globalMse", result.global_mse},
                                {"localMse", result.local_mse}}}});
  }

  void precompute() {
    const auto model = load_model(read_file(run_.stage1()));
    const auto store = precompute_embeddings(model, dataset(), graph_cache());
    write_file(run_.embeddings(), store.serialize());
    log("precompute: " + std::to_string(store.size()) + " player-match embeddings");
  }

  void train() {
    if (!fs::exists(run_.dataset())) ingest();
    if (!fs::exists(run_.team_graph()) || !fs::exists(run_.graphs())) build_graphs();
    if (!fs::exists(run_.stage1())) pretrain();
    if (!fs::exists(run_.embeddings())) precompute();
    const auto stage1_bytes = read_file(run_.stage1());
    auto model = load_model(stage1_bytes);
    const auto store = EmbeddingStore::deserialize(read_file(run_.embeddings()));
    const auto frozen_before = frozen_hashes(model);
    const auto start = std::chrono::steady_clock::now();
    Stage2Result result;
    try {
      result = stage2_train(model, store, dataset(), cfg_.train, progress_logger());
    } catch (const TrainingError&) {
      write_file(run_.root / "model.last_good.ckpt", save_model(model, {{"stage", "stage2-partial"}}));
      throw;
    }
    if (frozen_hashes(model) != frozen_before) throw TrainingError("frozen parameter groups changed in stage 2");
    double max_frozen = 0.0;
    for (double g : result.frozen_grad_norm) max_frozen = std::max(max_frozen, g);
    json meta = {{"stage", "stage2"}, {"train", cfg_.train}, {"rngState", result.sampler_state}};
    write_file(run_.model(), save_model(model, meta));
    const auto accuracy = accuracy_report(model, store, false);
    write_file(run_.reports() / "accuracy.txt", accuracy.render());
    write_file(run_.reports() / "accuracy.json", accuracy.to_json().dump(2));
    update_metrics({{"stage2", {{"steps", result.steps},
                                {"finalLoss", result.loss.empty() ? 0.0 : result.loss.back()},
                                {"maxFrozenGradNorm", max_frozen}}},
                    {"test", accuracy.to_json()}});
    log("train: " + std::to_string(result.steps) + " stage-2 steps, " + seconds_since(start));
    std::cout << accuracy.render();
  }

  void evaluate() {
    bool trained = true;
    auto [model, store] = serving_model(&trained);
    const auto report = accuracy_report(model, store, !trained);
    write_file(run_.reports() / "accuracy.txt", report.render());
    write_file(run_.reports() / "accuracy.json", report.to_json().dump(2));
    std::cout << report.render();
  }

  void attention_report() {
    bool trained = true;
    auto [model, store] = serving_model(&trained);
    const auto& data = dataset();
    const auto matrix = attention_role_matrix(model, data, graph_cache(), data.test(), trained);
    write_file(run_.reports() / "attention.txt", matrix.render());
    write_file(run_.reports() / "attention.json", matrix.to_json().dump(2));
    std::cout << matrix.render();
  }

  fs::path substitute(const SubstitutionRequest& request) {
    auto [model, store] = serving_model(nullptr);
    const auto report = substitution_analysis(model, store, dataset(), request,
                                              static_cast<std::size_t>(cfg_.train.history_length));
    const auto base = run_.reports() / ("substitution_" + std::to_string(request.team_id));
    write_file(base.string() + ".txt", report.render());
    write_file(base.string() + ".json", report.to_json().dump(2));
    std::cout << report.render();
    return base.string() + ".json";
  }

  void serve() {
    auto [model, store] = serving_model(nullptr);
    const auto hash = hex64(fnv1a64(read_file(run_.model())));
    auto snap = std::make_shared<ServingSnapshot>(std::move(model), std::move(store), dataset(),
                                                  static_cast<std::size_t>(cfg_.train.history_length), hash);
    PredictionService service(snap);
    log("serve: listening on " + cfg_.host + ":" + std::to_string(cfg_.port));
    if (!service.listen(cfg_.host, cfg_.port)) throw ConfigError("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
  }

 private:
  const Dataset& dataset() {
    if (!data_) {
      if (!fs::exists(run_.dataset())) ingest();
      data_ = read_dataset(read_file(run_.dataset()));
    }
    return *data_;
  }

  const std::map<MatchId, CachedGraph>& graph_cache() {
    if (graphs_.empty()) {
      if (!fs::exists(run_.graphs())) build_graphs();
      for (const auto& m : dataset().all_matches()) {
        const auto path = run_.graphs() / (std::to_string(m.match_id) + ".json");
        if (!fs::exists(path)) throw DataError("graph cache lacks match " + std::to_string(m.match_id));
        graphs_.emplace(m.match_id, read_graph_cache(read_file(path)));
      }
    }
    return graphs_;
  }

  std::map<std::string, std::uint64_t> frozen_hashes(const HigFormer& model) const {
    std::map<std::string, std::uint64_t> out;
    for (const auto& g : player_encoder_groups()) out[g] = hash_group(model.store(), g);
    return out;
  }

  // Trained model plus matching embeddings; falls back to an untrained model.
  std::pair<HigFormer, EmbeddingStore> serving_model(bool* trained) {
    if (fs::exists(run_.model())) {
      json meta;
      auto model = load_model(read_file(run_.model()), &meta);
      if (trained) *trained = meta.value("stage", "") == "stage2";
      auto store = fs::exists(run_.embeddings()) ? EmbeddingStore::deserialize(read_file(run_.embeddings()))
                                                 : EmbeddingStore();
      if (store.size() == 0 || store.source_hash() != precompute_source(model)) {
        store = precompute_embeddings(model, dataset(), graph_cache());
      }
      return {std::move(model), std::move(store)};
    }
    if (!trained) throw DataError("no trained checkpoint at " + run_.model().string() + "; run `train` first");
    *trained = false;
    if (!fs::exists(run_.team_graph())) build_graphs();
    HigFormer model(cfg_.train.model, read_team_graph(read_file(run_.team_graph())), cfg_.train.seed);
    auto store = precompute_embeddings(model, dataset(), graph_cache());
    return {std::move(model), std::move(store)};
  }

  std::uint64_t precompute_source(const HigFormer& model) const {
    std::uint64_t source = 0;
    for (const auto& g : player_encoder_groups()) source = fnv1a64(hex64(hash_group(model.store(), g)), source);
    return source;
  }

  AccuracyReport accuracy_report(const HigFormer& model, const EmbeddingStore& store, bool untrained) {
    const auto& data = dataset();
    const auto preds = predict_matches(model, store, data, data.test(),
                                       static_cast<std::size_t>(cfg_.train.history_length));
    std::vector<Outcome> predicted, labels;
    std::vector<std::string> divisions;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      predicted.push_back(preds[i].outcome_class);
      labels.push_back(data.test()[i].label);
      divisions.push_back(data.test()[i].division);
    }
    auto report = per_class_accuracy(predicted, labels, divisions);
    if (untrained) report.warnings.push_back("UNTRAINED MODEL: no stage-2 checkpoint found, predictions are meaningless");
    return report;
  }

  ProgressFn progress_logger() {
    auto path = run_.root / "train_log.ndjson";
    return [path](std::string_view stage, int step, double loss) {
      std::ofstream out(path, std::ios::app);
      out << json{{"stage", stage}, {"step", step}, {"loss", loss}}.dump() << "\n";
    };
  }

  void update_metrics(const json& patch) {
    json metrics = fs::exists(run_.metrics()) ? json::parse(read_file(run_.metrics())) : json::object();
    metrics.update(patch);
    write_file(run_.metrics(), metrics.dump(2));
  }

  static std::string seconds_since(std::chrono::steady_clock::time_point start) {
    const auto s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return std::to_string(s) + " s";
  }

  PipelineConfig cfg_;
  RunLayout run_;
  std::optional<Dataset> data_;
  std::map<MatchId, CachedGraph> graphs_;
};

}  // namespace

int run_command(const std::vector<std::string>& args) {
  CLI::App app{"HIGFormer soccer outcome prediction pipeline", "higformer"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand

  std::string config_path;
  std::string run_dir;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "Pipeline config (JSON)");
  app.add_option("--run-dir", run_dir, "Run directory (default: $HIGFORMER_RUN_DIR or ./run)");
  app.add_option("--seed", seed, "Seed for every random choice");

  std::string events_path, matches_path;
  auto* ingest = app.add_subcommand("ingest", "Parse events and match metadata into a dataset");
  ingest->add_option("--events", events_path, "Event stream (NDJSON or JSON array)");
  ingest->add_option("--matches", matches_path, "Match metadata (JSON array)");
  auto* build = app.add_subcommand("build-graphs", "Build per-match interaction graphs and the team graph");
  auto* pretrain = app.add_subcommand("pretrain", "Stage 1: pretrain both player encoders");
  auto* precompute = app.add_subcommand("precompute", "Cache per-match player embeddings");
  auto* train = app.add_subcommand("train", "Stage 2 (runs missing earlier steps first)");
  std::optional<int> stage1_steps, stage2_steps;
  for (auto* sub : {pretrain, train}) sub->add_option("--stage1-steps", stage1_steps, "Stage 1 optimizer steps");
  train->add_option("--stage2-steps", stage2_steps, "Stage 2 optimizer steps");
  auto* evaluate = app.add_subcommand("evaluate", "Per-class test accuracy");
  auto* attention = app.add_subcommand("attention-report", "Role-grouped attention of the global encoder");
  auto* substitute = app.add_subcommand("substitute", "Player substitution analysis on a team's test fixtures");
  TeamId team = 0;
  std::optional<TeamId> opponent;
  std::vector<PlayerId> outs, ins;
  substitute->add_option("--team", team, "Team id")->required();
  substitute->add_option("--opponent", opponent, "Only fixtures against this team");
  substitute->add_option("--out", outs, "Outgoing player id (repeatable)");
  substitute->add_option("--in", ins, "Incoming player id (repeatable, paired with --out)");
  auto* synth = app.add_subcommand("synth", "Write a synthetic league with known outcome probabilities");
  SynthConfig synth_cfg;
  synth->add_option("--teams", synth_cfg.n_teams, "Number of teams (even)");
  synth->add_option("--rounds", synth_cfg.n_rounds, "Matchdays (0: two double round-robins)");
  synth->add_option("--players", synth_cfg.n_players_per_team, "Squad size");
  synth->add_option("--spread", synth_cfg.strength_spread, "Strength spread");
  auto* serve = app.add_subcommand("serve", "HTTP prediction and what-if service");
  std::string host;
  std::optional<int> port;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (outs.size() != ins.size()) {
    std::cerr << "substitute: --out and --in must be given the same number of times\n";
    return 2;
  }

  try {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = json::parse(read_file(config_path)).get<PipelineConfig>();
    if (const char* env = std::getenv("HIGFORMER_RUN_DIR"); env && *env) cfg.run_dir = env;
    if (!run_dir.empty()) cfg.run_dir = run_dir;
    if (seed) cfg.train.seed = *seed;
    if (stage1_steps) cfg.train.stage1_steps = *stage1_steps;
    if (stage2_steps) cfg.train.stage2_steps = *stage2_steps;
    if (!events_path.empty()) cfg.events = events_path;
    if (!matches_path.empty()) cfg.matches = matches_path;
    if (!host.empty()) cfg.host = host;
    if (port) cfg.port = *port;
    cfg.train.validate();

    if (synth->parsed()) {
      synth_cfg.seed = cfg.train.seed;
      synth_cfg.train_fraction = cfg.train_fraction;
      const auto league = synthesize_league(synth_cfg);
      write_file(cfg.events_path(), write_event_stream(league.events));
      write_file(cfg.matches_path(), write_match_metadata(league.metadata));
      write_file(cfg.run_dir / "synthetic.json", write_synthetic_manifest(league));
      std::cout << "synth: " << league.metadata.size() << " matches, Bayes accuracy " << league.bayes_accuracy
                << "\n";
      return 0;
    }
    Pipeline pipeline(cfg);
    if (ingest->parsed()) pipeline.ingest();
    if (build->parsed()) pipeline.build_graphs();
    if (pretrain->parsed()) pipeline.pretrain();
    if (precompute->parsed()) pipeline.precompute();
    if (train->parsed()) pipeline.train();
    if (evaluate->parsed()) pipeline.evaluate();
    if (attention->parsed()) pipeline.attention_report();
    if (substitute->parsed()) {
      SubstitutionRequest req{team, opponent, {}};
      for (std::size_t i = 0; i < outs.size(); ++i) req.substitutions.push_back({outs[i], ins[i]});
      pipeline.substitute(req);
    }
    if (serve->parsed()) pipeline.serve();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace higformer
