#include "higformer/training.hpp"

#include <cmath>
#include <sstream>

#include "higformer/checkpoint.hpp"
#include "higformer/errors.hpp"

namespace higformer {

using ag::Matrix;
using ag::Var;
using nlohmann::json;

void TrainConfig::validate() const {
  model.validate();
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (stage1_steps < 0 || stage2_steps < 0) throw ConfigError("step counts must be non-negative");
  if (history_length <= 0) throw ConfigError("history length must be positive");
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (clip_norm < 0.0) throw ConfigError("clip norm must be non-negative");
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"model", c.model},
       {"learningRate", c.learning_rate},
       {"stage1Steps", c.stage1_steps},
       {"stage2Steps", c.stage2_steps},
       {"stepUnit", "optimizer_steps"},
       {"historyLength", c.history_length},
       {"batchSize", c.batch_size},
       {"seed", c.seed},
       {"clipNorm", c.clip_norm},
       {"stage1WeightedSampler", c.stage1_weighted_sampler},
       {"stage2WeightedSampler", c.stage2_weighted_sampler}};
}

void from_json(const json& j, TrainConfig& c) {
  TrainConfig d;
  c.model = j.contains("model") ? j.at("model").get<ModelConfig>() : d.model;
  c.learning_rate = j.value("learningRate", d.learning_rate);
  c.stage1_steps = j.value("stage1Steps", d.stage1_steps);
  c.stage2_steps = j.value("stage2Steps", d.stage2_steps);
  if (j.contains("stepUnit") && j.at("stepUnit") != "optimizer_steps") {
    throw ConfigError("only optimizer_steps is supported as a step unit");
  }
  c.history_length = j.value("historyLength", d.history_length);
  c.batch_size = j.value("batchSize", d.batch_size);
  c.seed = j.value("seed", d.seed);
  c.clip_norm = j.value("clipNorm", d.clip_norm);
  c.stage1_weighted_sampler = j.value("stage1WeightedSampler", d.stage1_weighted_sampler);
  c.stage2_weighted_sampler = j.value("stage2WeightedSampler", d.stage2_weighted_sampler);
  c.validate();
}

double mse_loss(double y, double y_hat) { return (y - y_hat) * (y - y_hat); }

WeightedSampler::WeightedSampler(std::span<const Outcome> labels, std::uint64_t seed, bool weighted)
    : rng_(seed) {
  if (labels.empty()) throw ConfigError("sampler needs at least one label");
  std::array<std::size_t, 3> counts{};
  for (auto l : labels) ++counts[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < 3; ++c) class_weights_[c] = counts[c] ? 1.0 / static_cast<double>(counts[c]) : 0.0;
  double total = 0.0;
  for (auto l : labels) {
    weights_.push_back(weighted ? class_weights_[static_cast<std::size_t>(l)] : 1.0);
    total += weights_.back();
  }
  for (auto& w : weights_) w /= total;
  dist_ = std::discrete_distribution<std::size_t>(weights_.begin(), weights_.end());
}

std::size_t WeightedSampler::next() { return dist_(rng_); }

std::vector<std::size_t> WeightedSampler::draw(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (auto& i : out) i = next();
  return out;
}

std::string WeightedSampler::rng_state() const {
  std::ostringstream os;
  os << rng_;
  return os.str();
}

std::vector<Stage1Example> stage1_examples(const Dataset& data, const std::map<MatchId, CachedGraph>& graphs) {
  std::vector<Stage1Example> out;
  for (const auto& m : data.train()) {
    auto it = graphs.find(m.match_id);
    if (it == graphs.end()) throw DataError("no cached graph for match " + std::to_string(m.match_id));
    out.push_back({GraphInput::from(it->second.graph, it->second.identifiers), outcome_to_target(m.label), m.label});
  }
  return out;
}

namespace {

std::vector<Outcome> labels_of(std::span<const Stage1Example> examples) {
  std::vector<Outcome> out;
  for (const auto& e : examples) out.push_back(e.label);
  return out;
}

// One readout path of the first stage.
struct Stage1Path {
  bool global = true;
  nn::Linear head;
  std::vector<int> slots;

  Var predict(ag::Tape& tape, const HigFormer& model, const nn::ParameterStore& work,
              const GraphInput& graph) const {
    const auto& net = model.player_net();
    const auto readout = global ? net.encode_global(tape, work, graph, GlobalMode::kClassToken).output
                                : ag::mean_rows(net.encode_local(tape, work, graph).output);
    return ag::sigmoid(head(tape, work, readout));
  }
};

double path_mse(const Stage1Path& path, const HigFormer& model, const nn::ParameterStore& work,
                std::span<const Stage1Example> examples) {
  double total = 0.0;
  for (const auto& ex : examples) {
    ag::Tape tape;
    total += mse_loss(ex.target, path.predict(tape, model, work, ex.graph).value()(0, 0));
  }
  return total / static_cast<double>(examples.size());
}

}  // namespace

Stage1Result stage1_pretrain(HigFormer& model, std::span<const Stage1Example> examples, const TrainConfig& config,
                             const ProgressFn& progress) {
  config.validate();
  Stage1Result result;
  const auto& mc = model.config();
  if (!mc.use_player_net || config.stage1_steps == 0) return result;
  if (examples.empty()) throw TrainingError("stage 1 needs at least one training graph");

  // Heads live in a scratch copy of the store so the model never carries them.
  auto work = model.store();
  nn::Initializer init(config.seed ^ 0x5157a9e1ULL);
  std::vector<Stage1Path> paths;
  if (mc.use_global) {
    Stage1Path p{true, nn::Linear::create(work, init, "stage1_heads", "stage1_heads/global", mc.out_dim, 1), {}};
    p.slots = model.slots_in({groups::kTypeTables, groups::kGlobalEncoder});
    p.slots.push_back(p.head.weight);
    p.slots.push_back(p.head.bias);
    paths.push_back(std::move(p));
  }
  if (mc.use_local) {
    Stage1Path p{false, nn::Linear::create(work, init, "stage1_heads", "stage1_heads/local", mc.out_dim, 1), {}};
    p.slots = model.slots_in({groups::kLocalEncoder});
    p.slots.push_back(p.head.weight);
    p.slots.push_back(p.head.bias);
    paths.push_back(std::move(p));
  }
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  adam_cfg.clip_norm = config.clip_norm;
  std::vector<nn::Adam> optimizers;
  for (const auto& p : paths) optimizers.emplace_back(work, p.slots, adam_cfg);

  const auto labels = labels_of(examples);
  WeightedSampler sampler(labels, config.seed, config.stage1_weighted_sampler);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  const double inv_batch = 1.0 / static_cast<double>(batch);

  for (int step = 0; step < config.stage1_steps; ++step) {
    const auto indices = sampler.draw(batch);
    for (std::size_t p = 0; p < paths.size(); ++p) {
      nn::Gradients grads(work.size());
      double loss = 0.0;
      for (auto i : indices) {
        ag::Tape tape;
        Var y_hat;
        try {
          y_hat = paths[p].predict(tape, model, work, examples[i].graph);
        } catch (const NumericError& e) {
          throw TrainingError(std::string("stage 1 diverged at step ") + std::to_string(step) + ": " + e.what());
        }
        const auto residual = ag::sub(y_hat, tape.constant(Matrix::Constant(1, 1, examples[i].target)));
        const auto sq = ag::square(residual);
        loss += sq.value()(0, 0) * inv_batch;
        tape.backward(sq);
        grads.add_from(tape, inv_batch);
      }
      if (!std::isfinite(loss)) {
        throw TrainingError("stage 1 diverged at step " + std::to_string(step) + " (non-finite loss)");
      }
      optimizers[p].step(work, grads);
      (paths[p].global ? result.global_loss : result.local_loss).push_back(loss);
      if (progress) progress(paths[p].global ? "stage1/global" : "stage1/local", step, loss);
    }
    ++result.steps;
  }

  for (const auto& p : paths) {
    (p.global ? result.global_mse : result.local_mse) = path_mse(p, model, work, examples);
  }
  for (int s : model.slots_in(player_encoder_groups())) model.store().at(s).value = work.at(s).value;
  result.sampler_state = sampler.rng_state();
  return result;
}

EmbeddingStore precompute_embeddings(const HigFormer& model, const Dataset& data,
                                     const std::map<MatchId, CachedGraph>& graphs) {
  const auto& mc = model.config();
  std::uint64_t source = 0;
  for (const auto& g : player_encoder_groups()) source = fnv1a64(hex64(hash_group(model.store(), g)), source);
  EmbeddingStore store(mc.out_dim, source);
  for (const auto& m : data.all_matches()) {
    auto it = graphs.find(m.match_id);
    if (it == graphs.end()) throw DataError("no cached graph for match " + std::to_string(m.match_id));
    const auto& graph = it->second.graph;
    const auto input = GraphInput::from(graph, it->second.identifiers);
    ag::Tape tape;
    const auto n = static_cast<Eigen::Index>(graph.num_nodes());
    const Matrix global = mc.use_player_net && mc.use_global
                              ? model.player_net()
                                    .encode_global(tape, model.store(), input, GlobalMode::kEmbeddings, true)
                                    .output.value()
                              : Matrix::Zero(n, mc.out_dim);
    const Matrix local = mc.use_player_net && mc.use_local
                             ? model.player_net().encode_local(tape, model.store(), input).output.value()
                             : Matrix::Zero(n, mc.out_dim);
    for (const auto& line : data.lines(m.match_id)) {
      const auto idx = graph.index_of(line.player_id);
      if (!idx) {
        throw DataError("graph of match " + std::to_string(m.match_id) + " lacks player " +
                        std::to_string(line.player_id));
      }
      store.insert({line.player_id, m.match_id, global.row(*idx).transpose(), local.row(*idx).transpose(),
                    input.features.row(*idx).transpose()});
    }
  }
  return store;
}

MatchInput build_match_input(const HigFormer& model, const EmbeddingStore& store, const Dataset& data,
                             const MatchRecord& match, std::size_t history_length) {
  const auto& tg = model.team_graph();
  MatchInput input;
  const auto home = tg.index_of(match.home_team_id);
  const auto away = tg.index_of(match.away_team_id);
  if (!home || !away) throw LookupError("team of match " + std::to_string(match.match_id) + " is not in the team graph");
  input.home_team = *home;
  input.away_team = *away;
  const auto width = store.width();
  auto add_side = [&](const std::vector<PlayerId>& roster, bool is_home) {
    for (auto pid : roster) {
      const auto window = player_history(data, pid, match, history_length);
      PlayerSlot slot;
      slot.player_id = pid;
      slot.home = is_home;
      const auto h = static_cast<Eigen::Index>(window.entries.size());
      slot.global.resize(h, width);
      slot.local.resize(h, width);
      slot.features.resize(h, static_cast<Eigen::Index>(kNumEventKinds));
      for (Eigen::Index r = 0; r < h; ++r) {
        const auto& rec = store.at(pid, window.entries[static_cast<std::size_t>(r)].match_id);
        slot.global.row(r) = rec.global.transpose();
        slot.local.row(r) = rec.local.transpose();
        slot.features.row(r) = rec.features.transpose();
      }
      input.players.push_back(std::move(slot));
    }
  };
  add_side(match.home_players, true);
  add_side(match.away_players, false);
  return input;
}

Stage2Result stage2_train(HigFormer& model, const EmbeddingStore& store, const Dataset& data,
                          const TrainConfig& config, const ProgressFn& progress) {
  config.validate();
  Stage2Result result;
  if (config.stage2_steps == 0) return result;
  const auto& train = data.train();
  if (train.empty()) throw TrainingError("stage 2 needs at least one training match");
  const auto& mc = model.config();
  const auto T = static_cast<std::size_t>(config.history_length);

  std::vector<MatchInput> inputs;
  std::vector<Outcome> labels;
  for (const auto& m : train) {
    inputs.push_back(build_match_input(model, store, data, m, T));
    labels.push_back(m.label);
  }

  const auto frozen = model.slots_in(player_encoder_groups());
  const auto trainable = model.slots_in(stage2_groups());
  nn::AdamConfig adam_cfg;
  adam_cfg.learning_rate = config.learning_rate;
  adam_cfg.clip_norm = config.clip_norm;
  nn::Adam adam(model.store(), trainable, adam_cfg);
  WeightedSampler sampler(labels, config.seed + 1, config.stage2_weighted_sampler);
  const auto batch = static_cast<std::size_t>(config.batch_size);

  for (int step = 0; step < config.stage2_steps; ++step) {
    const auto indices = sampler.draw(batch);
    ag::Tape tape;
    for (int s : frozen) tape.freeze_slot(s);
    const auto team_rep = mc.use_team_net
                              ? model.team_net().encode_teams(tape, model.store(), model.team_graph()).output
                              : tape.constant(Matrix::Zero(1, mc.out_dim));
    std::vector<Var> losses;
    for (auto i : indices) {
      const auto out = model.match_net().forward(tape, model.store(), model.player_net(), inputs[i], team_rep);
      if (mc.loss_mode == LossMode::kCrossEntropy) {
        const auto logp = ag::log_softmax_rows(out.logits);
        losses.push_back(ag::scale(ag::slice_cols(logp, static_cast<Eigen::Index>(labels[i]), 1), -1.0));
      } else {
        const auto target = tape.constant(Matrix::Constant(1, 1, outcome_to_target(labels[i])));
        losses.push_back(ag::square(ag::sub(out.y_hat, target)));
      }
    }
    const auto loss = ag::scale(ag::sum(ag::vconcat(losses)), 1.0 / static_cast<double>(batch));
    const double value = loss.value()(0, 0);
    if (!std::isfinite(value)) {
      throw TrainingError("stage 2 diverged at step " + std::to_string(step) + " (non-finite loss)");
    }
    tape.backward(loss);
    nn::Gradients grads(model.store().size());
    grads.add_from(tape);
    result.frozen_grad_norm.push_back(grads.norm_of(frozen));
    adam.step(model.store(), grads);
    result.loss.push_back(value);
    ++result.steps;
    if (progress) progress("stage2", step, value);
  }
  result.sampler_state = sampler.rng_state();
  return result;
}

MatchPrediction predict_match(const HigFormer& model, const Matrix& team_representation, const MatchInput& input) {
  ag::Tape tape;
  const auto rep = tape.constant(team_representation);
  const auto out = model.match_net().forward(tape, model.store(), model.player_net(), input, rep);
  return to_prediction(out, model.config());
}

std::vector<MatchPrediction> predict_matches(const HigFormer& model, const EmbeddingStore& store,
                                             const Dataset& data, std::span<const MatchRecord> matches,
                                             std::size_t history_length) {
  const auto rep = model.team_representation();
  std::vector<MatchPrediction> out;
  out.reserve(matches.size());
  for (const auto& m : matches) {
    out.push_back(predict_match(model, rep, build_match_input(model, store, data, m, history_length)));
  }
  return out;
}

}  // namespace higformer
