#pragma once

// Full model: configuration, ablation switches, parameter ownership and the
// inputs derived once per corpus (propagation operator, per-step stimuli).

#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dydiff/data.hpp"
#include "dydiff/decoder.hpp"
#include "dydiff/encoder.hpp"
#include "dydiff/graph.hpp"

namespace dydiff {

struct Ablations {
  bool static_encoder = false;           // one graph convolution, no recurrence
  bool remove_conv = false;              // identity propagation operator
  bool remove_first_attention = false;   // sequence used without self-attention
  bool remove_second_attention = false;  // mean over the sequence, content ignored
  bool tied_projection = false;          // W_S == W_R
  bool deterministic = false;            // eps == 0 and no KL term

  static const std::vector<std::string>& names() {
    static const std::vector<std::string> n = {"static-encoder",         "remove-conv",
                                               "remove-first-attention", "remove-second-attention",
                                               "tied",                   "deterministic-ae"};
    return n;
  }

  bool& flag(const std::string& name) {
    if (name == "static-encoder") return static_encoder;
    if (name == "remove-conv") return remove_conv;
    if (name == "remove-first-attention") return remove_first_attention;
    if (name == "remove-second-attention") return remove_second_attention;
    if (name == "tied") return tied_projection;
    if (name == "deterministic-ae") return deterministic;
    throw std::invalid_argument("unknown ablation '" + name + "'");
  }

  // Comma-separated list of flag names; "" or "none" means the full model.
  static Ablations parse(const std::string& text) {
    Ablations a;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(0, item.find_first_not_of(" \t"));
      item.erase(item.find_last_not_of(" \t") + 1);
      if (item.empty() || item == "none") continue;
      a.flag(item) = true;
    }
    return a;
  }

  std::string to_string() const {
    std::string out;
    Ablations copy = *this;
    for (const auto& n : names()) {
      if (copy.flag(n)) out += (out.empty() ? "" : ",") + n;
    }
    return out.empty() ? "none" : out;
  }

  friend bool operator==(const Ablations&, const Ablations&) = default;
};

struct ModelConfig {
  Index dim = 128;
  int conv_layers = 1;
  Ablations ablations;
};

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
    if (config.dim < 2 || config.dim % 2 != 0) throw std::invalid_argument("model dimension must be even and >= 2");
    if (config.conv_layers < 1) throw std::invalid_argument("conv_layers must be >= 1");
    std::mt19937_64 rng(seed);
    encoder_ = EncoderParams::init(config.dim, rng);
    decoder_ = DecoderParams::init(config.dim, rng);
  }

  const ModelConfig& config() const { return config_; }
  EncoderParams& encoder() { return encoder_; }
  DecoderParams& decoder() { return decoder_; }

  std::vector<Parameter*> encoder_parameters() { return encoder_.all(); }
  std::vector<Parameter*> decoder_parameters() { return decoder_.all(config_.ablations.tied_projection); }

  // Every stored parameter, including an unused receiver matrix when tied.
  std::vector<Parameter*> all_parameters() {
    auto out = encoder_.all();
    for (Parameter* p : decoder_.all(false)) out.push_back(p);
    return out;
  }

  // Parameters that influence the objective.
  std::vector<Parameter*> parameters() {
    auto out = encoder_parameters();
    for (Parameter* p : decoder_parameters()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (Parameter* p : all_parameters()) p->zero_grad();
  }

  EncoderOptions encoder_options() const {
    return {config_.conv_layers, config_.ablations.static_encoder};
  }
  DecoderOptions decoder_options() const {
    return {!config_.ablations.remove_first_attention, !config_.ablations.remove_second_attention};
  }

 private:
  ModelConfig config_;
  EncoderParams encoder_;
  DecoderParams decoder_;
};

// Everything the model reads from a corpus, computed once.
struct ModelContext {
  const Corpus* corpus = nullptr;
  NormalizedOperator op;
  std::vector<Tensor> stimuli;  // stimuli[t] drives step t; stimuli[0] unused

  ModelContext(const Corpus& c, const ModelConfig& config) : corpus(&c) {
    if (c.dim != config.dim) {
      throw DimensionError("corpus embeddings have dimension " + std::to_string(c.dim) +
                           ", model expects " + std::to_string(config.dim));
    }
    op = config.ablations.remove_conv ? NormalizedOperator::identity(c.n_users()) : build_operator(c.graph);
    stimuli.emplace_back(c.n_users(), c.dim);
    for (int t = 1; t < c.n_steps; ++t) {
      stimuli.push_back(config.ablations.static_encoder ? cumulative_stimuli(c, t) : recent_stimuli(c, t));
    }
  }
};

struct BoundModel {
  EncoderVars encoder;
  DecoderVars decoder;
};

inline BoundModel bind(Tape& tape, Model& model) {
  return {EncoderVars::bind(tape, model.encoder()),
          DecoderVars::bind(tape, model.decoder(), model.config().ablations.tied_projection)};
}

// Deterministic (eps = 0) latent interests and projections at a step.
struct StepState {
  int step = 0;
  Tensor z;
  Tensor senders;
  Tensor receivers;
};

inline StepState infer_step(Model& model, const ModelContext& ctx, int step) {
  Tape tape;
  const BoundModel vars = bind(tape, model);
  std::vector<Tensor> eps(static_cast<Index>(step) + 1, Tensor(ctx.corpus->n_users(), model.config().dim));
  const Rollout r = rollout(tape, vars.encoder, ctx.op, ctx.stimuli, eps, step, model.encoder_options());
  const Var z = r.latents.back().mu;
  const Projections proj = project(z, vars.decoder);
  return {step, z.value(), proj.senders.value(), proj.receivers.value()};
}

// Cascade representation under a deterministic state.
inline Tensor represent(Model& model, const StepState& state, std::span<const UserId> prefix,
                        std::span<const double> content) {
  Tape tape;
  const DecoderVars dec = DecoderVars::bind(tape, model.decoder(), model.config().ablations.tied_projection);
  const Projections proj{tape.constant(state.senders), tape.constant(state.receivers)};
  const Var vc = project_content(tape.constant(Tensor::row_vector(content)), dec);
  return cascade_representation(proj, prefix, vc, model.decoder_options()).value();
}

inline std::vector<ScoredUser> predict(Model& model, const StepState& state, std::span<const UserId> prefix,
                                       std::span<const double> content) {
  for (UserId u : prefix) {
    if (u >= state.receivers.rows()) throw std::invalid_argument("unknown user id " + std::to_string(u));
  }
  return rank_candidates(represent(model, state, prefix, content), state.receivers, prefix);
}

}  // namespace dydiff
