#pragma once

// Flat key=value run configuration. Precedence, lowest first: built-in
// defaults, the --config file, per-key command-line flags.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dydiff/data.hpp"
#include "dydiff/model.hpp"
#include "dydiff/synthgen.hpp"
#include "dydiff/training.hpp"

namespace dydiff {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string help;
};

inline const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> keys = {
      // paths
      {"data", "", "corpus directory holding edges.tsv and cascades.jsonl"},
      {"out", "", "output directory (default: runs/<timestamp>-<command>)"},
      {"checkpoint", "", "checkpoint file to read"},
      {"prefix", "-", "predict: file with observed user ids, '-' for stdin"},
      {"text", "", "predict: cascade text used for the content vector"},
      {"top", "20", "predict: number of candidates printed"},
      // corpus
      {"T", "6", "number of time steps"},
      {"min_user_records", "10", "drop users with fewer forwards"},
      {"min_cascade_len", "10", "drop shorter cascades"},
      {"val_fraction", "0.25", "share of final-step cascades used for validation"},
      {"split_seed", "0", "seed of the validation/test split"},
      // model
      {"d", "128", "representation dimension (even)"},
      {"conv_layers", "1", "graph convolution powers per gate"},
      {"ablation", "none", "comma list: static-encoder, remove-conv, remove-first-attention, "
                           "remove-second-attention, tied, deterministic-ae"},
      // objective
      {"beta", "10", "KL weight"},
      {"lambda1", "0.5", "encoder L2 weight"},
      {"lambda2", "0.5", "decoder L2 weight"},
      {"lambda_m", "0.3", "WARP margin"},
      {"lr", "0.05", "learning rate"},
      {"optimizer", "sgd", "sgd or adam"},
      {"epochs", "200", "epoch budget"},
      {"patience", "5", "stop after this many epochs without relative improvement, 0 disables"},
      {"min_improvement", "1e-5", "relative improvement threshold"},
      {"neg_pool_size", "256", "negatives sampled per cascade and epoch"},
      {"train_seed_pct", "0.5", "observed share of training cascades"},
      {"seed", "1", "seed for initialization, noise and negatives"},
      // evaluation
      {"ks", "10,50,100", "cutoffs K"},
      {"seed_pcts", "0.5", "comma list of seed set percentages"},
      {"baseline", "model", "model, random, popularity or oracle"},
      // synthetic generator
      {"n_users", "500", "gen-synth: users"},
      {"n_communities", "4", "gen-synth: communities"},
      {"d_latent", "16", "gen-synth: latent interest dimension"},
      {"gamma", "0.8", "gen-synth: interest retention"},
      {"delta", "0.15", "gen-synth: social drift"},
      {"eta", "0.05", "gen-synth: noise drift"},
      {"cascades_per_step", "40", "gen-synth: cascades per step"},
      {"cascade_len", "15", "gen-synth: target cascade length"},
      {"avg_degree", "8", "gen-synth: expected out-degree"},
      {"intra_fraction", "0.8", "gen-synth: share of edges inside communities"},
      {"topic_noise", "0.3", "gen-synth: topic spread around the author's interest"},
      {"acceptance_sharpness", "10", "gen-synth: logistic acceptance slope"},
      {"activity_floor", "10", "gen-synth: minimum forwards per user, 0 disables"},
  };
  return keys;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_schema()) values_[k.name] = k.default_value;
  }

  static bool known(const std::string& key) {
    const auto& s = config_schema();
    return std::any_of(s.begin(), s.end(), [&](const ConfigKey& k) { return k.name == key; });
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  // Lines are "key = value"; '#' starts a comment.
  void merge_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      const auto trim = [](std::string s) {
        s.erase(0, s.find_first_not_of(" \t\r"));
        s.erase(s.find_last_not_of(" \t\r") + 1);
        return s;
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
      }
      try {
        set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
      }
    }
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double real(const std::string& key) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(str(key), &used);
      if (used != str(key).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects a number, got '" + str(key) + "'");
    }
  }

  std::int64_t integer(const std::string& key) const {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(str(key), &used);
      if (used != str(key).size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects an integer, got '" + str(key) + "'");
    }
  }

  Index count(const std::string& key) const {
    const auto v = integer(key);
    if (v < 0) throw ConfigError("config key '" + key + "' must be >= 0");
    return static_cast<Index>(v);
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' expects a comma list of numbers");
      }
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' is empty");
    return out;
  }

  std::vector<Index> counts(const std::string& key) const {
    std::vector<Index> out;
    for (double v : reals(key)) {
      if (v < 1 || v != std::floor(v)) throw ConfigError("config key '" + key + "' expects positive integers");
      out.push_back(static_cast<Index>(v));
    }
    return out;
  }

  // Sorted "key = value" lines; reloading this text reproduces the config.
  std::string dump() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  CorpusConfig corpus() const {
    CorpusConfig c;
    c.n_steps = static_cast<int>(integer("T"));
    c.min_user_records = count("min_user_records");
    c.min_cascade_len = count("min_cascade_len");
    c.val_fraction = real("val_fraction");
    c.split_seed = count("split_seed");
    c.dim = count("d");
    if (c.val_fraction < 0.0 || c.val_fraction > 1.0) throw ConfigError("val_fraction must lie in [0, 1]");
    return c;
  }

  ModelConfig model() const {
    ModelConfig m;
    m.dim = count("d");
    m.conv_layers = static_cast<int>(integer("conv_layers"));
    try {
      m.ablations = Ablations::parse(str("ablation"));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    return m;
  }

  ObjectiveConfig objective() const {
    ObjectiveConfig o;
    o.beta = real("beta");
    o.lambda1 = real("lambda1");
    o.lambda2 = real("lambda2");
    o.margin = real("lambda_m");
    o.lr = real("lr");
    o.epochs = static_cast<int>(integer("epochs"));
    o.neg_pool_size = count("neg_pool_size");
    o.seed = count("seed");
    o.train_seed_pct = real("train_seed_pct");
    o.patience = static_cast<int>(integer("patience"));
    o.min_improvement = real("min_improvement");
    const auto& opt = str("optimizer");
    if (opt == "sgd") {
      o.optimizer = Optimizer::kSgd;
    } else if (opt == "adam") {
      o.optimizer = Optimizer::kAdam;
    } else {
      throw ConfigError("optimizer must be sgd or adam, got '" + opt + "'");
    }
    for (double v : {o.beta, o.lambda1, o.lambda2, o.margin, o.lr}) {
      if (v < 0.0) throw ConfigError("beta, lambda1, lambda2, lambda_m and lr must be >= 0");
    }
    if (o.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (o.neg_pool_size < 1) throw ConfigError("neg_pool_size must be >= 1");
    if (o.patience < 0) throw ConfigError("patience must be >= 0");
    return o;
  }

  GenConfig gen() const {
    GenConfig g;
    g.n_users = count("n_users");
    g.n_communities = count("n_communities");
    g.d_latent = count("d_latent");
    g.n_steps = static_cast<int>(integer("T"));
    g.drift_retain = real("gamma");
    g.drift_social = real("delta");
    g.drift_noise = real("eta");
    g.cascades_per_step = count("cascades_per_step");
    g.cascade_len = count("cascade_len");
    g.avg_degree = real("avg_degree");
    g.intra_fraction = real("intra_fraction");
    g.topic_noise = real("topic_noise");
    g.acceptance_sharpness = real("acceptance_sharpness");
    g.min_user_records = count("activity_floor");
    g.seed = count("seed");
    g.validate();
    return g;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace dydiff
