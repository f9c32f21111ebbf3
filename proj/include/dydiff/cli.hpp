#pragma once

// Command implementations behind the dydiff executable. Each command takes a
// resolved RunConfig and output streams and returns a process exit code:
// 0 success, 1 validation failure, 2 runtime failure.

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dydiff/checkpoint.hpp"
#include "dydiff/data.hpp"
#include "dydiff/eval.hpp"
#include "dydiff/model.hpp"
#include "dydiff/run_config.hpp"
#include "dydiff/synthgen.hpp"
#include "dydiff/training.hpp"

namespace dydiff::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kRuntime = 2 };

inline std::filesystem::path output_dir(const RunConfig& cfg, const std::string& command) {
  if (!cfg.str("out").empty()) return cfg.str("out");
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  std::ostringstream name;
  name << std::put_time(&tm, "%Y%m%d-%H%M%S") << '-' << command;
  return std::filesystem::path("runs") / name.str();
}

inline void echo_config(const RunConfig& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "resolved_config.txt");
  out << cfg.dump();
  if (!out) throw std::runtime_error("cannot write " + (dir / "resolved_config.txt").string());
}

inline std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return s.str();
}

inline Corpus load_run_corpus(const RunConfig& cfg) {
  if (cfg.str("data").empty()) throw ConfigError("missing required key 'data'");
  return load_corpus(cfg.str("data"), cfg.corpus());
}

// Maps exceptions onto exit codes.
template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntime;
  }
}

inline int gen_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const GenConfig gen = cfg.gen();  // validates before anything is written
    const auto dir = output_dir(cfg, "gen-synth");
    const SynthCorpus s = gen_corpus(gen);
    write_corpus(s, dir);
    echo_config(cfg, dir);
    out << "wrote " << s.cascades.size() << " cascades over " << gen.n_users << " users to " << dir.string() << '\n';
    return kOk;
  });
}

inline int train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ModelConfig mc = cfg.model();
    const ObjectiveConfig oc = cfg.objective();
    const Corpus corpus = load_run_corpus(cfg);
    const auto dir = output_dir(cfg, "train");
    echo_config(cfg, dir);

    Model model(mc, oc.seed);
    std::ofstream trace(dir / "losses.tsv");
    trace << "epoch\ttotal\tranking\tkl\treg_encoder\treg_decoder\n";
    const TrainResult result = dydiff::train(model, corpus, oc, [&](int epoch, const ObjectiveValue& v) {
      trace << epoch << '\t' << format_double(v.total.item()) << '\t' << format_double(v.ranking) << '\t'
            << format_double(v.kl) << '\t' << format_double(v.reg_encoder) << '\t' << format_double(v.reg_decoder)
            << '\n';
    });
    if (!trace) throw std::runtime_error("failed writing loss trace");

    nlohmann::json meta = {{"epochs_run", result.losses.size()},
                           {"converged", result.converged},
                           {"seed", oc.seed},
                           {"ablations", mc.ablations.to_string()}};
    save_checkpoint(model, meta, dir / "checkpoint.jsonl");

    out << "trained " << result.losses.size() << " epochs";
    if (!result.losses.empty()) out << ", final loss " << format_double(result.losses.back());
    out << '\n';
    if (!corpus.val.empty()) {
      ModelRanker ranker(model, corpus);
      const std::vector<Index> k10 = {10};
      const MetricReport val = evaluate(ranker, corpus, oc.train_seed_pct, k10, corpus.val);
      out << "validation MAP@10 " << format_double(val.map_at.at(10)) << '\n';
    }
    out << "checkpoint " << (dir / "checkpoint.jsonl").string() << '\n';
    return kOk;
  });
}

inline std::unique_ptr<Ranker> make_ranker(const RunConfig& cfg, const Corpus& corpus, std::optional<Model>& model) {
  const auto& kind = cfg.str("baseline");
  if (kind == "random") return std::make_unique<RandomRanker>(cfg.count("seed"));
  if (kind == "popularity") return std::make_unique<PopularityRanker>(corpus);
  if (kind == "oracle") return std::make_unique<OracleRanker>();
  if (kind != "model") throw ConfigError("baseline must be model, random, popularity or oracle");
  if (cfg.str("checkpoint").empty()) throw ConfigError("missing required key 'checkpoint'");
  model = load_checkpoint(cfg.str("checkpoint")).model;
  return std::make_unique<ModelRanker>(*model, corpus);
}

inline std::string pct_label(double pct) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << pct;
  return s.str();
}

inline int eval(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto ks = cfg.counts("ks");
    const auto pcts = cfg.reals("seed_pcts");
    std::optional<Model> model;
    const Corpus corpus = load_run_corpus(cfg);
    auto ranker = make_ranker(cfg, corpus, model);
    const auto dir = output_dir(cfg, "eval");
    echo_config(cfg, dir);
    for (double pct : pcts) {
      const MetricReport rep = evaluate(*ranker, corpus, pct, ks);
      const auto path = dir / ("report_seed" + pct_label(pct) + ".json");
      std::ofstream f(path);
      f << rep.to_json().dump(2) << '\n';
      if (!f) throw std::runtime_error("cannot write " + path.string());
      out << rep.to_json().dump() << '\n';
    }
    return kOk;
  });
}

inline std::vector<UserId> read_user_ids(std::istream& in) {
  std::vector<UserId> ids;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    long long v = -1;
    try {
      v = std::stoll(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || v < 0 || v > static_cast<long long>(UINT32_MAX)) {
      throw std::invalid_argument("invalid user id '" + tok + "'");
    }
    ids.push_back(static_cast<UserId>(v));
  }
  return ids;
}

inline int predict(const RunConfig& cfg, std::istream& in, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (cfg.str("checkpoint").empty()) throw ConfigError("missing required key 'checkpoint'");
    Checkpoint ck = load_checkpoint(cfg.str("checkpoint"));
    const Corpus corpus = load_run_corpus(cfg);

    std::vector<UserId> prefix;
    if (cfg.str("prefix") == "-") {
      prefix = read_user_ids(in);
    } else {
      std::ifstream f(cfg.str("prefix"));
      if (!f) throw std::runtime_error("cannot open prefix file " + cfg.str("prefix"));
      prefix = read_user_ids(f);
    }
    std::vector<UserId> unknown;
    for (UserId u : prefix) {
      if (u >= corpus.n_users()) unknown.push_back(u);
    }
    if (!unknown.empty()) {
      std::string list;
      for (UserId u : unknown) list += (list.empty() ? "" : ", ") + std::to_string(u);
      throw std::invalid_argument("unknown user ids: " + list);
    }

    const ModelContext ctx(corpus, ck.model.config());
    const StepState state = infer_step(ck.model, ctx, corpus.test_step());
    const auto content = embed_text(cfg.str("text"), ck.model.config().dim);
    const auto ranked = dydiff::predict(ck.model, state, prefix, content);
    const Index top = std::min<Index>(cfg.count("top"), ranked.size());
    out << "rank\tuser\tscore\n";
    for (Index r = 0; r < top; ++r) {
      out << r + 1 << '\t' << ranked[r].user << '\t' << format_double(ranked[r].score) << '\n';
    }
    return kOk;
  });
}

}  // namespace dydiff::cli
