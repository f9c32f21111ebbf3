// Runs each acceptance criterion once and prints one PASS/FAIL line per
// criterion. Exit status is nonzero if any criterion fails.

#include <algorithm>
#include <bit>
#include <chrono>
#include <ctime>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dydiff/checkpoint.hpp"
#include "dydiff/cli.hpp"
#include "dydiff/eval.hpp"
#include "dydiff/synthgen.hpp"
#include "dydiff/training.hpp"
#include "fixtures.hpp"
#include "oracle/scalar_model.hpp"

using namespace dydiff;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Process CPU time; unaffected by time spent descheduled.
double cpu_seconds() {
  timespec ts{};
  clock_gettime(CLOCK_PROCESS_CPUTIME_ID, &ts);
  return static_cast<double>(ts.tv_sec) + 1e-9 * static_cast<double>(ts.tv_nsec);
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failures without stopping at the first one.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      if (failures_.size() < 5) failures_.push_back(what);
    }
  }
  Outcome done(const std::string& summary) const {
    std::string d = summary;
    for (const auto& f : failures_) d += "; " + f;
    return {pass_, d};
  }

 private:
  bool pass_ = true;
  std::vector<std::string> failures_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

Tensor random_tensor(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Tensor t(r, c);
  for (double& v : t.values()) v = u(rng);
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1. Gradient correctness

Outcome gradients() {
  const auto t0 = Clock::now();
  Check check;
  const double h = 1e-5, tol = 1e-4;
  std::mt19937_64 rng(21);
  auto report = [&](const std::string& name, const GradCheckReport& r, double t) {
    check.expect(r.pass && r.max_rel_error <= t, name + " rel err " + fmt(r.max_rel_error) + " at " + r.worst);
  };

  {
    EncoderParams p = EncoderParams::init(3, rng);
    const auto op = build_operator(SocialGraph(5, {{0, 1}, {1, 2}, {2, 0}, {3, 1}, {4, 3}}));
    Parameter hp("h", random_tensor(5, 3, rng));
    const Tensor x = random_tensor(5, 3, rng), w = random_tensor(5, 3, rng);
    auto params = p.all();
    params.push_back(&hp);
    report("gru_step", grad_check(
                           [&](Tape& t) {
                             const auto v = EncoderVars::bind(t, p);
                             return sum(hadamard(gru_step(t.leaf(hp), t.constant(x), op, v, 1), t.constant(w)));
                           },
                           params, h, tol), tol);
  }
  {
    Parameter mu("mu", random_tensor(5, 3, rng)), sigma("sigma", Tensor(5, 3, 0.6));
    for (double& v : sigma.mutable_value().values()) v += 0.5 * std::abs(std::normal_distribution<double>()(rng));
    report("kl_to_prior", grad_check([&](Tape& t) { return kl_to_prior(t.leaf(mu), t.leaf(sigma)); },
                                     std::vector<Parameter*>{&mu, &sigma}, h, tol), tol);
  }

  DecoderParams dp = DecoderParams::init(4, rng);
  Parameter z("z", random_tensor(5, 4, rng)), content("content", random_tensor(1, 4, rng));
  const Tensor w5 = random_tensor(5, 4, rng), w3 = random_tensor(3, 4, rng);
  {
    auto params = dp.all(false);
    params.push_back(&z);
    report("project", grad_check(
                          [&](Tape& t) {
                            const auto v = DecoderVars::bind(t, dp, false);
                            const Projections pr = project(t.leaf(z), v);
                            return add(sum(hadamard(pr.senders, t.constant(w5))), sum(hadamard(pr.receivers, t.leaf(z))));
                          },
                          params, h, tol), tol);
  }
  Parameter s("s", random_tensor(3, 4, rng)), r("r", random_tensor(3, 4, rng)), c("c", random_tensor(1, 4, rng));
  report("self_attention", grad_check([&](Tape& t) { return sum(hadamard(self_attention(t.leaf(s), t.leaf(r)), t.constant(w3))); },
                                      std::vector<Parameter*>{&s, &r}, h, tol), tol);
  report("hetero_attention",
         grad_check([&](Tape& t) { return sum(hadamard(hetero_attention(t.leaf(c), t.leaf(s)).o, t.leaf(c))); },
                    std::vector<Parameter*>{&c, &s}, h, tol), tol);
  report("likelihood", grad_check([&](Tape& t) { return sum(hadamard(likelihood(t.leaf(c), t.leaf(r)), t.constant(Tensor(3, 1, 0.7)))); },
                                  std::vector<Parameter*>{&c, &r}, h, tol), tol);
  {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Parameter scores("scores", Tensor(8, 1));
    for (double& v : scores.mutable_value().values()) v = u(rng);
    report("warp_loss", grad_check([&](Tape& t) { return warp_loss(t.leaf(scores), 3, 0.3); },
                                   std::vector<Parameter*>{&scores}, h, tol), tol);
  }
  {
    const Corpus corpus = fixtures::tiny_corpus(4);
    for (const std::string ab : {"none", "static-encoder", "tied"}) {
      Model m(ModelConfig{4, 1, Ablations::parse(ab)}, 3);
      ObjectiveConfig cfg;
      cfg.neg_pool_size = 3;
      const ModelContext ctx(corpus, m.config());
      const auto tcs = training_cascades(corpus, cfg.train_seed_pct);
      const EpochDraws draws = draw_epoch(corpus, m.config(), tcs, cfg.neg_pool_size, 5);
      report("total_objective[" + ab + "]",
             grad_check([&](Tape& t) { return objective(t, m, ctx, tcs, cfg, draws).total; }, m.parameters(), h, 1e-3),
             1e-3);
    }
  }
  const double secs = seconds_since(t0);
  check.expect(secs < 60.0, "runtime " + fmt(secs) + " s");
  return check.done("8 components, " + fmt(secs) + " s");
}

// 2. Closed forms

Outcome closed_forms() {
  Check check;
  Tape tape;
  const double kl = kl_to_prior(tape.constant(Tensor(3, 4, 0.0)), tape.constant(Tensor(3, 4, 1.0))).item();
  check.expect(std::abs(kl) <= 1e-12, "KL(0,1) = " + fmt(kl));

  std::mt19937_64 rng(22);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor a = random_tensor(1 + trial % 6, 5, rng, 20.0);
    const Tensor sm = row_softmax(tape.constant(a)).value();
    for (Index i = 0; i < sm.rows(); ++i) {
      double total = 0.0;
      for (double v : sm.row(i)) total += v;
      worst = std::max(worst, std::abs(total - 1.0));
    }
  }
  check.expect(worst <= 1e-9, "softmax row sum off by " + fmt(worst));

  const auto pe = positional_encoding(1, 4);
  const double expect_pe[4] = {std::sin(1.0), std::cos(1.0), std::sin(1.0 / 100.0), std::cos(1.0 / 100.0)};
  for (int i = 0; i < 4; ++i) check.expect(std::abs(pe[i] - expect_pe[i]) <= 1e-9, "PE(1)[" + std::to_string(i) + "]");

  const double w1 = warp_loss(std::vector<double>{0.6}, std::vector<double>{0.5}, 0.5);
  const double w2 = warp_loss(std::vector<double>{0.3}, std::vector<double>{0.6, 0.1}, 0.2);
  check.expect(std::abs(w1 - 0.4) <= 1e-12, "WARP 0.4 case = " + fmt(w1));
  check.expect(std::abs(w2 - 0.375) <= 1e-12, "WARP 0.375 case = " + fmt(w2));
  return check.done("KL " + fmt(kl) + ", softmax " + fmt(worst) + ", WARP " + fmt(w1) + "/" + fmt(w2));
}

// 3. Oracle equivalence

Outcome oracle_equivalence() {
  Check check;
  std::mt19937_64 rng(23);
  const std::vector<std::string> ablations = {"none", "static-encoder", "remove-conv", "remove-first-attention",
                                              "remove-second-attention", "tied", "deterministic-ae"};
  int instances = 0, rankings = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 140; ++trial) {
    const Corpus corpus = trial == 0 ? fixtures::tiny_corpus(4) : fixtures::random_corpus(rng, 10, 3, 4);
    const std::string& ab = ablations[trial % ablations.size()];
    const int layers = 1 + (trial / static_cast<int>(ablations.size())) % 2;
    Model m(ModelConfig{4, layers, Ablations::parse(ab)}, 100 + trial);
    ObjectiveConfig cfg;
    cfg.neg_pool_size = 1 + trial % 5;
    const ModelContext ctx(corpus, m.config());
    const auto tcs = training_cascades(corpus, cfg.train_seed_pct);
    if (!tcs.empty()) {
      const EpochDraws draws = draw_epoch(corpus, m.config(), tcs, cfg.neg_pool_size, 200 + trial);
      Tape tape;
      const double got = objective(tape, m, ctx, tcs, cfg, draws).total.item();
      const double want = oracle::objective(m, corpus, cfg, draws.eps, draws.negatives).total;
      const double rel = std::abs(got - want) / std::max(1.0, std::abs(want));
      worst = std::max(worst, rel);
      check.expect(rel <= 1e-9, ab + " objective " + fmt(got) + " vs " + fmt(want));
      ++instances;
    }

    // Brute-force score-and-sort against rank_candidates.
    const StepState state = infer_step(m, ctx, 1);
    const auto& casc = corpus.cascades.back();
    std::vector<UserId> prefix = casc.user_ids();
    prefix.resize(1 + trial % prefix.size() / 2);
    const Tensor o = represent(m, state, prefix, casc.content_vec);
    std::vector<std::pair<double, UserId>> brute;
    for (UserId u = 0; u < corpus.n_users(); ++u) {
      if (std::find(prefix.begin(), prefix.end(), u) != prefix.end()) continue;
      double logit = 0.0;
      for (Index k = 0; k < o.size(); ++k) logit += o[k] * state.receivers(u, k);
      brute.emplace_back(logit, u);
    }
    std::sort(brute.begin(), brute.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    const auto ranked = rank_candidates(o, state.receivers, prefix);
    bool same = ranked.size() == brute.size();
    for (Index i = 0; same && i < brute.size(); ++i) same = ranked[i].user == brute[i].second;
    check.expect(same, "rank_candidates order differs on trial " + std::to_string(trial));
    ++rankings;
  }
  return check.done(std::to_string(instances) + " objectives (worst rel " + fmt(worst) + "), " +
                    std::to_string(rankings) + " rankings");
}

// 4. Causality and exclusion

Outcome causality_and_exclusion() {
  Check check;
  std::mt19937_64 rng(24);
  for (int trial = 0; trial < 50; ++trial) {
    const Index k = 2 + trial % 9, d = 2 * (1 + trial % 4);
    const Tensor s = random_tensor(k, d, rng), r = random_tensor(k, d, rng);
    Tape tape;
    const Tensor base = self_attention(tape.constant(s), tape.constant(r)).value();
    const Index cut = 1 + trial % (k - 1);
    Tensor s2 = s, r2 = r;
    for (Index i = cut; i < k; ++i) {
      for (Index c = 0; c < d; ++c) {
        s2(i, c) = std::normal_distribution<double>(0.0, 5.0)(rng);
        r2(i, c) = std::normal_distribution<double>(0.0, 5.0)(rng);
      }
    }
    const Tensor moved = self_attention(tape.constant(s2), tape.constant(r2)).value();
    bool same = true;
    for (Index i = 0; i < cut; ++i) {
      for (Index c = 0; c < d; ++c) same &= std::bit_cast<std::uint64_t>(base(i, c)) == std::bit_cast<std::uint64_t>(moved(i, c));
    }
    check.expect(same, "prefix row changed on trial " + std::to_string(trial));
  }

  GenConfig g;
  g.n_users = 200;
  g.seed = 5;
  const Corpus corpus = synth_to_corpus(gen_corpus(g), CorpusConfig{});
  Model m(ModelConfig{128, 1, {}}, 5);
  ModelRanker model(m, corpus);
  RandomRanker random(5);
  PopularityRanker popularity(corpus);
  OracleRanker oracle;
  Index rankings = 0;
  for (Ranker* ranker : std::initializer_list<Ranker*>{&model, &random, &popularity, &oracle}) {
    for (double pct : {0.0, 0.1, 0.25, 0.5}) {
      for (Index i : corpus.test) {
        const auto ids = corpus.cascades[i].user_ids();
        const SeedSplit split = seed_split(ids, pct);
        if (split.observed.size() >= corpus.n_users()) continue;
        const auto ranked = ranker->rank(corpus, i, split.observed);
        for (UserId u : split.observed) {
          check.expect(std::find(ranked.begin(), ranked.end(), u) == ranked.end(),
                       "seed user " + std::to_string(u) + " ranked for " + corpus.cascades[i].id);
        }
        check.expect(ranked.size() + split.observed.size() == corpus.n_users(), "ranking is not the full complement");
        ++rankings;
      }
    }
  }
  return check.done("50 suffix perturbations, " + std::to_string(rankings) + " rankings");
}

// 5. Random-baseline magnitude

Outcome random_magnitude() {
  Check check;
  GenConfig g;
  g.n_users = 5000;
  g.seed = 25;
  const Corpus corpus = synth_to_corpus(gen_corpus(g), CorpusConfig{});
  const std::vector<Index> ks = {100};
  double total = 0.0, lo = 1.0, hi = 0.0;
  const int trials = 200;
  for (int trial = 0; trial < trials; ++trial) {
    RandomRanker ranker(static_cast<std::uint64_t>(trial));
    const double r = evaluate(ranker, corpus, 0.5, ks).recall_at.at(100);
    total += r;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  const double mean = total / trials;
  check.expect(mean >= 0.015 && mean <= 0.025, "mean Recall@100 " + fmt(mean));
  return check.done("N=" + std::to_string(corpus.n_users()) + ", mean Recall@100 " + fmt(mean) + " over " +
                    std::to_string(trials) + " trials (range " + fmt(lo) + ".." + fmt(hi) + ")");
}

// 6 and 7. Planted signal and ablations

// Optimizer settings for the synthetic experiments (chosen on seeds 1-3 of
// the default corpus).
constexpr double kLearningRate = 0.01;
constexpr int kEpochs = 80;

struct SeedResult {
  double random = 0.0;
  double popularity = 0.0;
  std::map<std::string, double> recall_half;  // ablation -> Recall@100 at seed_pct 0.5
  std::map<std::string, double> recall_zero;  // ablation -> Recall@100 at seed_pct 0
  double full_seconds = 0.0;
};

std::vector<SeedResult> synthetic_runs() {
  const std::vector<Index> ks = {100};
  std::vector<SeedResult> out;
  for (std::uint64_t seed : {1, 2, 3}) {
    SeedResult res;
    const auto t0 = Clock::now();
    GenConfig g;
    g.seed = seed;
    const Corpus corpus = synth_to_corpus(gen_corpus(g), CorpusConfig{});
    RandomRanker random(seed);
    PopularityRanker popularity(corpus);
    res.random = evaluate(random, corpus, 0.5, ks).recall_at.at(100);
    res.popularity = evaluate(popularity, corpus, 0.5, ks).recall_at.at(100);
    const double setup = seconds_since(t0);
    for (const std::string ab : {"none", "static-encoder", "remove-conv", "remove-second-attention"}) {
      const auto t1 = Clock::now();
      Model m(ModelConfig{128, 1, Ablations::parse(ab)}, seed);
      ObjectiveConfig oc;
      oc.optimizer = Optimizer::kAdam;
      oc.lr = kLearningRate;
      oc.epochs = kEpochs;
      oc.patience = 0;
      oc.seed = seed;
      train(m, corpus, oc);
      ModelRanker ranker(m, corpus);
      res.recall_half[ab] = evaluate(ranker, corpus, 0.5, ks).recall_at.at(100);
      res.recall_zero[ab] = evaluate(ranker, corpus, 0.0, ks).recall_at.at(100);
      if (ab == "none") res.full_seconds = setup + seconds_since(t1);
      std::cerr << "  seed " << seed << " " << ab << ": Recall@100 " << fmt(res.recall_half[ab]) << " (seed_pct 0.5), "
                << fmt(res.recall_zero[ab]) << " (seed_pct 0), " << fmt(seconds_since(t1)) << " s\n";
    }
    std::cerr << "  seed " << seed << " random " << fmt(res.random) << " popularity " << fmt(res.popularity) << "\n";
    out.push_back(std::move(res));
  }
  return out;
}

double mean_of(const std::vector<SeedResult>& runs, const std::function<double(const SeedResult&)>& f) {
  double s = 0.0;
  for (const auto& r : runs) s += f(r);
  return s / static_cast<double>(runs.size());
}

Outcome planted_signal(const std::vector<SeedResult>& runs) {
  Check check;
  const double full = mean_of(runs, [](const SeedResult& r) { return r.recall_half.at("none"); });
  const double random = mean_of(runs, [](const SeedResult& r) { return r.random; });
  const double pop = mean_of(runs, [](const SeedResult& r) { return r.popularity; });
  double secs = 0.0;
  for (const auto& r : runs) secs += r.full_seconds;
  check.expect(full >= 5.0 * random, "full " + fmt(full) + " < 5 x random " + fmt(random));
  check.expect(full >= 1.5 * pop, "full " + fmt(full) + " < 1.5 x popularity " + fmt(pop));
  check.expect(secs < 600.0, "full-model train+eval " + fmt(secs) + " s");
  return check.done("Recall@100 full " + fmt(full) + ", random " + fmt(random) + " (" + fmt(full / random) +
                    "x), popularity " + fmt(pop) + " (" + fmt(full / pop) + "x), " + fmt(secs) + " s");
}

Outcome ablation_direction(const std::vector<SeedResult>& runs) {
  Check check;
  auto half = [&](const std::string& ab) {
    return mean_of(runs, [&](const SeedResult& r) { return r.recall_half.at(ab); });
  };
  auto zero = [&](const std::string& ab) {
    return mean_of(runs, [&](const SeedResult& r) { return r.recall_zero.at(ab); });
  };
  const double full = half("none"), stat = half("static-encoder"), conv = half("remove-conv");
  const double full0 = zero("none"), second0 = zero("remove-second-attention");
  check.expect(full >= stat, "full " + fmt(full) + " < static-encoder " + fmt(stat));
  check.expect(full >= conv, "full " + fmt(full) + " < remove-conv " + fmt(conv));
  check.expect(full0 > second0, "seed_pct 0: full " + fmt(full0) + " <= remove-second-attention " + fmt(second0));
  return check.done("full " + fmt(full) + " vs static " + fmt(stat) + ", remove-conv " + fmt(conv) +
                    "; seed_pct 0: full " + fmt(full0) + " vs remove-second-attention " + fmt(second0));
}

// 8. Determinism

Outcome determinism() {
  Check check;
  const fs::path root = fs::temp_directory_path() / "dydiff_acceptance_determinism";
  fs::remove_all(root);
  auto run_pipeline = [&](const std::string& name) {
    const fs::path dir = root / name;
    std::ostringstream out, err;
    RunConfig gen;
    for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{
             {"n_users", "150"}, {"T", "4"}, {"cascades_per_step", "20"}, {"seed", "8"}, {"out", (dir / "corpus").string()}}) {
      gen.set(k, v);
    }
    check.expect(cli::gen_synth(gen, out, err) == 0, name + " gen-synth: " + err.str());
    RunConfig train = gen;
    train.set("data", (dir / "corpus").string());
    train.set("d", "16");
    train.set("epochs", "6");
    train.set("out", (dir / "train").string());
    check.expect(cli::train(train, out, err) == 0, name + " train: " + err.str());
    RunConfig ev = train;
    ev.set("checkpoint", (dir / "train" / "checkpoint.jsonl").string());
    ev.set("seed_pcts", "0,0.5");
    ev.set("out", (dir / "eval").string());
    check.expect(cli::eval(ev, out, err) == 0, name + " eval: " + err.str());
  };
  run_pipeline("a");
  run_pipeline("b");
  Index compared = 0;
  for (const char* f : {"corpus/edges.tsv", "corpus/cascades.jsonl", "corpus/ground_truth.json", "corpus/gen_config.json",
                        "train/losses.tsv", "train/checkpoint.jsonl", "eval/report_seed0.00.json",
                        "eval/report_seed0.50.json"}) {
    const fs::path a = root / "a" / f, b = root / "b" / f;
    check.expect(fs::exists(a) && fs::exists(b), std::string("missing ") + f);
    check.expect(slurp(a) == slurp(b), std::string(f) + " differs");
    ++compared;
  }
  return check.done(std::to_string(compared) + " artifacts byte-identical across two runs");
}

// 9. Complexity and throughput

Outcome complexity() {
  Check check;
  const Index d = 128, n = 5000;
  std::mt19937_64 rng(29);
  Model m(ModelConfig{d, 1, {}}, 29);
  StepState state;
  state.z = random_tensor(n, d, rng, 0.1);
  state.senders = random_tensor(n, d, rng, 0.1);
  state.receivers = random_tensor(n, d, rng, 0.1);
  const std::vector<double> content(d, 1.0 / std::sqrt(static_cast<double>(d)));
  std::vector<UserId> users(n);
  std::iota(users.begin(), users.end(), UserId{0});
  std::shuffle(users.begin(), users.end(), rng);

  // Decoder forward CPU time at prefix length k: the two lengths are timed in
  // alternation and each keeps its fastest batch. Only the prefix rows enter
  // the tape.
  const DecoderOptions opts = m.decoder_options();
  struct Lengthed {
    Index k;
    Tensor sk, rk;
    std::vector<UserId> prefix;
    double best = 1e300;
  };
  std::vector<Lengthed> lens;
  for (Index k : {50, 100}) {
    Lengthed l{k, random_tensor(k, d, rng, 0.1), random_tensor(k, d, rng, 0.1), std::vector<UserId>(k)};
    std::iota(l.prefix.begin(), l.prefix.end(), UserId{0});
    lens.push_back(std::move(l));
  }
  const Tensor vc = random_tensor(1, d, rng, 0.1);
  double sink = 0.0;
  for (int rep = 0; rep < 150; ++rep) {
    for (Lengthed& l : lens) {
      const double c0 = cpu_seconds();
      for (int inner = 0; inner < 10; ++inner) {
        Tape tape;
        const Projections proj{tape.constant(l.sk), tape.constant(l.rk)};
        sink += cascade_representation(proj, l.prefix, tape.constant(vc), opts).value()[0];
      }
      l.best = std::min(l.best, (cpu_seconds() - c0) / 10.0);
    }
  }
  if (sink == 42.0) std::cerr << "";
  const double t50 = lens[0].best, t100 = lens[1].best;
  const double ratio = t100 / t50;
  check.expect(ratio >= 3.5 && ratio <= 4.5, "K=100/K=50 time ratio " + fmt(ratio));

  const std::vector<UserId> prefix(users.begin(), users.begin() + 100);
  const auto t0 = Clock::now();
  const auto ranked = predict(m, state, prefix, content);
  const double score_secs = seconds_since(t0);
  check.expect(ranked.size() == n - 100, "scored " + std::to_string(ranked.size()) + " candidates");
  check.expect(score_secs < 1.0, "scoring took " + fmt(score_secs) + " s");
  return check.done("ratio " + fmt(ratio) + " (" + fmt(t50 * 1000) + " ms vs " + fmt(t100 * 1000) + " ms per call), " +
                    std::to_string(ranked.size()) + " candidates in " + fmt(score_secs * 1000) + " ms");
}

}  // namespace

// With arguments, runs only the listed criterion numbers.
int main(int argc, char** argv) {
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
  auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  int failed = 0;
  auto run = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    if (!wanted(id)) return;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail << " ["
              << fmt(seconds_since(t0)) << " s]" << std::endl;
  };
  run(1, "gradient correctness", gradients);
  run(2, "closed forms", closed_forms);
  run(3, "oracle equivalence", oracle_equivalence);
  run(4, "causality and exclusion", causality_and_exclusion);
  run(5, "random-baseline magnitude", random_magnitude);
  run(8, "determinism", determinism);
  run(9, "complexity and throughput", complexity);

  std::vector<SeedResult> runs;
  std::string run_error;
  try {
    if (wanted(6) || wanted(7)) runs = synthetic_runs();
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto with_runs = [&](const std::function<Outcome(const std::vector<SeedResult>&)>& fn) {
    return [&, fn]() { return run_error.empty() ? fn(runs) : Outcome{false, "exception: " + run_error}; };
  };
  run(6, "planted-signal recovery", with_runs(planted_signal));
  run(7, "ablation direction", with_runs(ablation_direction));

  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
