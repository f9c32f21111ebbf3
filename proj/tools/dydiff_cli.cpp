// dydiff: generate synthetic corpora, train, evaluate and predict.

#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "dydiff/cli.hpp"

namespace {

constexpr const char* kPrecedence =
    "Settings are resolved from built-in defaults, then the --config file "
    "(key = value lines), then per-key flags; later sources win.";

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::optional<std::string>> overrides;
};

Command add_command(CLI::App& root, const std::string& name, const std::string& description) {
  Command c;
  c.app = root.add_subcommand(name, description + "\n" + kPrecedence);
  c.app->add_option("--config", c.config_path, "flat key = value configuration file");
  return c;
}

void add_overrides(Command& c) {
  for (const auto& key : dydiff::config_schema()) {
    c.overrides[key.name];
  }
  for (auto& [name, slot] : c.overrides) {
    const auto& key = *std::find_if(dydiff::config_schema().begin(), dydiff::config_schema().end(),
                                    [&](const dydiff::ConfigKey& k) { return k.name == name; });
    c.app->add_option("--" + name, slot, key.help + " [default: " + key.default_value + "]");
  }
}

dydiff::RunConfig resolve(const Command& c) {
  dydiff::RunConfig cfg;
  if (!c.config_path.empty()) cfg.merge_file(c.config_path);
  for (const auto& [name, value] : c.overrides) {
    if (value) cfg.set(name, *value);
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic-interest diffusion prediction"};
  app.require_subcommand(1);
  Command gen = add_command(app, "gen-synth", "Generate a synthetic corpus with drifting interests");
  Command train = add_command(app, "train", "Train a model and write a checkpoint and loss trace");
  Command eval = add_command(app, "eval", "Evaluate a checkpoint or baseline on the test split");
  Command predict = add_command(app, "predict", "Rank candidates for an observed cascade prefix");
  for (Command* c : {&gen, &train, &eval, &predict}) add_overrides(*c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dydiff::cli::kValidation;
  }

  try {
    if (gen.app->parsed()) return dydiff::cli::gen_synth(resolve(gen), std::cout, std::cerr);
    if (train.app->parsed()) return dydiff::cli::train(resolve(train), std::cout, std::cerr);
    if (eval.app->parsed()) return dydiff::cli::eval(resolve(eval), std::cout, std::cerr);
    if (predict.app->parsed()) return dydiff::cli::predict(resolve(predict), std::cin, std::cout, std::cerr);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return dydiff::cli::kValidation;
  }
  return dydiff::cli::kValidation;
}
