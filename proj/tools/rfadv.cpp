#include <iostream>

#include <CLI11.hpp>

#include "rfadv/experiment/pipeline.hpp"

namespace ex = rfadv::experiment;

int main(int argc, char** argv) {
  CLI::App app{"Over-the-air adversarial attack and defense simulator for modulation classifiers"};
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool overwrite = false;
  app.add_option("--config", config, "Experiment config (INI)")->required();
  auto* out_opt = app.add_option("--out", out, "Output directory (overrides [experiment] out)");
  auto* seed_opt = app.add_option("--seed", seed, "Root seed (overrides [experiment] seed)");
  app.add_flag("--overwrite", overwrite, "Replace existing outputs");

  auto* gen = app.add_subcommand("gen-data", "Write the dataset as RFDS");
  auto* clf = app.add_subcommand("train-clf", "Train the undefended classifier");

  std::vector<std::string> attack_names, targets;
  auto* atk = app.add_subcommand("train-attack", "Craft attacks against target models");
  atk->add_option("attacks", attack_names, "Attack names (default: the sweep's)");
  atk->add_option("--target", targets, "Target models: none or a defense name (default: the sweep's)");

  std::vector<std::string> defense_names;
  auto* def = app.add_subcommand("defend", "Train defended classifiers");
  def->add_option("defenses", defense_names, "Defense names (default: the sweep's)");

  std::vector<std::string> sweep_attacks, sweep_defenses;
  auto* swp = app.add_subcommand("sweep", "Accuracy against PNR for every attack and defense");
  auto* sa = swp->add_option("--attacks", sweep_attacks, "Attack names (default: the sweep's)");
  auto* sd = swp->add_option("--defenses", sweep_defenses, "Defense names (default: the sweep's)");

  auto* plot = app.add_subcommand("plot-data", "Gnuplot blocks from sweep.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    ex::Options opt;
    if (*out_opt) opt.out = out;
    if (*seed_opt) opt.seed = seed;
    opt.overwrite = overwrite;
    ex::Experiment e(ex::load_config(config), opt);
    if (*gen) e.gen_data();
    if (*clf) e.train_clf();
    if (*atk) e.train_attacks(attack_names, targets);
    if (*def) {
      if (defense_names.empty()) {
        for (const auto& d : e.config().sweep.defenses) {
          if (d != "none") defense_names.push_back(d);
        }
      }
      e.defend(defense_names);
    }
    if (*swp) {
      std::optional<std::vector<std::string>> a, d;
      if (*sa) a = sweep_attacks;
      if (*sd) d = sweep_defenses;
      e.sweep(a, d);
    }
    if (*plot) e.plot_data();
  } catch (const rfadv::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
