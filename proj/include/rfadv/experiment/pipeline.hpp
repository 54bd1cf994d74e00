#pragma once

// Commands behind the CLI. Output layout under the experiment directory:
//   dataset.rfds, dataset.info
//   models/<target>.rfnn, .history.csv, .report.txt (target "none" is the undefended classifier)
//   attacks/<attack>/<target>/seed<N>.rfat and seed<N>.csv (generator telemetry)
//   sweep.csv, plot.dat
// Text outputs start with "# rfadv config=<hash> seed=<root>"; binary ones
// carry the same pair in their metadata.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <thread>

#include "rfadv/attacks/fgm.hpp"
#include "rfadv/attacks/gan.hpp"
#include "rfadv/attacks/mrpp.hpp"
#include "rfadv/classifier/evaluate.hpp"
#include "rfadv/defenses/adversarial.hpp"
#include "rfadv/defenses/smoothing.hpp"
#include "rfadv/experiment/config.hpp"
#include "rfadv/nn/serialize.hpp"
#include "rfadv/signal/dataset.hpp"
#include "rfadv/signal/synth.hpp"

namespace rfadv::experiment {

namespace fs = std::filesystem;

/// Worker count: RF_ADVSIM_THREADS when set, else the hardware concurrency.
inline std::size_t worker_count() {
  if (const char* v = std::getenv("RF_ADVSIM_THREADS"); v && *v) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1) throw ConfigError(std::string("RF_ADVSIM_THREADS must be a positive integer, got '") + v + "'");
    return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs job(i) for i in [0, n) on up to `threads` workers. The exception of
/// the lowest failing index is rethrown.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t t = std::min(std::max<std::size_t>(threads, 1), n);
  if (t <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < t; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

struct Options {
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  bool overwrite = false;
  std::size_t threads = 0;  // 0: worker_count()
  std::ostream* log = &std::cerr;
};

struct Splits {
  LabeledDataset train, validation, test;
};

struct SweepRow {
  std::string attack, defense;
  double pnr_db = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::size_t frames = 0;
};

inline std::string format_number(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

inline std::string sweep_csv_body(const std::vector<SweepRow>& rows) {
  std::string out = "attack,defense,pnr_db,seed,accuracy,frames\n";
  char acc[32];
  for (const auto& r : rows) {
    std::snprintf(acc, sizeof acc, "%.6f", r.accuracy);
    out += r.attack + "," + r.defense + "," + format_number(r.pnr_db) + "," + std::to_string(r.seed) + "," + acc + "," +
           std::to_string(r.frames) + "\n";
  }
  return out;
}

/// Parses a sweep CSV (comment lines skipped).
inline std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
  std::istringstream in(text);
  std::vector<SweepRow> rows;
  bool header = false;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      if (line != "attack,defense,pnr_db,seed,accuracy,frames") throw FormatError("sweep CSV has an unexpected header");
      header = true;
      continue;
    }
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) f.push_back(cell);
    if (f.size() != 6) throw FormatError("sweep CSV row has " + std::to_string(f.size()) + " fields: " + line);
    try {
      rows.push_back({f[0], f[1], std::stod(f[2]), std::stoull(f[3]), std::stod(f[4]), std::stoull(f[5])});
    } catch (const std::exception&) {
      throw FormatError("malformed sweep CSV row: " + line);
    }
  }
  if (!header) throw FormatError("sweep CSV has no header");
  return rows;
}

inline double median(std::vector<double> v) {
  if (v.empty()) throw ConfigError("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Median accuracy over seeds for one (attack, defense, pnr) cell.
inline double median_accuracy(const std::vector<SweepRow>& rows, const std::string& attack, const std::string& defense,
                              double pnr_db) {
  std::vector<double> v;
  for (const auto& r : rows) {
    if (r.attack == attack && r.defense == defense && r.pnr_db == pnr_db) v.push_back(r.accuracy);
  }
  if (v.empty()) {
    throw ConfigError("no sweep rows for attack " + attack + ", defense " + defense + " at " + format_number(pnr_db) + " dB");
  }
  return median(std::move(v));
}

/// Gnuplot layout: one index block per defense, median accuracy over seeds,
/// columns pnr_db then one per attack.
inline std::string plot_data_body(const std::vector<SweepRow>& rows) {
  std::vector<std::string> defenses, attacks;
  std::vector<double> pnrs;
  auto remember = [](auto& list, const auto& v) {
    if (std::find(list.begin(), list.end(), v) == list.end()) list.push_back(v);
  };
  for (const auto& r : rows) {
    remember(defenses, r.defense);
    remember(attacks, r.attack);
    remember(pnrs, r.pnr_db);
  }
  std::string out;
  char buf[32];
  for (std::size_t d = 0; d < defenses.size(); ++d) {
    if (d) out += "\n\n";
    out += "# defense " + defenses[d] + "\n# pnr_db";
    for (const auto& a : attacks) out += " " + a;
    out += "\n";
    for (double pnr : pnrs) {
      out += format_number(pnr);
      for (const auto& a : attacks) {
        bool any = false;
        for (const auto& r : rows) any = any || (r.attack == a && r.defense == defenses[d] && r.pnr_db == pnr);
        if (any) {
          std::snprintf(buf, sizeof buf, " %.6f", median_accuracy(rows, a, defenses[d], pnr));
          out += buf;
        } else {
          out += " NaN";
        }
      }
      out += "\n";
    }
  }
  return out;
}

class Experiment {
 public:
  Experiment(ExperimentConfig cfg, Options opt = {}) : cfg_(std::move(cfg)), opt_(std::move(opt)) {
    if (opt_.seed) cfg_.seed = *opt_.seed;
    out_ = opt_.out ? *opt_.out : cfg_.out;
  }

  const ExperimentConfig& config() const noexcept { return cfg_; }
  const fs::path& out() const noexcept { return out_; }
  std::uint64_t root_seed() const noexcept { return cfg_.seed; }

  std::string header() const { return "# rfadv config=" + cfg_.hash_hex() + " seed=" + std::to_string(cfg_.seed) + "\n"; }

  fs::path dataset_path() const { return out_ / "dataset.rfds"; }
  fs::path model_path(const std::string& target) const { return out_ / "models" / (target + ".rfnn"); }
  fs::path attack_path(const std::string& attack, const std::string& target, std::uint64_t seed) const {
    return out_ / "attacks" / attack / target / ("seed" + std::to_string(seed) + ".rfat");
  }
  fs::path sweep_path() const { return out_ / "sweep.csv"; }
  fs::path plot_path() const { return out_ / "plot.dat"; }

  // -------------------------------------------------------------------------
  // Dataset

  void gen_data() {
    const auto& d = cfg_.dataset;
    guard(dataset_path());
    LabeledDataset ds = [&] {
      if (d.source == "portable") {
        if (!fs::exists(d.path)) throw ConfigError("portable dataset " + d.path.string() + " does not exist");
        return load_portable(d.path, d.snr_filter);
      }
      auto spec = d.synth;
      spec.seed = derive_seed(cfg_.seed, "dataset");
      return signal::synthesize(spec);
    }();
    if (ds.empty()) throw ConfigError("dataset is empty after filtering");
    fs::create_directories(out_);
    save_portable(ds, dataset_path());
    write_text(out_ / "dataset.info", "frames=" + std::to_string(ds.size()) + "\nsamples=" +
                                          std::to_string(ds.samples_per_frame()) + "\nclasses=" + join(ds.class_names()) +
                                          "\nsnr_db=" + format_number(ds.snr_db()) + "\n");
    log("gen-data: " + std::to_string(ds.size()) + " frames -> " + dataset_path().string());
  }

  Splits splits() const {
    if (!fs::exists(dataset_path())) {
      throw ConfigError("dataset " + dataset_path().string() + " is missing; run gen-data first");
    }
    const auto ds = load_portable(dataset_path());
    auto [train, rest] = split(ds, cfg_.dataset.train_fraction, derive_seed(cfg_.seed, "split"));
    Splits s{std::move(train), {}, std::move(rest)};
    if (cfg_.dataset.validation_fraction > 0.0) {
      auto [val, test] = split(s.test, cfg_.dataset.validation_fraction, derive_seed(cfg_.seed, "validation-split"));
      s.validation = std::move(val);
      s.test = std::move(test);
    }
    return s;
  }

  double noise_power(const LabeledDataset& ds) const {
    if (cfg_.noise_power) return *cfg_.noise_power;
    if (!std::isfinite(ds.snr_db())) throw ConfigError("dataset is noiseless; set [noise] noise_power");
    return channel::noise_power_for_snr(ds.snr_db());
  }

  classifier::ClassifierConfig classifier_config() const {
    auto c = cfg_.classifier;
    c.seed = derive_seed(cfg_.seed, "classifier");
    return c;
  }

  // -------------------------------------------------------------------------
  // Classifier and defenses

  void train_clf() {
    guard(model_path("none"));
    const auto s = splits();
    const auto ccfg = classifier_config();
    auto res = classifier::train(classifier::build(ccfg, s.train.samples_per_frame(), s.train.num_classes()), s.train, ccfg,
                                 validation(s));
    stamp(res.net.metadata());
    res.net.metadata()["classifier_seed"] = std::to_string(ccfg.seed);
    save_model("none", res.net, res.history);
    const double acc = classifier::accuracy(res.net, s.test);
    write_text(report_path("none"), "clean_accuracy=" + fixed(acc) + "\nbest_epoch=" + std::to_string(res.best_epoch) + "\n");
    log("train-clf: clean accuracy " + fixed(acc) + " (classifier seed " + std::to_string(ccfg.seed) + ")");
  }

  void defend(const std::vector<std::string>& names) {
    for (const auto& n : names) cfg_.defense(n);  // unknown names fail before any work
    for (const auto& n : names) guard(model_path(n));
    const auto s = splits();
    const auto base = load_model("none");
    const double pn = noise_power(s.train);
    for (const auto& n : names) {
      const auto& d = cfg_.defense(n);
      const auto ccfg = classifier_config();
      defenses::DefenseResult res;
      std::string extra;
      if (d.kind == DefenseKind::smoothing) {
        auto sc = d.smoothing;
        sc.seed = derive_seed(cfg_.seed, "defense:" + n);
        res = defenses::gaussian_smooth_train(s.train, sc, ccfg, validation(s));
        log("defend " + n + ": smoothing sigma " + format_number(sc.sigma) + " k " + std::to_string(sc.k) + " seed " +
            std::to_string(sc.seed));
      } else {
        auto ac = d.adversarial;
        ac.seed = derive_seed(cfg_.seed, "defense:" + n);
        ac.gan.seed = derive_seed(cfg_.seed, "defender-gan:" + n);
        auto r = defenses::adversarial_train(base, s.train, ac, ccfg, cfg_.channel, channel::NoiseSpec{pn, 0.0},
                                             validation(s));
        if (!r.gan_telemetry.rows.empty()) {
          write_text(out_ / "models" / (n + ".gan.csv"), attacks::telemetry_csv(r.gan_telemetry));
        }
        log("defend " + n + ": adversarial " + defenses::to_string(ac.recipe) + " seed " + std::to_string(ac.seed) +
            " defender gan seed " + std::to_string(ac.gan.seed));
        res = std::move(r);
      }
      stamp(res.net.metadata());
      save_model(n, res.net, res.history);
      const auto check = defenses::check_clean_accuracy(base, res.net, s.test, d.clean_tolerance);
      std::string report = check.message() + "\n";
      for (const auto& w : res.warnings) report += "warning: " + w + "\n";
      write_text(report_path(n), report);
      log("defend " + n + ": " + check.message());
    }
  }

  // -------------------------------------------------------------------------
  // Attacks

  /// Crafts every listed attack (plus mrpp inner attacks) against every
  /// listed target for every sweep seed. Empty lists take the sweep's.
  void train_attacks(std::vector<std::string> names = {}, std::vector<std::string> targets = {}) {
    if (names.empty()) {
      for (const auto& a : cfg_.sweep.attacks) {
        if (a != "none") names.push_back(a);
      }
    }
    if (targets.empty()) targets = cfg_.sweep.defenses;
    for (const auto& t : targets) {
      if (t != "none") cfg_.defense(t);
    }
    // Inner attacks first.
    std::vector<std::string> order;
    for (const auto& n : names) {
      const auto& a = cfg_.attack(n);
      if (a.kind == attacks::AttackKind::mrpp && std::find(order.begin(), order.end(), a.inner) == order.end()) {
        order.push_back(a.inner);
      }
    }
    for (const auto& n : names) {
      if (std::find(order.begin(), order.end(), n) == order.end() && cfg_.attack(n).kind != attacks::AttackKind::mrpp) {
        order.push_back(n);
      }
    }
    for (const auto& n : names) {
      if (cfg_.attack(n).kind == attacks::AttackKind::mrpp) order.push_back(n);
    }

    const auto s = splits();
    const double pn = noise_power(s.train);
    std::map<std::string, classifier::Net> nets;
    for (const auto& t : targets) nets.emplace(t, load_model(t));

    struct Job {
      std::string attack, target;
      std::uint64_t seed;
    };
    std::vector<Job> first, second;
    for (const auto& n : order) {
      for (const auto& t : targets) {
        for (auto seed : cfg_.sweep.seeds) {
          const auto path = attack_path(n, t, seed);
          if (fs::exists(path) && !opt_.overwrite) {
            // Inner attacks pulled in as dependencies may be reused.
            if (std::find(names.begin(), names.end(), n) == names.end()) continue;
            guard(path);
          }
          (cfg_.attack(n).kind == attacks::AttackKind::mrpp ? second : first).push_back({n, t, seed});
        }
      }
    }
    std::mutex log_mutex;
    auto run = [&](const std::vector<Job>& jobs) {
      parallel_for(jobs.size(), threads(), [&](std::size_t i) {
        const auto& j = jobs[i];
        const auto msg = craft(j.attack, j.target, j.seed, nets.at(j.target), s.train, pn);
        std::lock_guard lock(log_mutex);
        log(msg);
      });
    };
    run(first);
    run(second);
  }

  // -------------------------------------------------------------------------
  // Sweep

  std::vector<SweepRow> sweep(std::optional<std::vector<std::string>> attack_names = std::nullopt,
                              std::optional<std::vector<std::string>> defense_names = std::nullopt) {
    const auto attack_list = attack_names.value_or(cfg_.sweep.attacks);
    const auto defense_list = defense_names.value_or(cfg_.sweep.defenses);
    if (attack_list.empty() || defense_list.empty() || cfg_.sweep.pnr_db.empty() || cfg_.sweep.seeds.empty()) {
      throw ConfigError("sweep grid is empty: it needs at least one attack, defense, PNR value and seed");
    }
    std::vector<std::string> attacks_used{"none"};
    for (const auto& a : attack_list) {
      if (a != "none") {
        cfg_.attack(a);
        attacks_used.push_back(a);
      }
    }
    for (const auto& d : defense_list) {
      if (d != "none") cfg_.defense(d);
    }
    guard(sweep_path());

    const auto s = splits();
    const double pn = noise_power(s.train);
    if (cfg_.sweep.frames > s.test.size()) {
      throw ConfigError("sweep frames " + std::to_string(cfg_.sweep.frames) + " exceed the test set of " +
                        std::to_string(s.test.size()) + " frames");
    }
    LabeledDataset frames = s.test;
    if (cfg_.sweep.frames < s.test.size()) {
      Rng pick = make_rng(cfg_.seed, "sweep-frames");
      frames = attacks::random_sample(s.test, cfg_.sweep.frames, pick);
    }

    std::map<std::string, classifier::Net> nets;
    for (const auto& d : defense_list) nets.emplace(d, load_model(d));
    std::map<std::tuple<std::string, std::string, std::uint64_t>, attacks::AttackArtifact> artifacts;
    for (const auto& a : attacks_used) {
      if (a == "none") continue;
      for (const auto& d : defense_list) {
        for (auto seed : cfg_.sweep.seeds) artifacts.emplace(std::tuple{a, d, seed}, load_attack(a, d, seed));
      }
    }

    std::vector<SweepRow> rows;
    for (const auto& d : defense_list) {
      for (const auto& a : attacks_used) {
        for (double pnr : cfg_.sweep.pnr_db) {
          for (auto seed : cfg_.sweep.seeds) rows.push_back({a, d, pnr, seed, 0.0, frames.size()});
        }
      }
    }
    // Clean accuracy is one number per defense.
    std::map<std::string, double> clean;
    for (const auto& d : defense_list) clean[d] = classifier::accuracy(nets.at(d), frames);

    parallel_for(rows.size(), threads(), [&](std::size_t i) {
      auto& r = rows[i];
      if (r.attack == "none") {
        r.accuracy = clean.at(r.defense);
        return;
      }
      const auto& art = artifacts.at({r.attack, r.defense, r.seed});
      classifier::AttackSetting set;
      set.attack = &art;
      // Per-example FGM is the no-channel reference; everything else goes over the air.
      set.channel = art.kind == attacks::AttackKind::fgm ? nullptr : &cfg_.channel;
      set.pnr_db = r.pnr_db;
      set.noise_power = pn;
      set.seed = derive_seed(cfg_.seed, "eval", r.seed);
      r.accuracy = classifier::evaluate(nets.at(r.defense), frames, set);
    });

    write_text(sweep_path(), sweep_csv_body(rows));
    log("sweep: " + std::to_string(rows.size()) + " rows -> " + sweep_path().string());
    return rows;
  }

  void plot_data() {
    if (!fs::exists(sweep_path())) throw ConfigError("sweep results " + sweep_path().string() + " are missing; run sweep first");
    guard(plot_path());
    const auto rows = parse_sweep_csv(io::read_file(sweep_path()));
    write_text(plot_path(), plot_data_body(rows));
    log("plot-data: " + plot_path().string());
  }

  classifier::Net load_model(const std::string& target) const {
    const auto path = model_path(target);
    if (!fs::exists(path)) {
      throw ConfigError("model " + path.string() + " is missing; run " +
                        (target == "none" ? std::string("train-clf") : "defend " + target) + " first");
    }
    return nn::load_network(path);
  }

  attacks::AttackArtifact load_attack(const std::string& attack, const std::string& target, std::uint64_t seed) const {
    const auto path = attack_path(attack, target, seed);
    if (!fs::exists(path)) {
      throw ConfigError("attack artifact " + path.string() + " is missing; run train-attack " + attack + " --target " +
                        target + " first");
    }
    return attacks::load_artifact(path);
  }

 private:
  std::string craft(const std::string& name, const std::string& target, std::uint64_t seed, const classifier::Net& net,
                    const LabeledDataset& train, double pn) const {
    const auto& a = cfg_.attack(name);
    const std::size_t p = train.samples_per_frame();
    const std::string tag = "attack:" + name + ":" + target;
    const std::uint64_t derived = derive_seed(cfg_.seed, tag, seed);
    Rng rng(derived);
    const double gain = a.kind == attacks::AttackKind::fgm ? 1.0 : cfg_.channel.expected_power_gain();
    const double p_max = channel::budget_for_pnr(a.train_pnr_db, pn, p, gain);
    const channel::NoiseSpec noise{pn, 0.0};

    attacks::AttackArtifact art;
    std::optional<attacks::GanTelemetry> telemetry;
    switch (a.kind) {
      case attacks::AttackKind::fgm:
        art.kind = attacks::AttackKind::fgm;
        art.samples = p;
        art.p_max = p_max;
        art.noise = noise;
        break;
      case attacks::AttackKind::uap_fgm: {
        const auto sample = attacks::random_sample(train, a.sample_frames, rng);
        art = attacks::craft_uap_fgm(net, sample, p_max);
        art.noise = noise;
        break;
      }
      case attacks::AttackKind::pgm:
      case attacks::AttackKind::cdi_gan: {
        auto g = a.gan;
        g.seed = derived;
        auto r = a.kind == attacks::AttackKind::pgm
                     ? attacks::train_pgm(net, train, p_max, g, rng)
                     : attacks::train_cdi_gan(net, train, p_max, cfg_.channel, noise, g, rng);
        art = std::move(r.artifact);
        telemetry = std::move(r.telemetry);
        break;
      }
      case attacks::AttackKind::mrpp: {
        auto inner = std::make_shared<const attacks::AttackArtifact>(load_attack(a.inner, target, seed));
        art = attacks::mrpp_transform(inner, cfg_.channel, a.channel_samples, rng);
        break;
      }
    }
    stamp(art.metadata);
    art.metadata["attack"] = name;
    art.metadata["target"] = target;
    art.metadata["attack_seed"] = std::to_string(seed);
    art.metadata["derived_seed"] = std::to_string(derived);
    const auto path = attack_path(name, target, seed);
    fs::create_directories(path.parent_path());
    attacks::save_artifact(art, path);
    std::string msg = "train-attack " + name + " target " + target + " seed " + std::to_string(seed) + " (derived " +
                      std::to_string(derived) + ")";
    if (telemetry) {
      write_text(fs::path(path).replace_extension(".csv"), attacks::telemetry_csv(*telemetry));
      for (const auto& w : telemetry->warnings) msg += "\n  warning: " + w;
    }
    return msg;
  }

  const LabeledDataset* validation(const Splits& s) const { return s.validation.empty() ? nullptr : &s.validation; }

  fs::path report_path(const std::string& target) const { return out_ / "models" / (target + ".report.txt"); }

  void save_model(const std::string& target, const classifier::Net& net, const std::vector<classifier::HistoryRow>& history) {
    fs::create_directories(model_path(target).parent_path());
    nn::save_network(net, model_path(target));
    write_text(out_ / "models" / (target + ".history.csv"), classifier::history_csv(history));
  }

  void stamp(std::map<std::string, std::string>& m) const {
    m["config_hash"] = cfg_.hash_hex();
    m["root_seed"] = std::to_string(cfg_.seed);
  }

  void guard(const fs::path& path) const {
    if (fs::exists(path) && !opt_.overwrite) {
      throw ConfigError(path.string() + " already exists; pass --overwrite to replace it");
    }
  }

  void write_text(const fs::path& path, const std::string& body) const {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    io::write_file(path, header() + body);
  }

  void log(const std::string& line) const {
    if (opt_.log) *opt_.log << line << '\n';
  }

  std::size_t threads() const { return opt_.threads ? opt_.threads : worker_count(); }

  static std::string fixed(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.4f", v);
    return b;
  }

  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (const auto& s : v) out += (out.empty() ? "" : " ") + s;
    return out;
  }

  ExperimentConfig cfg_;
  Options opt_;
  fs::path out_;
};

}  // namespace rfadv::experiment
