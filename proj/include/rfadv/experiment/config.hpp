#pragma once

// Experiment configuration: an INI file with fixed sections ([experiment],
// [dataset], [classifier], [channel], [noise], [sweep]) and named blocks
// [attack.NAME] / [defense.NAME]. Unknown sections or keys are errors.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "rfadv/attacks/artifact.hpp"
#include "rfadv/attacks/gan.hpp"
#include "rfadv/binary_io.hpp"
#include "rfadv/channel/channel.hpp"
#include "rfadv/classifier/model.hpp"
#include "rfadv/defenses/adversarial.hpp"
#include "rfadv/defenses/smoothing.hpp"
#include "rfadv/error.hpp"
#include "rfadv/signal/synth.hpp"

namespace rfadv::experiment {

struct DatasetBlock {
  std::string source = "synth";  // synth | portable
  signal::SynthSpec synth;
  std::filesystem::path path;  // portable
  std::optional<int> snr_filter;
  double train_fraction = 2.0 / 3.0;
  double validation_fraction = 0.0;  // of the held-out part; 0: no checkpoint selection
};

struct AttackBlock {
  std::string name;
  attacks::AttackKind kind = attacks::AttackKind::uap_fgm;
  double train_pnr_db = 10.0;        // budget the artifact is crafted at
  std::size_t sample_frames = 500;   // uap_fgm
  std::string inner;                 // mrpp
  std::size_t channel_samples = 1000;  // mrpp
  attacks::GanConfig gan;            // pgm, cdi_gan
};

enum class DefenseKind { smoothing, adversarial };

struct DefenseBlock {
  std::string name;
  DefenseKind kind = DefenseKind::smoothing;
  defenses::SmoothingConfig smoothing;
  defenses::AdvTrainConfig adversarial;
  double clean_tolerance = 0.05;
};

struct SweepBlock {
  std::vector<double> pnr_db;
  std::size_t frames = 1000;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> attacks{"none"};
  std::vector<std::string> defenses{"none"};
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::uint64_t seed = 1;
  std::filesystem::path out = "runs/experiment";
  DatasetBlock dataset;
  classifier::ClassifierConfig classifier;
  channel::ChannelDistribution channel;
  std::optional<double> noise_power;  // unset: from the dataset SNR
  std::vector<AttackBlock> attacks;
  std::vector<DefenseBlock> defenses;
  SweepBlock sweep;
  std::uint32_t hash = 0;  // CRC32 of the canonical key=value listing

  const AttackBlock& attack(const std::string& n) const {
    for (const auto& a : attacks) {
      if (a.name == n) return a;
    }
    throw ConfigError("unknown attack '" + n + "'");
  }
  const DefenseBlock& defense(const std::string& n) const {
    for (const auto& d : defenses) {
      if (d.name == n) return d;
    }
    throw ConfigError("unknown defense '" + n + "'");
  }
  std::string hash_hex() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", hash);
    return buf;
  }
};

namespace detail {

using boost::property_tree::ptree;

/// Key access for one section; remembers which keys were read so leftovers
/// can be reported.
class Section {
 public:
  Section(std::string name, const ptree& tree) : name_(std::move(name)), tree_(&tree) {}

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    for (const auto& [k, v] : *tree_) {
      if (k == key) return v.data();
    }
    return std::nullopt;
  }

  std::string str(const std::string& key, const std::string& fallback) { return raw(key).value_or(fallback); }

  double num(const std::string& key, double fallback) {
    const auto v = raw(key);
    return v ? to_double(key, *v) : fallback;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    const double d = to_double(key, *v);
    if (d < 0 || d != std::floor(d)) fail(key, "expects a nonnegative integer, got '" + *v + "'");
    return static_cast<std::size_t>(d);
  }

  std::uint64_t u64(const std::string& key, std::uint64_t fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    return parse_u64(key, *v);
  }

  std::uint64_t parse_u64(const std::string& key, const std::string& v) const {
    if (v.empty() || !std::all_of(v.begin(), v.end(), [](unsigned char c) { return std::isdigit(c); })) {
      fail(key, "expects a nonnegative integer, got '" + v + "'");
    }
    try {
      return std::stoull(v);
    } catch (const std::exception&) {
      fail(key, "is out of range: '" + v + "'");
    }
  }

  bool flag(const std::string& key, bool fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    fail(key, "expects true or false, got '" + *v + "'");
  }

  std::vector<std::string> list(const std::string& key, std::vector<std::string> fallback) {
    const auto v = raw(key);
    if (!v) return fallback;
    std::string text = *v;
    std::replace(text.begin(), text.end(), ',', ' ');
    std::istringstream is(text);
    std::vector<std::string> out;
    for (std::string item; is >> item;) out.push_back(item);
    return out;
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    if (!tree_->count(key)) {
      used_.insert(key);
      return fallback;
    }
    std::vector<double> out;
    for (const auto& item : list(key, {})) out.push_back(to_double(key, item));
    return out;
  }

  void check_unused() const {
    for (const auto& [k, v] : *tree_) {
      if (!used_.count(k)) throw ConfigError("[" + name_ + "] unknown key '" + k + "'");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    throw ConfigError("[" + name_ + "] " + key + " " + what);
  }

 private:
  double to_double(const std::string& key, const std::string& v) const {
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (const std::exception&) {
      fail(key, "expects a number, got '" + v + "'");
    }
  }

  std::string name_;
  const ptree* tree_;
  std::set<std::string> used_;
};

inline void read_gan(Section& s, const std::string& prefix, attacks::GanConfig& g) {
  g.alpha = s.num(prefix + "alpha", g.alpha);
  g.beta = s.num(prefix + "beta", g.beta);
  g.lr_g = s.num(prefix + "lr_g", g.lr_g);
  g.lr_d = s.num(prefix + "lr_d", g.lr_d);
  g.epochs = s.count(prefix + "epochs", g.epochs);
  g.batch_size = s.count(prefix + "batch_size", g.batch_size);
  g.trigger.dim = s.count(prefix + "trigger_dim", g.trigger.dim);
  g.gaussian_mean = s.num(prefix + "gaussian_mean", g.gaussian_mean);
  if (s.raw(prefix + "gaussian_variance")) g.gaussian_variance = s.num(prefix + "gaussian_variance", 0.0);
  g.g_arch = s.str(prefix + "g_arch", g.g_arch);
  g.d1_arch = s.str(prefix + "d1_arch", g.d1_arch);
  g.d2_arch = s.str(prefix + "d2_arch", g.d2_arch);
  g.channel_draws = s.count(prefix + "channel_draws", g.channel_draws);
  g.f1_pairs = s.count(prefix + "f1_pairs", g.f1_pairs);
}

inline bool valid_name(const std::string& n) {
  if (n.empty() || n == "none") return false;
  return std::all_of(n.begin(), n.end(), [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '-'; });
}

}  // namespace detail

inline ExperimentConfig parse_config(const std::string& text) {
  using detail::Section;
  boost::property_tree::ptree tree;
  try {
    std::istringstream is(text);
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  ExperimentConfig cfg;
  std::vector<std::string> lines;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [k, v] : body) lines.push_back(section + "." + k + "=" + v.data() + "\n");
  }
  std::sort(lines.begin(), lines.end());
  std::string canonical;
  for (const auto& l : lines) canonical += l;
  cfg.hash = io::crc32(canonical);

  std::deque<Section> checked;
  auto section = [&](const std::string& name) -> Section& {
    static const boost::property_tree::ptree empty;
    for (const auto& [k, v] : tree) {
      if (k == name) return checked.emplace_back(name, v);
    }
    return checked.emplace_back(name, empty);
  };

  {
    auto& s = section("experiment");
    cfg.name = s.str("name", cfg.name);
    cfg.seed = s.u64("seed", cfg.seed);
    cfg.out = s.str("out", "runs/" + cfg.name);
  }
  {
    auto& s = section("dataset");
    auto& d = cfg.dataset;
    d.source = s.str("source", d.source);
    if (d.source != "synth" && d.source != "portable") s.fail("source", "must be synth or portable, got '" + d.source + "'");
    d.synth.classes = s.list("classes", {"BPSK", "QPSK", "8PSK", "QAM16"});
    d.synth.frames_per_class = s.count("frames_per_class", 750);
    d.synth.samples = s.count("samples", d.synth.samples);
    d.synth.samples_per_symbol = s.count("samples_per_symbol", d.synth.samples_per_symbol);
    d.synth.snr_db = s.num("snr_db", d.synth.snr_db);
    d.synth.rolloff = s.num("rolloff", d.synth.rolloff);
    const auto tx = s.str("tx_channel", "none");
    if (tx == "none") {
      d.synth.tx_channel = signal::TxChannel::none;
    } else if (tx == "rayleigh_flat_scalar") {
      d.synth.tx_channel = signal::TxChannel::rayleigh_flat_scalar;
    } else {
      s.fail("tx_channel", "must be none or rayleigh_flat_scalar");
    }
    d.path = s.str("path", "");
    if (s.raw("snr_filter")) d.snr_filter = static_cast<int>(s.num("snr_filter", 0));
    d.train_fraction = s.num("train_fraction", d.train_fraction);
    if (d.source == "portable" && d.path.empty()) s.fail("path", "is required for portable datasets");
    d.validation_fraction = s.num("validation_fraction", d.validation_fraction);
    if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0)) s.fail("train_fraction", "must lie in (0, 1)");
    if (!(d.validation_fraction >= 0.0 && d.validation_fraction < 1.0)) s.fail("validation_fraction", "must lie in [0, 1)");
    if (d.source == "synth") {
      for (const auto& c : d.synth.classes) signal::canonical_class(c);  // names the offender
      d.synth.validate();
    }
  }
  {
    auto& s = section("classifier");
    auto& c = cfg.classifier;
    c.architecture = classifier::parse_architecture(s.str("architecture", classifier::to_string(c.architecture)));
    c.epochs = s.count("epochs", c.epochs);
    c.batch_size = s.count("batch_size", c.batch_size);
    c.lr = s.num("lr", c.lr);
    c.dropout = s.num("dropout", c.dropout);
    c.validate();
  }
  {
    auto& s = section("channel");
    auto& c = cfg.channel;
    c.rayleigh_scale = s.num("rayleigh_scale", c.rayleigh_scale);
    c.shadowing_sigma_db = s.num("shadowing_sigma_db", c.shadowing_sigma_db);
    c.path_exponent = s.num("path_exponent", c.path_exponent);
    c.distance = s.num("distance", c.distance);
    c.reference_gain = s.num("reference_gain", c.reference_gain);
    c.coherence = channel::parse_coherence(s.str("coherence", channel::to_string(c.coherence)));
    c.validate();
  }
  {
    auto& s = section("noise");
    if (s.raw("noise_power")) {
      cfg.noise_power = s.num("noise_power", 0.0);
      if (!(*cfg.noise_power > 0.0)) s.fail("noise_power", "must be > 0");
    }
  }
  {
    auto& s = section("sweep");
    auto& w = cfg.sweep;
    w.pnr_db = s.numbers("pnr_db", {});
    w.frames = s.count("frames", w.frames);
    std::vector<std::uint64_t> seeds;
    for (const auto& v : s.list("seeds", {"1"})) seeds.push_back(s.parse_u64("seeds", v));
    w.seeds = seeds;
    w.attacks = s.list("attacks", {"none"});
    w.defenses = s.list("defenses", {"none"});
    if (w.pnr_db.empty()) s.fail("pnr_db", "must list at least one value");
    if (w.seeds.empty()) s.fail("seeds", "must list at least one seed");
    if (w.frames < 1) s.fail("frames", "must be >= 1");
  }

  for (const auto& [section_name, body] : tree) {
    const auto dot = section_name.find('.');
    const std::string head = section_name.substr(0, dot);
    if (dot == std::string::npos) {
      static const std::set<std::string> known{"experiment", "dataset", "classifier", "channel", "noise", "sweep"};
      if (!known.count(section_name)) throw ConfigError("config: unknown section [" + section_name + "]");
      continue;
    }
    const std::string name = section_name.substr(dot + 1);
    if (!detail::valid_name(name)) throw ConfigError("config: bad block name '" + name + "' in [" + section_name + "]");
    auto& s = checked.emplace_back(section_name, body);
    if (head == "attack") {
      AttackBlock a;
      a.name = name;
      a.kind = attacks::parse_kind(s.str("kind", ""));
      a.train_pnr_db = s.num("train_pnr_db", a.train_pnr_db);
      a.sample_frames = s.count("sample_frames", a.sample_frames);
      a.inner = s.str("inner", "");
      a.channel_samples = s.count("channel_samples", a.channel_samples);
      detail::read_gan(s, "", a.gan);
      if (a.kind == attacks::AttackKind::mrpp && a.inner.empty()) s.fail("inner", "is required for mrpp attacks");
      if (a.kind != attacks::AttackKind::mrpp && !a.inner.empty()) s.fail("inner", "only applies to mrpp attacks");
      if (a.kind == attacks::AttackKind::pgm || a.kind == attacks::AttackKind::cdi_gan) a.gan.validate();
      cfg.attacks.push_back(std::move(a));
    } else if (head == "defense") {
      DefenseBlock d;
      d.name = name;
      const auto kind = s.str("kind", "");
      if (kind == "smoothing") {
        d.kind = DefenseKind::smoothing;
        d.smoothing.sigma = s.num("sigma", d.smoothing.sigma);
        d.smoothing.k = s.count("k", d.smoothing.k);
        d.smoothing.max_frames = s.count("max_frames", d.smoothing.max_frames);
        d.smoothing.validate();
      } else if (kind == "adversarial") {
        d.kind = DefenseKind::adversarial;
        auto& a = d.adversarial;
        a.recipe = defenses::parse_recipe(s.str("recipe", defenses::to_string(a.recipe)));
        a.mix_ratio = s.num("mix_ratio", a.mix_ratio);
        a.pnr_schedule = s.numbers("pnr_schedule", a.pnr_schedule);
        a.epochs = s.count("epochs", a.epochs);
        a.from_scratch = s.flag("from_scratch", a.from_scratch);
        a.gan_train_pnr_db = s.num("gan_train_pnr_db", a.gan_train_pnr_db);
        a.gan_frames = s.count("gan_frames", a.gan_frames);
        detail::read_gan(s, "gan_", a.gan);
        a.validate();
      } else {
        s.fail("kind", "must be smoothing or adversarial, got '" + kind + "'");
      }
      d.clean_tolerance = s.num("clean_tolerance", d.clean_tolerance);
      cfg.defenses.push_back(std::move(d));
    } else {
      throw ConfigError("config: unknown section [" + section_name + "]");
    }
  }
  for (const auto& s : checked) s.check_unused();

  // Cross references.
  std::set<std::string> names;
  for (const auto& a : cfg.attacks) {
    if (!names.insert(a.name).second) throw ConfigError("duplicate attack '" + a.name + "'");
  }
  for (const auto& a : cfg.attacks) {
    if (a.kind != attacks::AttackKind::mrpp) continue;
    const auto& inner = cfg.attack(a.inner);
    if (inner.kind == attacks::AttackKind::fgm || inner.kind == attacks::AttackKind::mrpp) {
      throw ConfigError("mrpp attack '" + a.name + "' must wrap a uap_fgm, pgm or cdi_gan attack, not '" + a.inner + "'");
    }
  }
  for (const auto& n : cfg.sweep.attacks) {
    if (n != "none") cfg.attack(n);
  }
  for (const auto& n : cfg.sweep.defenses) {
    if (n != "none") cfg.defense(n);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
  return parse_config(io::read_file(path));
}

}  // namespace rfadv::experiment
