#pragma once

// Experiment orchestration: seeds, the reference benchmark, the erratum grid
// and the directional findings checked on it.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "saplab/attacks.hpp"
#include "saplab/errors.hpp"
#include "saplab/network.hpp"
#include "saplab/rng.hpp"
#include "saplab/sap.hpp"
#include "saplab/synthetic.hpp"

namespace saplab {

inline constexpr const char* kToolVersion = "0.1.0";

/// Smallest epsilon on the default grid for which white-box PGD on the
/// undefended reference network exceeds 95% untargeted success (found by
/// calibrate_epsilon with the default seed; see the acceptance suite).
inline constexpr double kCalibratedEpsilon = 0.14;

/// Every seed used by an experiment, all derived from one global seed unless
/// overridden in the config.
struct SeedPlan {
  std::uint64_t global = 0;
  std::uint64_t dataset = 0;
  std::uint64_t init = 0;
  std::uint64_t shuffle = 0;
  std::uint64_t sap = 0;
  std::uint64_t target = 0;

  static SeedPlan from_global(std::uint64_t g) {
    return {g, derive_seed(g, "dataset"), derive_seed(g, "init"), derive_seed(g, "shuffle"), derive_seed(g, "sap"),
            derive_seed(g, "target")};
  }

  friend bool operator==(const SeedPlan&, const SeedPlan&) = default;
};

inline nlohmann::json to_json(const SeedPlan& s) {
  return {{"global", s.global}, {"dataset", s.dataset}, {"init", s.init},
          {"shuffle", s.shuffle}, {"sap", s.sap},         {"target", s.target}};
}

struct ExperimentConfig {
  SeedPlan seeds = SeedPlan::from_global(20180201);
  DatasetParams dataset;
  std::vector<std::size_t> widths{32, 128, 128, 10};
  TrainConfig train{0.05, 20, 32, 0};
  AttackConfig attack;       // epsilon, step size, iterations, eval cadence
  std::size_t eval_points = 500;
  std::size_t passes = 100;  // K of the averaged reference defense
  std::vector<std::size_t> eot_sweep{4, 16};
  std::optional<std::string> dataset_path;
  std::optional<std::string> checkpoint_path;
  std::optional<SapConfig> sap;  // used by the eval and attack subcommands
  std::string output = "out";

  ExperimentConfig() {
    attack.epsilon = kCalibratedEpsilon;
    attack.step_size = kCalibratedEpsilon / 8.0;
    attack.iterations = 200;
    attack.eval_every = 10;
    apply_seeds();
  }

  void apply_seeds() {
    dataset.seed = seeds.dataset;
    train.shuffle_seed = seeds.shuffle;
    attack.target_seed = seeds.target;
  }

  MlpSpec mlp_spec() const { return {widths, seeds.init}; }

  SapConfig reference_sap(double multiplier, std::size_t k, SamplingScheme scheme) const {
    SapConfig c;
    c.r_multiplier = multiplier;
    c.passes = k;
    c.scheme = scheme;
    c.seed = seeds.sap;
    return c;
  }
};

inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {
      {"seed", c.seeds.global},
      {"seeds", to_json(c.seeds)},
      {"dataset", to_json(c.dataset)},
      {"model", {{"widths", c.widths}}},
      {"train",
       {{"learning_rate", c.train.learning_rate}, {"epochs", c.train.epochs}, {"batch_size", c.train.batch_size}}},
      {"attack", to_json(c.attack)},
      {"eval_points", c.eval_points},
      {"passes", c.passes},
      {"eot_sweep", c.eot_sweep},
      {"output", c.output},
  };
  if (c.dataset_path) j["dataset_path"] = *c.dataset_path;
  if (c.checkpoint_path) j["checkpoint_path"] = *c.checkpoint_path;
  if (c.sap) j["sap"] = to_json(*c.sap);
  return j;
}

/// Missing fields keep their defaults. `seed_override` replaces the global
/// seed before derived seeds are computed; explicit per-stream seeds in
/// "seeds" still win.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                                    std::optional<std::uint64_t> seed_override = std::nullopt) {
  try {
    ExperimentConfig c;
    std::uint64_t global = seed_override ? *seed_override : j.value("seed", c.seeds.global);
    c.seeds = SeedPlan::from_global(global);
    if (j.contains("seeds")) {
      const auto& s = j.at("seeds");
      c.seeds.dataset = s.value("dataset", c.seeds.dataset);
      c.seeds.init = s.value("init", c.seeds.init);
      c.seeds.shuffle = s.value("shuffle", c.seeds.shuffle);
      c.seeds.sap = s.value("sap", c.seeds.sap);
      c.seeds.target = s.value("target", c.seeds.target);
    }
    c.apply_seeds();
    if (j.contains("dataset")) {
      nlohmann::json d = j.at("dataset");
      d.erase("seed");  // comes from the seed plan
      c.dataset = dataset_params_from_json(d, c.dataset);
    }
    if (j.contains("model")) c.widths = j.at("model").value("widths", c.widths);
    if (j.contains("train")) {
      const auto& t = j.at("train");
      c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
      c.train.epochs = t.value("epochs", c.train.epochs);
      c.train.batch_size = t.value("batch_size", c.train.batch_size);
    }
    if (j.contains("attack")) {
      nlohmann::json a = to_json(c.attack);
      for (const auto& [k, v] : j.at("attack").items()) a[k] = v;
      if (j.at("attack").contains("epsilon") && !j.at("attack").contains("step_size")) a.erase("step_size");
      a["target_seed"] = c.seeds.target;
      c.attack = attack_config_from_json(a);
    }
    c.eval_points = j.value("eval_points", c.eval_points);
    c.passes = j.value("passes", c.passes);
    c.eot_sweep = j.value("eot_sweep", c.eot_sweep);
    if (j.contains("dataset_path")) c.dataset_path = j.at("dataset_path").get<std::string>();
    if (j.contains("checkpoint_path")) c.checkpoint_path = j.at("checkpoint_path").get<std::string>();
    if (j.contains("sap")) {
      nlohmann::json s = j.at("sap");
      if (!s.contains("seed")) s["seed"] = c.seeds.sap;
      c.sap = sap_config_from_json(s);
    }
    c.output = j.value("output", c.output);
    MlpSpec{c.widths, 0}.validate();
    if (c.passes < 1) throw ConfigError("passes must be >= 1");
    if (c.eval_points < 1) throw ConfigError("eval_points must be >= 1");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed experiment config: ") + e.what());
  }
}

using Logger = std::function<void(const std::string&)>;

/// The trained undefended model plus the data it is evaluated on.
struct PreparedModel {
  SyntheticDataset dataset;
  Checkpoint checkpoint;
  Samples eval;  // first eval_points test points
};

inline PreparedModel prepare_model(const ExperimentConfig& cfg, const Logger& log = {}) {
  PreparedModel pm;
  if (cfg.dataset_path) {
    pm.dataset = load_dataset(*cfg.dataset_path);
  } else {
    pm.dataset = make_dataset(cfg.dataset);
  }
  if (cfg.checkpoint_path) {
    pm.checkpoint = load_checkpoint(*cfg.checkpoint_path);
  } else {
    const MlpSpec spec = cfg.mlp_spec();
    if (log) log("training " + std::to_string(pm.dataset.train.size()) + " points, " +
                 std::to_string(cfg.train.epochs) + " epochs");
    TrainResult tr = train(init_network(spec), pm.dataset.train, cfg.train);
    pm.checkpoint.spec = spec;
    pm.checkpoint.network = std::move(tr.network);
    pm.checkpoint.metadata = {accuracy(pm.checkpoint.network, pm.dataset.train),
                              accuracy(pm.checkpoint.network, pm.dataset.test), spec.init_seed,
                              cfg.train.shuffle_seed, std::move(tr.loss_trace)};
  }
  pm.eval = pm.dataset.test.head(cfg.eval_points);
  return pm;
}

/// First epsilon in `grid` where untargeted white-box PGD on the undefended
/// network succeeds on more than `min_success` of the points.
inline std::optional<double> calibrate_epsilon(const Network& net, const Samples& data, AttackConfig attack,
                                               const std::vector<double>& grid, double min_success = 0.95) {
  attack.targeted = false;
  for (double eps : grid) {
    attack.epsilon = eps;
    attack.step_size = eps / 8.0;
    if (attack_model(net, std::nullopt, data, attack).success.value() > min_success) return eps;
  }
  return std::nullopt;
}

inline std::vector<double> default_epsilon_grid() {
  std::vector<double> g;
  for (int k = 1; k <= 30; ++k) g.push_back(k / 100.0);
  return g;
}

// ---------------------------------------------------------------------------
// Report types.

struct RateJson {
  static nlohmann::json of(const Rate& r) {
    return {{"hits", r.hits}, {"n", r.n}, {"rate", r.value()}, {"stderr", r.stderr_()}};
  }
  static Rate from(const nlohmann::json& j) { return {j.at("hits").get<std::size_t>(), j.at("n").get<std::size_t>()}; }
};

struct CellResult {
  std::string id;
  std::optional<SapConfig> defense;
  std::string attack = "none";  // none | whitebox | through_sap | transfer | bpda
  bool targeted = false;
  double epsilon = 0.0;
  std::size_t eot_samples = 0;
  std::string judge_scheme;  // set when verdicts come from a different scheme
  Rate clean;                // accuracy of the model's decision rule
  Rate clean_single_pass;    // accuracy of one stochastic pass (undefended: same as clean)
  Rate adv_correct;          // accuracy on the attacked points
  Rate success;              // attack goal achieved
  double seconds = 0.0;
  std::string error;

  std::string oracle() const {
    if (attack == "none") return "none";
    if (attack == "whitebox" || attack == "transfer") return "vanilla";
    return attack;
  }
};

struct Finding {
  std::string id;
  std::string claim;
  bool pass = false;
  nlohmann::json values = nlohmann::json::object();
};

struct EvalReport {
  std::string version = kToolVersion;
  nlohmann::json config = nlohmann::json::object();
  nlohmann::json model = nlohmann::json::object();
  std::vector<CellResult> cells;
  std::vector<Finding> findings;

  const CellResult& cell(const std::string& id) const {
    for (const auto& c : cells) {
      if (c.id == id) return c;
    }
    throw ArgumentError("report has no cell '" + id + "'");
  }

  bool all_findings_pass() const {
    for (const auto& f : findings) {
      if (!f.pass) return false;
    }
    return true;
  }
};

inline nlohmann::json to_json(const CellResult& c, bool include_timing) {
  nlohmann::json j = {
      {"id", c.id},
      {"defense", c.defense ? to_json(*c.defense) : nlohmann::json(nullptr)},
      {"attack", c.attack},
      {"oracle", c.oracle()},
      {"targeted", c.targeted},
      {"epsilon", c.epsilon},
      {"eot_samples", c.eot_samples},
      {"judge_scheme", c.judge_scheme},
      {"clean_acc", RateJson::of(c.clean)},
      {"clean_acc_single_pass", RateJson::of(c.clean_single_pass)},
      {"adv_acc", RateJson::of(c.adv_correct)},
      {"success_rate", RateJson::of(c.success)},
      {"error", c.error},
  };
  if (include_timing) j["seconds"] = c.seconds;
  return j;
}

inline CellResult cell_from_json(const nlohmann::json& j) {
  CellResult c;
  c.id = j.at("id").get<std::string>();
  if (!j.at("defense").is_null()) c.defense = sap_config_from_json(j.at("defense"));
  c.attack = j.at("attack").get<std::string>();
  c.targeted = j.at("targeted").get<bool>();
  c.epsilon = j.at("epsilon").get<double>();
  c.eot_samples = j.at("eot_samples").get<std::size_t>();
  c.judge_scheme = j.at("judge_scheme").get<std::string>();
  c.clean = RateJson::from(j.at("clean_acc"));
  c.clean_single_pass = RateJson::from(j.at("clean_acc_single_pass"));
  c.adv_correct = RateJson::from(j.at("adv_acc"));
  c.success = RateJson::from(j.at("success_rate"));
  c.seconds = j.value("seconds", 0.0);
  c.error = j.at("error").get<std::string>();
  return c;
}

/// Canonical form: keys sorted (nlohmann's default object ordering), cells in
/// id order as produced by the grid. Wall-clock is left out unless asked for,
/// so two runs with the same seed are byte-identical.
inline nlohmann::json to_json(const EvalReport& r, bool include_timing = false) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) cells.push_back(to_json(c, include_timing));
  nlohmann::json findings = nlohmann::json::array();
  for (const auto& f : r.findings) {
    findings.push_back({{"id", f.id}, {"claim", f.claim}, {"pass", f.pass}, {"values", f.values}});
  }
  return {{"tool", "saplab"}, {"version", r.version}, {"config", r.config},
          {"model", r.model},  {"cells", cells},       {"findings", findings}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.version = j.at("version").get<std::string>();
    r.config = j.at("config");
    r.model = j.at("model");
    for (const auto& c : j.at("cells")) r.cells.push_back(cell_from_json(c));
    for (const auto& f : j.at("findings")) {
      r.findings.push_back(
          {f.at("id").get<std::string>(), f.at("claim").get<std::string>(), f.at("pass").get<bool>(), f.at("values")});
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// The erratum grid.

namespace detail {

struct RowSpec {
  std::string name;
  std::optional<SapConfig> defense;
};

inline std::string fmt_multiplier(double m) {
  std::string s = nlohmann::json(m).dump();
  if (s.find('.') == std::string::npos) s += ".0";
  return s;
}

inline Rate decision_accuracy(const Samples& data, const DecisionRule& decide) {
  Rate r;
  for (std::size_t i = 0; i < data.size(); ++i) {
    r.n++;
    r.hits += decide(data.x[i], i) == data.y[i] ? 1 : 0;
  }
  return r;
}

inline double diff_stderr(const Rate& a, const Rate& b) {
  return std::sqrt(a.stderr_() * a.stderr_() + b.stderr_() * b.stderr_());
}

}  // namespace detail

/// Required gap between two success rates: 5 points or 3 standard errors of
/// the difference, whichever is larger.
inline double required_margin(const Rate& a, const Rate& b) { return std::max(0.05, 3.0 * detail::diff_stderr(a, b)); }

inline std::vector<Finding> evaluate_findings(const EvalReport& r, std::size_t passes, std::size_t eot_base = 1) {
  std::vector<Finding> out;
  auto get = [&](const std::string& id) -> const CellResult* {
    for (const auto& c : r.cells) {
      if (c.id == id && c.error.empty()) return &c;
    }
    return nullptr;
  };
  const std::string ref = "sap-m1.0-k" + std::to_string(passes) + "-multinomial";

  {
    Finding f{"single_pass_pruning", "one pass at r = m is no more accurate than one pass at r = 2m", false, {}};
    const auto* m1 = get("sap-m1.0-k1-multinomial/none");
    const auto* m2 = get("sap-m2.0-k1-multinomial/none");
    if (m1 && m2) {
      f.values = {{"m1_single_pass", m1->clean.value()}, {"m2_single_pass", m2->clean.value()},
                  {"margin", m2->clean.value() - m1->clean.value()}};
      f.pass = m1->clean.value() <= m2->clean.value();
    }
    out.push_back(std::move(f));
  }
  {
    Finding f{"averaging_recovers", "r = m with K-pass averaging is within 2 points of the undefended accuracy",
              false, {}};
    const auto* und = get("undefended/none");
    const auto* avg = get(ref + "/none");
    if (und && avg) {
      const double gap = std::abs(und->clean.value() - avg->clean.value());
      f.values = {{"undefended", und->clean.value()}, {"averaged", avg->clean.value()}, {"gap", gap}};
      f.pass = gap <= 0.02;
    }
    out.push_back(std::move(f));
  }
  {
    Finding f{"attack_hierarchy",
              "untargeted success: through_sap < transfer < bpda, bpda accuracy < 10%, clean defended >= 90%", false,
              {}};
    const auto* none = get(ref + "/none");
    const auto* ts = get(ref + "/through_sap-eot" + std::to_string(eot_base) + "/untargeted");
    const auto* tr = get(ref + "/transfer/untargeted");
    const auto* bp = get(ref + "/bpda/untargeted");
    if (none && ts && tr && bp) {
      const double m1 = required_margin(ts->success, tr->success);
      const double m2 = required_margin(tr->success, bp->success);
      const bool lower = tr->success.value() - ts->success.value() >= m1;
      const bool upper = bp->success.value() - tr->success.value() >= m2;
      const bool broken = bp->adv_correct.value() < 0.10;
      const bool clean = none->clean.value() >= 0.90;
      f.values = {{"through_sap", ts->success.value()},
                  {"transfer", tr->success.value()},
                  {"bpda", bp->success.value()},
                  {"bpda_adv_acc", bp->adv_correct.value()},
                  {"clean_defended_acc", none->clean.value()},
                  {"required_margin_through_sap_transfer", m1},
                  {"required_margin_transfer_bpda", m2},
                  {"through_sap_below_transfer", lower},
                  {"transfer_below_bpda", upper},
                  {"bpda_breaks_defense", broken},
                  {"clean_defended_ok", clean}};
      f.pass = lower && upper && broken && clean;
    }
    out.push_back(std::move(f));
  }
  {
    Finding f{"scheme_invariance",
              "BPDA steered by the binomial scheme and judged by the multinomial one is within 5 points of "
              "multinomial/multinomial",
              false,
              {}};
    const auto* matched = get(ref + "/bpda/untargeted");
    const auto* cross = get("sap-m1.0-k" + std::to_string(passes) + "-binomial/bpda/untargeted/judge-multinomial");
    if (matched && cross) {
      const double gap = std::abs(matched->success.value() - cross->success.value());
      f.values = {{"matched", matched->success.value()}, {"cross", cross->success.value()}, {"gap", gap}};
      f.pass = gap <= 0.05;
    }
    out.push_back(std::move(f));
  }
  return out;
}

/// Runs the fixed grid
///   {undefended} U {SAP m1 K, m1 K=1, m2 K=1} x {none, through_sap, transfer, bpda}
///   x {multinomial, binomial} x {untargeted, targeted}
/// plus cross-scheme BPDA, the EOT sweep and a logit-averaging sensitivity
/// cell, then evaluates the findings. Cell failures are recorded, not thrown.
inline EvalReport reproduce_erratum(const ExperimentConfig& cfg, const PreparedModel& pm, const Logger& log = {}) {
  const Network& net = pm.checkpoint.network;
  const Samples& data = pm.eval;

  EvalReport report;
  report.config = to_json(cfg);
  report.model = {{"spec", {{"widths", pm.checkpoint.spec.widths}, {"init_seed", pm.checkpoint.spec.init_seed}}},
                  {"train_accuracy", pm.checkpoint.metadata.train_accuracy},
                  {"test_accuracy", pm.checkpoint.metadata.test_accuracy},
                  {"eval_points", data.size()}};

  std::vector<detail::RowSpec> rows{{"undefended", std::nullopt}};
  const std::vector<std::pair<double, std::size_t>> sap_rows{{1.0, cfg.passes}, {1.0, 1}, {2.0, 1}};
  for (auto [mult, k] : sap_rows) {
    for (auto scheme : {SamplingScheme::multinomial, SamplingScheme::binomial}) {
      rows.push_back({"sap-m" + detail::fmt_multiplier(mult) + "-k" + std::to_string(k) + "-" + to_string(scheme),
                      cfg.reference_sap(mult, k, scheme)});
    }
  }

  auto timed = [&](CellResult cell, const std::function<void(CellResult&)>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      body(cell);
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
    cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (log) {
      log(cell.id + (cell.error.empty() ? "" : " ERROR " + cell.error) + " success=" +
          std::to_string(cell.success.value()) + " clean=" + std::to_string(cell.clean.value()) + " (" +
          std::to_string(cell.seconds) + "s)");
    }
    report.cells.push_back(std::move(cell));
  };

  for (const auto& row : rows) {
    Rate clean;
    Rate single;
    CellResult base;
    base.defense = row.defense;
    base.id = row.name + "/none";
    timed(base, [&](CellResult& c) {
      if (!row.defense) {
        c.clean = detail::decision_accuracy(data, undefended_decision(net));
        c.clean_single_pass = c.clean;
      } else {
        c.clean = detail::decision_accuracy(data, defended_decision(net, *row.defense));
        SapConfig one = *row.defense;
        one.passes = 1;
        c.clean_single_pass = row.defense->passes == 1 ? c.clean : detail::decision_accuracy(data, defended_decision(net, one));
      }
      c.adv_correct = c.clean;
      c.success = {c.clean.n - c.clean.hits, c.clean.n};
      clean = c.clean;
      single = c.clean_single_pass;
    });

    std::vector<std::pair<std::string, OracleKind>> attacks;
    if (!row.defense) {
      attacks = {{"whitebox", OracleKind::vanilla}};
    } else {
      attacks = {{"through_sap", OracleKind::through_sap}, {"transfer", OracleKind::vanilla}, {"bpda", OracleKind::bpda}};
    }
    for (const auto& [name, oracle] : attacks) {
      for (bool targeted : {false, true}) {
        CellResult cell;
        cell.defense = row.defense;
        cell.attack = name;
        cell.targeted = targeted;
        cell.epsilon = cfg.attack.epsilon;
        cell.eot_samples = oracle == OracleKind::through_sap ? cfg.attack.eot_samples : 0;
        cell.id = row.name + "/" + name + (oracle == OracleKind::through_sap ? "-eot" + std::to_string(cell.eot_samples) : "") +
                  (targeted ? "/targeted" : "/untargeted");
        timed(cell, [&](CellResult& c) {
          AttackConfig a = cfg.attack;
          a.targeted = targeted;
          a.oracle = oracle;
          a.eval_passes = row.defense ? row.defense->passes : 1;
          AttackStats st = attack_model(net, row.defense, data, a);
          c.clean = clean;
          c.clean_single_pass = single;
          c.success = st.success;
          c.adv_correct = st.defended_correct;
        });
      }
    }
  }

  const SapConfig ref_multi = cfg.reference_sap(1.0, cfg.passes, SamplingScheme::multinomial);
  const SapConfig ref_bin = cfg.reference_sap(1.0, cfg.passes, SamplingScheme::binomial);
  const std::string ref_bin_name = "sap-m1.0-k" + std::to_string(cfg.passes) + "-binomial";
  const std::string ref_multi_name = "sap-m1.0-k" + std::to_string(cfg.passes) + "-multinomial";
  const Rate ref_clean = report.cell(ref_multi_name + "/none").clean;

  for (bool targeted : {false, true}) {
    CellResult cell;
    cell.defense = ref_bin;
    cell.attack = "bpda";
    cell.targeted = targeted;
    cell.epsilon = cfg.attack.epsilon;
    cell.judge_scheme = "multinomial";
    cell.id = ref_bin_name + "/bpda" + (targeted ? "/targeted" : "/untargeted") + "/judge-multinomial";
    timed(cell, [&](CellResult& c) {
      AttackConfig a = cfg.attack;
      a.targeted = targeted;
      a.oracle = OracleKind::bpda;
      a.eval_passes = cfg.passes;
      AttackStats st = attack_model(net, ref_bin, data, a, ref_multi);
      c.clean = ref_clean;
      c.clean_single_pass = report.cell(ref_multi_name + "/none").clean_single_pass;
      c.success = st.success;
      c.adv_correct = st.defended_correct;
    });
  }

  for (std::size_t eot : cfg.eot_sweep) {
    CellResult cell;
    cell.defense = ref_multi;
    cell.attack = "through_sap";
    cell.eot_samples = eot;
    cell.epsilon = cfg.attack.epsilon;
    cell.id = ref_multi_name + "/through_sap-eot" + std::to_string(eot) + "/untargeted";
    timed(cell, [&](CellResult& c) {
      AttackConfig a = cfg.attack;
      a.oracle = OracleKind::through_sap;
      a.eot_samples = eot;
      a.eval_passes = cfg.passes;
      AttackStats st = attack_model(net, ref_multi, data, a);
      c.clean = ref_clean;
      c.clean_single_pass = report.cell(ref_multi_name + "/none").clean_single_pass;
      c.success = st.success;
      c.adv_correct = st.defended_correct;
    });
  }

  {
    SapConfig logit_avg = ref_multi;
    logit_avg.averaging = Averaging::logits;
    CellResult cell;
    cell.defense = logit_avg;
    cell.id = ref_multi_name + "-logit-averaging/none";
    timed(cell, [&](CellResult& c) {
      c.clean = detail::decision_accuracy(data, defended_decision(net, logit_avg));
      c.clean_single_pass = report.cell(ref_multi_name + "/none").clean_single_pass;
      c.adv_correct = c.clean;
      c.success = {c.clean.n - c.clean.hits, c.clean.n};
    });
  }

  report.findings = evaluate_findings(report, cfg.passes, cfg.attack.eot_samples);
  return report;
}

inline EvalReport reproduce_erratum(const ExperimentConfig& cfg, const Logger& log = {}) {
  return reproduce_erratum(cfg, prepare_model(cfg, log), log);
}

}  // namespace saplab
