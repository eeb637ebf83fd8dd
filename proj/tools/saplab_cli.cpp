// saplab: command-line front end for the SAP lab.
//
//   saplab gen-data          CONFIG [--seed N] [--out DIR]
//   saplab train             CONFIG [--seed N] [--out DIR]
//   saplab eval              CONFIG [--seed N] [--out DIR]
//   saplab attack            CONFIG [--seed N] [--out DIR]
//   saplab reproduce-erratum CONFIG [--seed N] [--out DIR] [--calibrate-epsilon] [--timing]
//   saplab report            CONFIG [--out DIR]

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "saplab/saplab.hpp"

namespace fs = std::filesystem;
using namespace saplab;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path, "cannot open config");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path, e.what());
  }
}

ExperimentConfig load_config(const CommonArgs& a) {
  ExperimentConfig cfg = experiment_config_from_json(read_json(a.config), a.seed);
  if (a.out) cfg.output = *a.out;
  return cfg;
}

void log_line(const std::string& s) { std::cerr << "[saplab] " << s << '\n'; }

void add_common(CLI::App* sub, CommonArgs& args, bool with_seed = true) {
  sub->add_option("config", args.config, "JSON config path")->required()->check(CLI::ExistingFile);
  if (with_seed) sub->add_option("--seed", args.seed, "override the global seed");
  sub->add_option("--out", args.out, "output directory");
}

int gen_data(const CommonArgs& a) {
  const ExperimentConfig cfg = load_config(a);
  const SyntheticDataset ds = make_dataset(cfg.dataset);
  const fs::path path = fs::path(cfg.output) / "dataset.bin";
  fs::create_directories(path.parent_path());
  save_dataset(ds, path.string());
  std::cout << "wrote " << path.string() << " (" << ds.train.size() << " train, " << ds.test.size() << " test)\n";
  return 0;
}

int train_cmd(const CommonArgs& a) {
  ExperimentConfig cfg = load_config(a);
  cfg.checkpoint_path.reset();
  const PreparedModel pm = prepare_model(cfg, log_line);
  const fs::path path = fs::path(cfg.output) / "checkpoint.json";
  fs::create_directories(path.parent_path());
  save_checkpoint(pm.checkpoint, path.string());
  std::cout << "wrote " << path.string() << " train_acc=" << pm.checkpoint.metadata.train_accuracy
            << " test_acc=" << pm.checkpoint.metadata.test_accuracy << '\n';
  return 0;
}

SapConfig defense_of(const ExperimentConfig& cfg) {
  return cfg.sap ? *cfg.sap : cfg.reference_sap(1.0, cfg.passes, SamplingScheme::multinomial);
}

int eval_cmd(const CommonArgs& a) {
  const ExperimentConfig cfg = load_config(a);
  const PreparedModel pm = prepare_model(cfg, log_line);
  const Network& net = pm.checkpoint.network;
  const SapConfig sap = defense_of(cfg);
  SapConfig single = sap;
  single.passes = 1;
  Rate clean, defended, one_pass;
  for (std::size_t i = 0; i < pm.eval.size(); ++i) {
    const std::size_t y = pm.eval.y[i];
    clean.n++, defended.n++, one_pass.n++;
    clean.hits += predict_clean(net, pm.eval.x[i]).label == y;
    defended.hits += averaged_predict(net, pm.eval.x[i], sap, i).label == y;
    one_pass.hits += averaged_predict(net, pm.eval.x[i], single, i).label == y;
  }
  const nlohmann::json out = {{"sap", to_json(sap)},
                              {"undefended_acc", RateJson::of(clean)},
                              {"defended_acc", RateJson::of(defended)},
                              {"single_pass_acc", RateJson::of(one_pass)}};
  write_text(fs::path(cfg.output) / "eval.json", out.dump(2) + "\n");
  std::cout << out.dump(2) << '\n';
  return 0;
}

int attack_cmd(const CommonArgs& a) {
  const ExperimentConfig cfg = load_config(a);
  const PreparedModel pm = prepare_model(cfg, log_line);
  AttackConfig ac = cfg.attack;
  std::optional<SapConfig> defense = cfg.sap;
  if (defense) ac.eval_passes = defense->passes;
  const AttackStats st = attack_model(pm.checkpoint.network, defense, pm.eval, ac);
  const fs::path dir(cfg.output);
  fs::create_directories(dir);
  write_file((dir / "adversarial.sapx").string(), encode_dump(make_dump(st, pm.eval.dim)));
  const nlohmann::json out = {{"attack", to_json(ac)},
                              {"defense", defense ? to_json(*defense) : nlohmann::json(nullptr)},
                              {"success_rate", RateJson::of(st.success)},
                              {"adv_acc", RateJson::of(st.defended_correct)}};
  write_text(dir / "attack.json", out.dump(2) + "\n");
  std::cout << out.dump(2) << '\n';
  return 0;
}

int reproduce_cmd(const CommonArgs& a, bool calibrate, bool timing) {
  ExperimentConfig cfg = load_config(a);
  PreparedModel pm = prepare_model(cfg, log_line);
  if (calibrate) {
    auto eps = calibrate_epsilon(pm.checkpoint.network, pm.eval, cfg.attack, default_epsilon_grid());
    if (!eps) throw GenerationError("no epsilon on the grid reaches 95% white-box success");
    log_line("calibrated epsilon = " + nlohmann::json(*eps).dump());
    cfg.attack.epsilon = *eps;
    cfg.attack.step_size = *eps / 8.0;
  }
  const EvalReport report = reproduce_erratum(cfg, pm, log_line);
  for (const auto& p : emit_report(report, cfg.output, {ReportFormat::json, ReportFormat::csv}, timing)) {
    std::cout << "wrote " << p.string() << '\n';
  }
  for (const auto& f : report.findings) {
    std::cout << (f.pass ? "PASS " : "FAIL ") << f.id << ": " << f.values.dump() << '\n';
  }
  return 0;
}

int report_cmd(const CommonArgs& a) {
  const nlohmann::json j = read_json(a.config);
  EvalReport report;
  if (j.contains("cells")) {
    report = report_from_json(j);
  } else {
    report = load_report(j.at("report_path").get<std::string>());
  }
  const fs::path dir = a.out ? fs::path(*a.out) : fs::path(j.value("output", std::string("out")));
  for (const auto& p : emit_report(report, dir, {ReportFormat::json, ReportFormat::csv})) {
    std::cout << "wrote " << p.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"saplab: stochastic activation pruning and the attacks on it"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, attack_args, repro_args, report_args;
  bool calibrate = false;
  bool timing = false;
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic dataset");
  add_common(gen, gen_args);
  auto* tr = app.add_subcommand("train", "train the undefended classifier and write a checkpoint");
  add_common(tr, train_args);
  auto* ev = app.add_subcommand("eval", "clean accuracy, undefended and with SAP");
  add_common(ev, eval_args);
  auto* at = app.add_subcommand("attack", "run one PGD attack and dump the adversarial examples");
  add_common(at, attack_args);
  auto* rep = app.add_subcommand("reproduce-erratum", "run the full erratum grid and write the report");
  add_common(rep, repro_args);
  rep->add_flag("--calibrate-epsilon", calibrate, "choose epsilon by the white-box sweep before running");
  rep->add_flag("--timing", timing, "include wall-clock seconds in the JSON report");
  auto* rp = app.add_subcommand("report", "re-emit a report as canonical JSON and CSV");
  add_common(rp, report_args, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return gen_data(gen_args);
    if (*tr) return train_cmd(train_args);
    if (*ev) return eval_cmd(eval_args);
    if (*at) return attack_cmd(attack_args);
    if (*rep) return reproduce_cmd(repro_args, calibrate, timing);
    if (*rp) return report_cmd(report_args);
  } catch (const std::exception& e) {
    std::cerr << "saplab: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
