// glcert: experiment driver.
//
//   glcert certify     --config run.ini --out results/
//   glcert curves      --config run.ini --out results/
//   glcert label-sweep --config run.ini --out results/
//   glcert timing      --config run.ini --out results/
//   glcert gen-data    --config run.ini --out data/
//   glcert prune       --input train.csv --a 0.1 --out pruned.csv
//   glcert attack      --input data.csv --kind direct --r 0.1 --out perturbed.csv
//
// Exit codes: 0 ok, 1 a run failed or an invariant was violated (outputs are
// still written), 2 bad configuration or input.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "glcert/glcert.hpp"

namespace fs = std::filesystem;
using namespace glcert;

namespace {

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig cfg;
  if (!path.empty()) {
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::ini_parser::read_ini(path, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ConfigError(e.what());
    }
    for (const auto& [section, body] : tree) {
      if (body.empty()) throw ConfigError("setting '" + section + "' must live in a [section]");
      for (const auto& [key, value] : body) apply_setting(cfg, section + "." + key, value.get_value<std::string>());
    }
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + o + "'");
    apply_setting(cfg, o.substr(0, eq), o.substr(eq + 1));
  }
  return cfg;
}

int run_mode(Mode mode, const std::string& config, const std::vector<std::string>& overrides, const std::string& out) {
  auto cfg = load_config(config, overrides);
  cfg.mode = mode;
  validate_config(cfg);
  std::cerr << "glcert: " << to_string(mode) << " on " << cfg.data.name << " (config " << config_hash(cfg) << ")\n";
  const auto res = run_experiment(cfg);
  write_outputs(res, cfg, out);
  write_table_csv(std::cout, res.summary);
  for (const auto& e : res.errors) std::cerr << "error: " << e << '\n';
  if (res.invariant_violations) std::cerr << "invariant violations: " << res.invariant_violations << '\n';
  if (!res.calibration_ok) std::cerr << "calibration found no feasible (c, C); see calibration_*.txt\n";
  return res.ok() ? 0 : 1;
}

int gen_data(const std::string& config, const std::vector<std::string>& overrides, const std::string& out) {
  const auto cfg = load_config(config, overrides);
  fs::create_directories(out);
  for (auto seed : cfg.seeds) {
    const auto s = load_split(cfg.data, cfg.data.n_labeled, seed);
    const std::string stem = (fs::path(out) / (cfg.data.name + "_seed" + std::to_string(seed))).string();
    write_dataset_csv(stem + "_train.csv", s.train);
    write_dataset_csv(stem + "_validation.csv", s.validation);
    write_dataset_csv(stem + "_test.csv", s.test);
  }
  return 0;
}

int prune(const std::string& input, double a, const std::string& out) {
  const auto ds = read_dataset_csv(input);
  std::vector<std::string> prov;
  const auto pruned = robust_prune(ds, a, &prov);
  write_dataset_csv(out, pruned, true, &prov);
  std::cerr << "kept " << pruned.labeled_count() << " of " << ds.labeled_count() << " labeled points\n";
  return 0;
}

int attack(const std::string& input, const std::string& kind, double r, std::uint64_t seed, const std::string& sign,
           const std::string& config, const std::vector<std::string>& overrides, const std::string& out) {
  auto cfg = load_config(config, overrides);
  const auto ds = read_dataset_csv(input);
  SplitData data;
  data.train = ds.labeled_part();
  data.validation = as_queries(ds.subset(ds.unlabeled_indices()));
  detail::require(data.validation.size() >= 1, "attack: input has no unlabeled rows to attack");
  cfg.direction_sign = sign == "toward_opponent" ? DirectionSign::toward_opponent : DirectionSign::paper;
  const auto k = attack_kind_from_string(kind);
  Pipeline victim;
  victim.graph = cfg.graph;
  victim.solver = cfg.solver;
  const auto suite = prepare_attacks(cfg, {k}, data, victim, seed);
  const auto pd = run_attack(suite.spec(k, r), ds, AttackContext{&data.train});
  const auto rep = check_attack_contract(pd, r, AttackScope::unlabeled);
  write_perturbed_csv(out, pd);
  return rep.total() == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph Laplacian robustness experiments"};
  app.require_subcommand(1);
  std::string config, out = "results", input;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "key=value config with [sections]")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory");
    sub->add_option("--set", overrides, "override one setting: section.key=value");
  };
  const std::pair<const char*, Mode> modes[] = {{"certify", Mode::certify},
                                                {"curves", Mode::robust_curve},
                                                {"label-sweep", Mode::label_sweep},
                                                {"timing", Mode::timing}};
  std::vector<std::pair<CLI::App*, Mode>> mode_cmds;
  for (const auto& [name, mode] : modes) {
    auto* sub = app.add_subcommand(name, "run the " + to_string(mode) + " experiment");
    add_common(sub);
    mode_cmds.emplace_back(sub, mode);
  }
  auto* gen = app.add_subcommand("gen-data", "write train/validation/test CSVs for each seed");
  add_common(gen);

  double a = 0.0;
  auto* pr = app.add_subcommand("prune", "a-separated pruning of a dataset CSV");
  pr->add_option("--input", input, "dataset CSV")->required()->check(CLI::ExistingFile);
  pr->add_option("--a", a, "separation distance")->required();
  pr->add_option("--out", out, "output CSV")->required();

  std::string kind = "direct", sign = "paper";
  double r = 0.0;
  std::uint64_t seed = 0;
  auto* at = app.add_subcommand("attack", "perturb the unlabeled rows of a dataset CSV");
  add_common(at);
  at->add_option("--input", input, "dataset CSV (labeled rows train, unlabeled rows are attacked)")
      ->required()
      ->check(CLI::ExistingFile);
  at->add_option("--kind", kind, "direct|ksa|bb_lr|bb_nn|bb_kernel");
  at->add_option("--r", r, "l2 budget")->required();
  at->add_option("--seed", seed, "seed");
  at->add_option("--sign", sign, "paper|toward_opponent")->check(CLI::IsMember({"paper", "toward_opponent"}));

  CLI11_PARSE(app, argc, argv);
  try {
    for (const auto& [sub, mode] : mode_cmds)
      if (sub->parsed()) return run_mode(mode, config, overrides, out);
    if (gen->parsed()) return gen_data(config, overrides, out);
    if (pr->parsed()) return prune(input, a, out);
    if (at->parsed()) return attack(input, kind, r, seed, sign, config, overrides, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidArgument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const LoadError& e) {
    std::cerr << "load error: " << e.what() << '\n';
    return 2;
  } catch (const PruneInfeasible& e) {
    std::cerr << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
