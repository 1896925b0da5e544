#include "cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "config.hpp"
#include "cpga/errors.hpp"
#include "experiment.hpp"

namespace cpga::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output_dir;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("-c,--config", o.config, "YAML experiment config")->required();
  cmd->add_option("--set", o.overrides, "Override a config key: section.key=value (repeatable)");
  cmd->add_option("--seed", o.seed, "Experiment seed (overrides the config)");
  cmd->add_option("-o,--out", o.output_dir, "Output directory (overrides the config)");
}

ExperimentConfig load(const CommonOptions& o, const std::vector<std::string>& extra = {}) {
  std::vector<std::string> overrides = o.overrides;
  if (o.seed) overrides.push_back("seed=" + std::to_string(*o.seed));
  if (o.output_dir) overrides.push_back("output_dir=" + *o.output_dir);
  overrides.insert(overrides.end(), extra.begin(), extra.end());
  if (!fs::exists(o.config)) throw ConfigError("config file not found: " + o.config);
  return load_config(o.config, overrides);
}

fs::path prepare_output(const ExperimentConfig& cfg) {
  const fs::path dir = resolve_output_dir(cfg.output_dir);
  fs::create_directories(dir);
  std::ofstream(dir / "config.yaml", std::ios::binary) << dump_config(cfg);
  return dir;
}

TrainedSource obtain_source(const ExperimentConfig& cfg, const Domains& domains) {
  if (cfg.source_model_dir) return load_source_stage(*cfg.source_model_dir);
  return train_source_stage(cfg, domains.source);
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Source-free domain adaptation with generated class prototypes"};
  app.require_subcommand(1);

  CommonOptions gen_opts, train_opts, adapt_opts, eval_opts, sweep_opts;
  auto* gen = app.add_subcommand("gen-data", "Generate the source and target domains as CSV");
  add_common(gen, gen_opts);
  auto* train = app.add_subcommand("train-source", "Train the source model and the prototype generator");
  add_common(train, train_opts);
  auto* adapt = app.add_subcommand("adapt", "Run stage-2 adaptation and write the report and summary");
  add_common(adapt, adapt_opts);
  std::optional<std::string> method;
  adapt->add_option("-m,--method", method, "cpga or tcpga")->check(CLI::IsMember({"cpga", "tcpga"}));
  auto* eval = app.add_subcommand("eval", "Evaluate stored models on the target domain");
  add_common(eval, eval_opts);
  std::string model_dir;
  eval->add_option("--models", model_dir, "Directory with extractor.model and classifier.model")->required();
  auto* sweep = app.add_subcommand("sweep", "Run a grid of methods, shifts, imbalance ratios and seeds");
  add_common(sweep, sweep_opts);
  std::vector<std::string> methods{"cpga", "tcpga"}, shifts{"FLT-BLT"};
  std::vector<double> mus{100.0};
  std::vector<std::uint64_t> seeds{1};
  sweep->add_option("--methods", methods, "Comma-separated methods")->delimiter(',');
  sweep->add_option("--shifts", shifts, "Comma-separated shifts such as FLT-BLT")->delimiter(',');
  sweep->add_option("--mu", mus, "Comma-separated imbalance ratios")->delimiter(',');
  sweep->add_option("--seeds", seeds, "Comma-separated seeds")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) {
      const ExperimentConfig cfg = load(gen_opts);
      const fs::path dir = prepare_output(cfg);
      save_domains(make_domains(cfg), dir);
      out << "wrote " << (dir / "source.csv").string() << " and " << (dir / "target.csv").string() << '\n';
    } else if (*train) {
      const ExperimentConfig cfg = load(train_opts);
      const fs::path dir = prepare_output(cfg);
      const Domains domains = make_domains(cfg);
      save_source_stage(train_source_stage(cfg, domains.source), dir);
      out << "wrote source model and generator to " << dir.string() << '\n';
    } else if (*adapt) {
      std::vector<std::string> extra;
      if (method) extra.push_back("stage2.method=" + *method);
      const ExperimentConfig cfg = load(adapt_opts, extra);
      const fs::path dir = prepare_output(cfg);
      const Domains domains = make_domains(cfg);
      const AdaptationRun run = run_adaptation(cfg, domains, obtain_source(cfg, domains));
      save_adaptation(run, dir);
      write_summary_header(out);
      write_summary_row(run.summary, out);
    } else if (*eval) {
      const ExperimentConfig cfg = load(eval_opts);
      const fs::path dir = prepare_output(cfg);
      const SummaryRow row = evaluate_models(cfg, model_dir, make_domains(cfg).target);
      write_summary_csv({row}, dir / "eval.csv");
      write_summary_header(out);
      write_summary_row(row, out);
    } else if (*sweep) {
      const ExperimentConfig cfg = load(sweep_opts);
      const fs::path dir = prepare_output(cfg);
      SweepGrid grid;
      for (const auto& m : methods) grid.methods.push_back(parse_method(m));
      for (const auto& s : shifts) grid.shifts.push_back(parse_shift(s));
      grid.mus = mus;
      grid.seeds = seeds;
      const auto rows = run_sweep(cfg, grid, dir);
      out << "wrote " << rows.size() << " rows to " << (dir / "summary.csv").string() << '\n';
    }
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const std::invalid_argument& e) {
    err << "invalid input: " << e.what() << '\n';
    return 3;
  } catch (const InvalidState& e) {
    err << "invalid state: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace cpga::cli
