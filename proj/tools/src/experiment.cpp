#include "experiment.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <tuple>

#include "cpga/errors.hpp"
#include "cpga/functional.hpp"
#include "cpga/metrics.hpp"
#include "cpga/random.hpp"
#include "cpga/serialization.hpp"

namespace cpga::cli {

namespace fs = std::filesystem;

namespace {

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw InvalidArgument("missing file " + p.string());
}

void check_dataset(const LabeledDataset& d, const ExperimentConfig& cfg, const std::string& what) {
  if (d.num_classes != cfg.dataset.num_classes || d.dim() != cfg.dataset.input_dim) {
    throw InvalidArgument(what + " has " + std::to_string(d.num_classes) + " classes and " +
                          std::to_string(d.dim()) + " features; config expects " +
                          std::to_string(cfg.dataset.num_classes) + " and " +
                          std::to_string(cfg.dataset.input_dim));
  }
}

}  // namespace

Domains make_domains(const ExperimentConfig& cfg) {
  const DatasetConfig& d = cfg.dataset;
  if (d.source_path.has_value() != d.target_path.has_value()) {
    throw ConfigError("dataset.source_path and dataset.target_path must be set together");
  }
  if (d.source_path) {
    require_file(*d.source_path);
    require_file(*d.target_path);
    Domains out{load_dataset_csv(*d.source_path, d.num_classes), load_dataset_csv(*d.target_path, d.num_classes)};
    check_dataset(out.source, cfg, d.source_path->string());
    check_dataset(out.target, cfg, d.target_path->string());
    return out;
  }
  const auto cs = sample_class_counts(d.source.distribution, d.num_classes, d.source.n_max);
  const auto ct = sample_class_counts(d.target.distribution, d.num_classes, d.target.n_max);
  DomainPair pair = generate_domain_pair(cfg.seed, d.num_classes, d.input_dim, cs, ct, d.resolved_shift());
  return {std::move(pair.source), std::move(pair.target)};
}

void save_domains(const Domains& d, const fs::path& dir) {
  fs::create_directories(dir);
  save_dataset_csv(d.source, dir / "source.csv");
  save_dataset_csv(d.target, dir / "target.csv");
}

TrainedSource train_source_stage(const ExperimentConfig& cfg, const LabeledDataset& source) {
  SourceModel model = train_source(source, cfg.source);
  PrototypeGenerator generator = make_generator(source.num_classes, cfg.source.feature_dim, cfg.stage1);
  train_stage1(generator, model.classifier, cfg.stage1);
  return {std::move(model), std::move(generator)};
}

void save_source_stage(const TrainedSource& s, const fs::path& dir) {
  fs::create_directories(dir);
  save_model(to_model_file(s.model.extractor), dir / "extractor.model");
  save_model(to_model_file(s.model.classifier), dir / "classifier.model");
  save_model(to_model_file(s.generator), dir / "generator.model");
}

TrainedSource load_source_stage(const fs::path& dir) {
  for (const char* f : {"extractor.model", "classifier.model", "generator.model"}) require_file(dir / f);
  SourceModel model{mlp_from_model_file(load_model(dir / "extractor.model")),
                    classifier_from_model_file(load_model(dir / "classifier.model"))};
  return {std::move(model), generator_from_model_file(load_model(dir / "generator.model"))};
}

ZeroShotOracle make_oracle(const ExperimentConfig& cfg, const LabeledDataset& target) {
  if (cfg.oracle.from_file) {
    require_file(*cfg.oracle.path);
    ZeroShotOracle o = load_oracle_csv(*cfg.oracle.path);
    o.require_size(target.size());
    if (o.num_classes() != target.num_classes) throw InvalidArgument("oracle class count does not match the target");
    return o;
  }
  const std::uint64_t oracle_seed = Rng(cfg.seed).fork(0x0c).seed();
  return ZeroShotOracle::simulated(target.y, target.num_classes, cfg.oracle.accuracy, cfg.oracle.smoothing,
                                   oracle_seed);
}

std::string shift_label(const ExperimentConfig& cfg) {
  return to_string(cfg.dataset.source.distribution.kind) + "-" + to_string(cfg.dataset.target.distribution.kind);
}

double shift_mu(const ExperimentConfig& cfg) {
  if (cfg.dataset.source.distribution.kind != DistributionKind::kBalanced) return cfg.dataset.source.distribution.mu;
  if (cfg.dataset.target.distribution.kind != DistributionKind::kBalanced) return cfg.dataset.target.distribution.mu;
  return 1.0;
}

void write_summary_header(std::ostream& out) {
  out << "method,shift,mu,overall_acc,per_class_acc,d_pdd,seed\n";
}

void write_summary_row(const SummaryRow& r, std::ostream& out) {
  out << r.method << ',' << r.shift << ',' << shortest(r.mu) << ',' << shortest(r.overall_acc) << ','
      << shortest(r.per_class_acc) << ',' << (r.d_pdd ? shortest(*r.d_pdd) : "nan") << ',' << r.seed << '\n';
}

void write_summary_csv(const std::vector<SummaryRow>& rows, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  write_summary_header(out);
  for (const SummaryRow& r : rows) write_summary_row(r, out);
}

AdaptationRun run_adaptation(const ExperimentConfig& cfg, const Domains& domains, const TrainedSource& trained) {
  AdaptationRun run;
  if (cfg.method == Method::kCpga) {
    CpgaResult r = adapt_cpga(trained.model, trained.generator, domains.target.x, cfg.stage2, domains.target.y);
    run.report = std::move(r.report);
    run.extractor = std::move(r.extractor);
    run.projector = std::move(r.projector);
    run.classifier = std::move(r.classifier);
  } else {
    const ZeroShotOracle oracle = make_oracle(cfg, domains.target);
    TcpgaResult r =
        adapt_tcpga(trained.model, trained.generator, domains.target.x, oracle, cfg.stage2, domains.target.y);
    run.report = std::move(r.report);
    run.extractor = std::move(r.extractor);
    run.projector = std::move(r.projector);
    run.classifier = std::move(r.classifier);
    run.target_classifier = std::move(r.target_classifier);
  }
  const EpochRecord& last = run.report.final();
  run.summary = {to_string(cfg.method), shift_label(cfg), shift_mu(cfg),
                 last.overall_acc,      last.per_class_acc, last.d_pdd, cfg.seed};
  return run;
}

void save_adaptation(const AdaptationRun& run, const fs::path& dir) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "report.csv", std::ios::binary);
    write_report_csv(run.report, out);
  }
  write_summary_csv({run.summary}, dir / "summary.csv");
  save_model(to_model_file(run.extractor), dir / "extractor.model");
  save_model(to_model_file(run.classifier), dir / "classifier.model");
  save_model(to_model_file(run.projector.mlp(), "projector"), dir / "projector.model");
  if (run.target_classifier) save_model(to_model_file(*run.target_classifier), dir / "target_head.model");
}

SummaryRow evaluate_models(const ExperimentConfig& cfg, const fs::path& model_dir, const LabeledDataset& target) {
  for (const char* f : {"extractor.model", "classifier.model"}) require_file(model_dir / f);
  const FeatureExtractor extractor = mlp_from_model_file(load_model(model_dir / "extractor.model"));
  const WeightNormClassifier classifier = classifier_from_model_file(load_model(model_dir / "classifier.model"));
  std::string method = "source";
  Tensor probs;
  if (fs::exists(model_dir / "target_head.model")) {
    method = "tcpga";
    const TargetClassifier head = target_classifier_from_model_file(load_model(model_dir / "target_head.model"));
    probs = predict_final(extractor, classifier, head, target.x);
  } else {
    if (fs::exists(model_dir / "projector.model")) method = "cpga";
    probs = classify(classifier, extract_features(extractor, target.x));
  }
  const EvalReport r = evaluate(argmax_rows(probs), target.y, target.num_classes);
  return {method, shift_label(cfg), shift_mu(cfg), r.overall_acc, r.per_class_acc, r.d_pdd, cfg.seed};
}

std::pair<DistributionKind, DistributionKind> parse_shift(const std::string& s) {
  const auto dash = s.find('-');
  if (dash == std::string::npos) throw ConfigError("shift must look like FLT-BLT: " + s);
  try {
    return {parse_distribution_kind(s.substr(0, dash)), parse_distribution_kind(s.substr(dash + 1))};
  } catch (const InvalidArgument& e) {
    throw ConfigError("bad shift '" + s + "': " + e.what());
  }
}

std::vector<SummaryRow> run_sweep(const ExperimentConfig& base, const SweepGrid& grid, const fs::path& out_dir) {
  std::vector<SummaryRow> rows;
  std::map<std::tuple<DistributionKind, double, std::uint64_t>, TrainedSource> cache;
  for (const auto& [source_kind, target_kind] : grid.shifts) {
    for (double mu : grid.mus) {
      for (std::uint64_t seed : grid.seeds) {
        ExperimentConfig cfg = base;
        cfg.seed = cfg.source.seed = cfg.stage1.seed = cfg.stage2.seed = seed;
        cfg.dataset.source.distribution = {source_kind, mu};
        cfg.dataset.target.distribution = {target_kind, mu};
        const Domains domains = make_domains(cfg);
        const auto key = std::make_tuple(source_kind, mu, seed);
        auto it = cache.find(key);
        if (it == cache.end()) it = cache.emplace(key, train_source_stage(cfg, domains.source)).first;
        for (Method m : grid.methods) {
          cfg.method = m;
          const AdaptationRun run = run_adaptation(cfg, domains, it->second);
          const fs::path cell =
              out_dir / (to_string(m) + "_" + shift_label(cfg) + "_mu" + shortest(mu) + "_seed" + std::to_string(seed));
          fs::create_directories(cell);
          std::ofstream report(cell / "report.csv", std::ios::binary);
          write_report_csv(run.report, report);
          rows.push_back(run.summary);
        }
      }
    }
  }
  write_summary_csv(rows, out_dir / "summary.csv");
  return rows;
}

}  // namespace cpga::cli
