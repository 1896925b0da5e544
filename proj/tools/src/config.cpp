#include "config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <initializer_list>
#include <numbers>
#include <sstream>
#include <string_view>

#include <yaml-cpp/yaml.h>

namespace cpga::cli {

Method parse_method(const std::string& s) {
  if (s == "cpga") return Method::kCpga;
  if (s == "tcpga") return Method::kTcpga;
  throw ConfigError("unknown method '" + s + "' (expected cpga or tcpga)");
}

std::string to_string(Method m) { return m == Method::kCpga ? "cpga" : "tcpga"; }

DomainShiftSpec DatasetConfig::resolved_shift() const {
  DomainShiftSpec s = shift;
  s.rotation_angle = rotation_deg * std::numbers::pi / 180.0;
  return s;
}

namespace {

void check_keys(const YAML::Node& node, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!node) return;
  if (!node.IsMap()) throw ConfigError(where.empty() ? "config root must be a mapping" : "'" + where + "' must be a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    bool known = false;
    for (std::string_view a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + (where.empty() ? key : where + "." + key) + "'");
  }
}

template <typename T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
  if (!node) return;
  const YAML::Node v = node[key];
  if (!v) return;
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      const auto s = v.as<std::string>();
      if (!s.empty() && s.front() == '-') throw YAML::Exception(v.Mark(), "negative");
    }
    out = v.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + where + "." + key + "'");
  }
}

void read_path(const YAML::Node& node, const char* key, std::optional<std::filesystem::path>& out,
               const std::string& where) {
  std::string s;
  read(node, key, s, where);
  if (!s.empty()) out = s;
}

void read_counts(const YAML::Node& node, DomainCounts& out, const std::string& where) {
  check_keys(node, {"distribution", "mu", "n_max"}, where);
  std::string kind = to_string(out.distribution.kind);
  read(node, "distribution", kind, where);
  try {
    out.distribution.kind = parse_distribution_kind(kind);
  } catch (const std::exception&) {
    throw ConfigError("bad value for '" + where + ".distribution': " + kind);
  }
  read(node, "mu", out.distribution.mu, where);
  read(node, "n_max", out.n_max, where);
}

YAML::Node with_override(const YAML::Node& node, const std::vector<std::string>& parts,
                         std::size_t i, const YAML::Node& value) {
  YAML::Node out = (node && node.IsMap()) ? YAML::Clone(node) : YAML::Node(YAML::NodeType::Map);
  if (i + 1 == parts.size()) {
    out[parts[i]] = value;
  } else {
    const YAML::Node child = (node && node.IsMap()) ? node[parts[i]] : YAML::Node();
    out[parts[i]] = with_override(child, parts, i + 1, value);
  }
  return out;
}

YAML::Node apply_override(const YAML::Node& root, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must be key.path=value: " + spec);
  std::vector<std::string> parts;
  std::stringstream keys(spec.substr(0, eq));
  for (std::string part; std::getline(keys, part, '.');) {
    if (part.empty()) throw ConfigError("empty key segment in override: " + spec);
    parts.push_back(part);
  }
  YAML::Node value;
  try {
    value = YAML::Load(spec.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("bad override value in '" + spec + "': " + e.msg);
  }
  return with_override(root, parts, 0, value);
}

ExperimentConfig from_yaml(const YAML::Node& root) {
  ExperimentConfig c;
  check_keys(root, {"seed", "output_dir", "dataset", "source_training", "stage1", "stage2", "oracle"}, "");
  read(root, "seed", c.seed, "");
  std::string out = c.output_dir.string();
  read(root, "output_dir", out, "");
  c.output_dir = out;

  const YAML::Node d = root["dataset"];
  check_keys(d, {"num_classes", "input_dim", "source", "target", "shift", "source_path", "target_path"},
             "dataset");
  if (d) {
    read(d, "num_classes", c.dataset.num_classes, "dataset");
    read(d, "input_dim", c.dataset.input_dim, "dataset");
    read_counts(d["source"], c.dataset.source, "dataset.source");
    read_counts(d["target"], c.dataset.target, "dataset.target");
    const YAML::Node s = d["shift"];
    check_keys(s, {"rotation_deg", "translation_scale", "noise_sigma_source", "noise_sigma_target",
                   "mean_separation"},
               "dataset.shift");
    read(s, "rotation_deg", c.dataset.rotation_deg, "dataset.shift");
    read(s, "translation_scale", c.dataset.shift.translation_scale, "dataset.shift");
    read(s, "noise_sigma_source", c.dataset.shift.noise_sigma_source, "dataset.shift");
    read(s, "noise_sigma_target", c.dataset.shift.noise_sigma_target, "dataset.shift");
    read(s, "mean_separation", c.dataset.shift.mean_separation, "dataset.shift");
    read_path(d, "source_path", c.dataset.source_path, "dataset");
    read_path(d, "target_path", c.dataset.target_path, "dataset");
  }

  const YAML::Node st = root["source_training"];
  check_keys(st, {"label_smoothing", "learning_rate", "momentum", "weight_decay", "epochs", "batch_size",
                  "hidden_dims", "feature_dim", "model_dir"},
             "source_training");
  read(st, "label_smoothing", c.source.label_smoothing, "source_training");
  read(st, "learning_rate", c.source.learning_rate, "source_training");
  read(st, "momentum", c.source.momentum, "source_training");
  read(st, "weight_decay", c.source.weight_decay, "source_training");
  read(st, "epochs", c.source.epochs, "source_training");
  read(st, "batch_size", c.source.batch_size, "source_training");
  read(st, "hidden_dims", c.source.hidden_dims, "source_training");
  read(st, "feature_dim", c.source.feature_dim, "source_training");
  read_path(st, "model_dir", c.source_model_dir, "source_training");

  const YAML::Node s1 = root["stage1"];
  check_keys(s1, {"epochs", "batches_per_epoch", "prototypes_per_class", "temperature", "learning_rate",
                  "momentum", "noise_dim", "hidden_dim", "use_contrastive"},
             "stage1");
  read(s1, "epochs", c.stage1.epochs, "stage1");
  read(s1, "batches_per_epoch", c.stage1.batches_per_epoch, "stage1");
  read(s1, "prototypes_per_class", c.stage1.prototypes_per_class, "stage1");
  read(s1, "temperature", c.stage1.temperature, "stage1");
  read(s1, "learning_rate", c.stage1.learning_rate, "stage1");
  read(s1, "momentum", c.stage1.momentum, "stage1");
  read(s1, "noise_dim", c.stage1.noise_dim, "stage1");
  read(s1, "hidden_dim", c.stage1.hidden_dim, "stage1");
  read(s1, "use_contrastive", c.stage1.use_contrastive, "stage1");

  const YAML::Node s2 = root["stage2"];
  check_keys(s2, {"method", "epochs", "temperature", "beta", "lambda", "eta", "learning_rate", "momentum",
                  "weight_decay", "batch_size", "projector_dims", "confidence_weighting",
                  "update_source_classifier"},
             "stage2");
  std::string method = to_string(c.method);
  read(s2, "method", method, "stage2");
  c.method = parse_method(method);
  read(s2, "epochs", c.stage2.epochs, "stage2");
  read(s2, "temperature", c.stage2.temperature, "stage2");
  read(s2, "beta", c.stage2.beta, "stage2");
  read(s2, "lambda", c.stage2.lambda, "stage2");
  read(s2, "eta", c.stage2.eta, "stage2");
  read(s2, "learning_rate", c.stage2.learning_rate, "stage2");
  read(s2, "momentum", c.stage2.momentum, "stage2");
  read(s2, "weight_decay", c.stage2.weight_decay, "stage2");
  read(s2, "batch_size", c.stage2.batch_size, "stage2");
  read(s2, "projector_dims", c.stage2.projector_dims, "stage2");
  read(s2, "confidence_weighting", c.stage2.confidence_weighting, "stage2");
  read(s2, "update_source_classifier", c.stage2.update_source_classifier, "stage2");

  const YAML::Node o = root["oracle"];
  check_keys(o, {"mode", "accuracy", "smoothing", "path"}, "oracle");
  std::string mode = "simulated";
  read(o, "mode", mode, "oracle");
  if (mode != "simulated" && mode != "file") {
    throw ConfigError("bad value for 'oracle.mode': " + mode + " (expected simulated or file)");
  }
  c.oracle.from_file = mode == "file";
  read(o, "accuracy", c.oracle.accuracy, "oracle");
  read(o, "smoothing", c.oracle.smoothing, "oracle");
  read_path(o, "path", c.oracle.path, "oracle");
  if (c.oracle.from_file && !c.oracle.path) throw ConfigError("oracle.mode is file but oracle.path is unset");
  c.stage2.oracle_accuracy = c.oracle.accuracy;
  c.stage2.oracle_smoothing = c.oracle.smoothing;
  return c;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError("config parse error: " + e.msg + " (line " + std::to_string(e.mark.line + 1) + ")");
  }
  if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
  for (const std::string& o : overrides) root = apply_override(root, o);
  ExperimentConfig cfg = from_yaml(root);
  cfg.source.seed = cfg.stage1.seed = cfg.stage2.seed = cfg.seed;
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), overrides);
}

std::string dump_config(const ExperimentConfig& c) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  auto counts = [&](const char* key, const DomainCounts& d) {
    e << YAML::Key << key << YAML::Value << YAML::BeginMap;
    e << YAML::Key << "distribution" << YAML::Value << to_string(d.distribution.kind);
    e << YAML::Key << "mu" << YAML::Value << d.distribution.mu;
    e << YAML::Key << "n_max" << YAML::Value << d.n_max;
    e << YAML::EndMap;
  };
  auto dims = [&](const std::vector<std::size_t>& v) {
    e << YAML::Flow << YAML::BeginSeq;
    for (std::size_t x : v) e << x;
    e << YAML::EndSeq;
  };
  e << YAML::BeginMap;
  e << YAML::Key << "seed" << YAML::Value << c.seed;
  e << YAML::Key << "output_dir" << YAML::Value << c.output_dir.string();

  e << YAML::Key << "dataset" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "num_classes" << YAML::Value << c.dataset.num_classes;
  e << YAML::Key << "input_dim" << YAML::Value << c.dataset.input_dim;
  counts("source", c.dataset.source);
  counts("target", c.dataset.target);
  e << YAML::Key << "shift" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "rotation_deg" << YAML::Value << c.dataset.rotation_deg;
  e << YAML::Key << "translation_scale" << YAML::Value << c.dataset.shift.translation_scale;
  e << YAML::Key << "noise_sigma_source" << YAML::Value << c.dataset.shift.noise_sigma_source;
  e << YAML::Key << "noise_sigma_target" << YAML::Value << c.dataset.shift.noise_sigma_target;
  e << YAML::Key << "mean_separation" << YAML::Value << c.dataset.shift.mean_separation;
  e << YAML::EndMap;
  if (c.dataset.source_path) e << YAML::Key << "source_path" << YAML::Value << c.dataset.source_path->string();
  if (c.dataset.target_path) e << YAML::Key << "target_path" << YAML::Value << c.dataset.target_path->string();
  e << YAML::EndMap;

  e << YAML::Key << "source_training" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "label_smoothing" << YAML::Value << c.source.label_smoothing;
  e << YAML::Key << "learning_rate" << YAML::Value << c.source.learning_rate;
  e << YAML::Key << "momentum" << YAML::Value << c.source.momentum;
  e << YAML::Key << "weight_decay" << YAML::Value << c.source.weight_decay;
  e << YAML::Key << "epochs" << YAML::Value << c.source.epochs;
  e << YAML::Key << "batch_size" << YAML::Value << c.source.batch_size;
  e << YAML::Key << "hidden_dims" << YAML::Value;
  dims(c.source.hidden_dims);
  e << YAML::Key << "feature_dim" << YAML::Value << c.source.feature_dim;
  if (c.source_model_dir) e << YAML::Key << "model_dir" << YAML::Value << c.source_model_dir->string();
  e << YAML::EndMap;

  e << YAML::Key << "stage1" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "epochs" << YAML::Value << c.stage1.epochs;
  e << YAML::Key << "batches_per_epoch" << YAML::Value << c.stage1.batches_per_epoch;
  e << YAML::Key << "prototypes_per_class" << YAML::Value << c.stage1.prototypes_per_class;
  e << YAML::Key << "temperature" << YAML::Value << c.stage1.temperature;
  e << YAML::Key << "learning_rate" << YAML::Value << c.stage1.learning_rate;
  e << YAML::Key << "momentum" << YAML::Value << c.stage1.momentum;
  e << YAML::Key << "noise_dim" << YAML::Value << c.stage1.noise_dim;
  e << YAML::Key << "hidden_dim" << YAML::Value << c.stage1.hidden_dim;
  e << YAML::Key << "use_contrastive" << YAML::Value << c.stage1.use_contrastive;
  e << YAML::EndMap;

  e << YAML::Key << "stage2" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "method" << YAML::Value << to_string(c.method);
  e << YAML::Key << "epochs" << YAML::Value << c.stage2.epochs;
  e << YAML::Key << "temperature" << YAML::Value << c.stage2.temperature;
  e << YAML::Key << "beta" << YAML::Value << c.stage2.beta;
  e << YAML::Key << "lambda" << YAML::Value << c.stage2.lambda;
  e << YAML::Key << "eta" << YAML::Value << c.stage2.eta;
  e << YAML::Key << "learning_rate" << YAML::Value << c.stage2.learning_rate;
  e << YAML::Key << "momentum" << YAML::Value << c.stage2.momentum;
  e << YAML::Key << "weight_decay" << YAML::Value << c.stage2.weight_decay;
  e << YAML::Key << "batch_size" << YAML::Value << c.stage2.batch_size;
  e << YAML::Key << "projector_dims" << YAML::Value;
  dims(c.stage2.projector_dims);
  e << YAML::Key << "confidence_weighting" << YAML::Value << c.stage2.confidence_weighting;
  e << YAML::Key << "update_source_classifier" << YAML::Value << c.stage2.update_source_classifier;
  e << YAML::EndMap;

  e << YAML::Key << "oracle" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "mode" << YAML::Value << (c.oracle.from_file ? "file" : "simulated");
  e << YAML::Key << "accuracy" << YAML::Value << c.oracle.accuracy;
  e << YAML::Key << "smoothing" << YAML::Value << c.oracle.smoothing;
  if (c.oracle.path) e << YAML::Key << "path" << YAML::Value << c.oracle.path->string();
  e << YAML::EndMap;
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

std::filesystem::path resolve_output_dir(const std::filesystem::path& dir) {
  if (dir.is_absolute()) return dir;
  if (const char* root = std::getenv("CPGA_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / dir;
  return dir;
}

}  // namespace cpga::cli
