#include "cpga/serialization.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "cpga/errors.hpp"

namespace cpga {

const Tensor& ModelFile::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw InvalidArgument("model file of kind '" + kind + "' has no tensor '" + name + "'");
}

void write_model(const ModelFile& model, std::ostream& out) {
  out << "cpga-model " << kModelFormatVersion << '\n';
  out << "kind " << model.kind << '\n';
  out << "dims";
  for (std::size_t d : model.dims) out << ' ' << d;
  out << '\n';
  std::string line;
  char buf[32];
  for (const auto& [name, t] : model.tensors) {
    out << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    line.clear();
    for (std::size_t i = 0; i < t.numel(); ++i) {
      if (i) line += ' ';
      const auto res = std::to_chars(buf, buf + sizeof(buf), t[i]);
      line.append(buf, res.ptr);
    }
    out << line << '\n';
  }
}

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::string next(const char* what) {
    std::string line;
    if (!std::getline(in_, line)) throw ParseError(std::string("unexpected end of file, expected ") + what, line_ + 1);
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }
  bool eof() {
    return in_.peek() == std::char_traits<char>::eof();
  }
  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

std::vector<std::string> words(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

std::size_t parse_size(const std::string& s, std::size_t line) {
  std::size_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw ParseError("expected a non-negative integer, got '" + s + "'", line);
  }
  return v;
}

}  // namespace

ModelFile read_model(std::istream& in) {
  LineReader reader(in);
  ModelFile m;

  auto header = words(reader.next("format header"));
  if (header.size() != 2 || header[0] != "cpga-model") {
    throw ParseError("not a cpga-model file", reader.line());
  }
  if (parse_size(header[1], reader.line()) != static_cast<std::size_t>(kModelFormatVersion)) {
    throw ParseError("unsupported model format version " + header[1], reader.line());
  }
  auto kind = words(reader.next("kind line"));
  if (kind.size() != 2 || kind[0] != "kind") throw ParseError("expected 'kind <name>'", reader.line());
  m.kind = kind[1];
  auto dims = words(reader.next("dims line"));
  if (dims.empty() || dims[0] != "dims") throw ParseError("expected 'dims ...'", reader.line());
  for (std::size_t i = 1; i < dims.size(); ++i) m.dims.push_back(parse_size(dims[i], reader.line()));

  while (!reader.eof()) {
    const std::string head = reader.next("tensor header");
    if (head.empty()) continue;
    auto h = words(head);
    if (h.size() != 4 || h[0] != "tensor") {
      throw ParseError("expected 'tensor <name> <rows> <cols>'", reader.line());
    }
    const std::size_t rows = parse_size(h[2], reader.line());
    const std::size_t cols = parse_size(h[3], reader.line());
    const std::string body = reader.next("tensor values");
    std::vector<double> values;
    values.reserve(rows * cols);
    const char* p = body.data();
    const char* end = body.data() + body.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc() || !std::isfinite(v)) {
        throw ParseError("invalid value in tensor '" + h[1] + "'", reader.line());
      }
      values.push_back(v);
      p = res.ptr;
      if (p < end && *p != ' ') throw ParseError("invalid value in tensor '" + h[1] + "'", reader.line());
    }
    if (values.size() != rows * cols) {
      throw ParseError("tensor '" + h[1] + "' expects " + std::to_string(rows * cols) +
                           " values, got " + std::to_string(values.size()),
                       reader.line());
    }
    m.tensors.emplace_back(h[1], Tensor({rows, cols}, std::move(values)));
  }
  return m;
}

void save_model(const ModelFile& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot open " + path.string() + " for writing");
  write_model(model, out);
  if (!out) throw InvalidArgument("failed writing " + path.string());
}

ModelFile load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open model file " + path.string());
  return read_model(in);
}

ModelFile to_model_file(const Mlp& mlp, std::string kind) {
  ModelFile m;
  m.kind = std::move(kind);
  m.dims = mlp.dims();
  for (std::size_t i = 0; i < mlp.layers().size(); ++i) {
    const Linear& l = mlp.layers()[i];
    m.tensors.emplace_back("layer" + std::to_string(i) + ".weight", l.weight);
    m.tensors.emplace_back("layer" + std::to_string(i) + ".bias", l.bias);
  }
  return m;
}

Mlp mlp_from_model_file(const ModelFile& file) {
  if (file.dims.size() < 2) throw InvalidArgument("MLP model needs at least two dims");
  std::vector<Linear> layers;
  for (std::size_t i = 0; i + 1 < file.dims.size(); ++i) {
    Linear l;
    l.weight = file.tensor("layer" + std::to_string(i) + ".weight");
    l.bias = file.tensor("layer" + std::to_string(i) + ".bias");
    if (l.weight.rows() != file.dims[i + 1] || l.weight.cols() != file.dims[i] ||
        l.bias.rows() != 1 || l.bias.cols() != file.dims[i + 1]) {
      throw InvalidArgument("layer " + std::to_string(i) + " does not match the declared dims");
    }
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

ModelFile to_model_file(const WeightNormClassifier& classifier) {
  ModelFile m;
  m.kind = "weightnorm";
  m.dims = {classifier.feature_dim(), classifier.num_classes()};
  m.tensors.emplace_back("direction", classifier.direction());
  m.tensors.emplace_back("scale", classifier.scale());
  return m;
}

WeightNormClassifier classifier_from_model_file(const ModelFile& file) {
  if (file.kind != "weightnorm") {
    throw InvalidArgument("expected a weightnorm model, got '" + file.kind + "'");
  }
  WeightNormClassifier c(file.tensor("direction"), file.tensor("scale"));
  if (file.dims.size() != 2 || file.dims[0] != c.feature_dim() || file.dims[1] != c.num_classes()) {
    throw InvalidArgument("weightnorm tensors do not match the declared dims");
  }
  return c;
}

}  // namespace cpga
