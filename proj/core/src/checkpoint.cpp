#include "invbench/checkpoint.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace invbench {

namespace {

constexpr std::string_view kMagic = "IBCHK v1";

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

void Checkpoint::put(std::string name, std::vector<std::size_t> shape, std::vector<double> values) {
  if (name.empty() || std::any_of(name.begin(), name.end(), [](unsigned char c) { return std::isspace(c); })) {
    throw FormatError("checkpoint: tensor name '" + name + "' must be non-empty without whitespace");
  }
  if (shape.empty() || product(shape) != values.size()) {
    throw ShapeError("checkpoint: tensor '" + name + "' has " + std::to_string(values.size()) +
                     " values for shape " + ad::to_string(shape));
  }
  if (contains(name)) throw FormatError("checkpoint: duplicate tensor '" + name + "'");
  records_.push_back({std::move(name), std::move(shape), std::move(values)});
}

void Checkpoint::put(std::string name, const ad::Tensor& tensor) {
  put(std::move(name), tensor.shape(), std::vector<double>(tensor.values().begin(), tensor.values().end()));
}

void Checkpoint::put_indices(std::string name, std::span<const std::size_t> indices) {
  std::vector<double> values(indices.begin(), indices.end());
  put(std::move(name), {indices.size()}, std::move(values));
}

void Checkpoint::put_scalar(std::string name, double value) { put(std::move(name), {1}, {value}); }

bool Checkpoint::contains(std::string_view name) const {
  return std::any_of(records_.begin(), records_.end(), [&](const auto& r) { return r.name == name; });
}

const TensorRecord& Checkpoint::get(std::string_view name) const {
  auto it = std::find_if(records_.begin(), records_.end(), [&](const auto& r) { return r.name == name; });
  if (it == records_.end()) throw FormatError("checkpoint: missing tensor '" + std::string(name) + "'");
  return *it;
}

const TensorRecord& Checkpoint::get(std::string_view name, const std::vector<std::size_t>& expected) const {
  const auto& rec = get(name);
  if (rec.shape != expected) {
    throw ShapeError("checkpoint: tensor '" + std::string(name) + "' has shape " + ad::to_string(rec.shape) +
                     ", expected " + ad::to_string(expected));
  }
  return rec;
}

std::vector<std::size_t> Checkpoint::get_indices(std::string_view name) const {
  const auto& rec = get(name);
  std::vector<std::size_t> out;
  out.reserve(rec.values.size());
  for (double v : rec.values) {
    if (v < 0 || v != std::floor(v)) {
      throw FormatError("checkpoint: tensor '" + std::string(name) + "' is not an index array");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

double Checkpoint::get_scalar(std::string_view name) const { return get(name, {1}).values[0]; }

void Checkpoint::write(std::ostream& os) const {
  os << kMagic << '\n';
  os << std::setprecision(17);
  for (const auto& rec : records_) {
    os << "tensor " << rec.name << ' ' << rec.shape.size();
    for (auto d : rec.shape) os << ' ' << d;
    os << '\n';
    for (std::size_t i = 0; i < rec.values.size(); ++i) {
      if (i) os << ' ';
      os << rec.values[i];
    }
    os << '\n';
  }
  os << "end\n";
}

Checkpoint Checkpoint::read(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMagic) {
    throw FormatError("checkpoint: bad magic line '" + line + "'");
  }
  Checkpoint ckpt;
  std::string token;
  while (is >> token) {
    if (token == "end") return ckpt;
    if (token != "tensor") throw FormatError("checkpoint: expected 'tensor' or 'end', got '" + token + "'");
    std::string name;
    std::size_t rank = 0;
    if (!(is >> name >> rank) || rank == 0) throw FormatError("checkpoint: malformed tensor header");
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
      if (!(is >> d) || d == 0) throw FormatError("checkpoint: malformed shape for '" + name + "'");
    }
    std::vector<double> values(product(shape));
    for (auto& v : values) {
      if (!(is >> token)) throw FormatError("checkpoint: value count mismatch for '" + name + "'");
      try {
        std::size_t used = 0;
        v = std::stod(token, &used);
        if (used != token.size()) throw std::invalid_argument(token);
      } catch (const std::exception&) {
        throw FormatError("checkpoint: value count mismatch or bad number '" + token + "' in '" + name + "'");
      }
    }
    ckpt.put(std::move(name), std::move(shape), std::move(values));
  }
  throw FormatError("checkpoint: missing 'end' line");
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw MissingArtifact("checkpoint: cannot write " + path.string());
  write(os);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw MissingArtifact("checkpoint: cannot open " + path.string());
  return read(is);
}

}  // namespace invbench
