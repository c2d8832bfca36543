#include "invbench/nn.hpp"

#include <cmath>
#include <random>

#include "invbench/hash.hpp"

namespace invbench::nn {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
  }
  return "linear";
}

Activation parse_activation(std::string_view name) {
  if (name == "linear") return Activation::Linear;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  throw ConfigError("unknown activation '" + std::string(name) + "'");
}

MlpSpec MlpSpec::make(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                      Activation hidden_act, Activation output_act, bool hidden_batchnorm,
                      std::uint64_t seed) {
  MlpSpec spec;
  spec.widths.push_back(in);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(out);
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    spec.activations.push_back(hidden_act);
    spec.batchnorm.push_back(hidden_batchnorm);
  }
  spec.activations.push_back(output_act);
  spec.batchnorm.push_back(false);
  spec.seed = seed;
  return spec;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigError("mlp: at least one layer (two widths) required");
  for (auto w : widths) {
    if (w == 0) throw ConfigError("mlp: layer widths must be positive");
  }
  if (activations.size() != layers() || batchnorm.size() != layers()) {
    throw ConfigError("mlp: need one activation and one batchnorm flag per layer");
  }
}

Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(spec_.seed);
  for (std::size_t i = 0; i < spec_.layers(); ++i) {
    const std::size_t in = spec_.widths[i], out = spec_.widths[i + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> w(in * out);
    for (auto& v : w) v = dist(rng);
    Layer layer;
    layer.weight = ad::Tensor::matrix(in, out, std::move(w), true);
    layer.bias = ad::Tensor::zeros({1, out}, true);
    if (spec_.batchnorm[i]) {
      layer.gamma = ad::Tensor::full({1, out}, 1.0, true);
      layer.beta = ad::Tensor::zeros({1, out}, true);
      layer.running_mean.assign(out, 0.0);
      layer.running_var.assign(out, 1.0);
    }
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(const Mlp& other) : spec_(other.spec_) {
  for (const auto& l : other.layers_) {
    Layer copy;
    copy.weight = l.weight.clone();
    copy.bias = l.bias.clone();
    if (l.gamma.defined()) {
      copy.gamma = l.gamma.clone();
      copy.beta = l.beta.clone();
    }
    copy.running_mean = l.running_mean;
    copy.running_var = l.running_var;
    layers_.push_back(std::move(copy));
  }
}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) *this = Mlp(other);
  return *this;
}

ad::Tensor Mlp::layer_forward(std::size_t i, const ad::Tensor& x, Layer* train_layer) const {
  const Layer& layer = layers_[i];
  ad::Tensor h = ad::matmul(x, layer.weight) + layer.bias;
  if (spec_.batchnorm[i]) {
    if (train_layer) {
      std::vector<double> mu, var;
      h = ad::batch_norm(h, layer.gamma, layer.beta, kBatchNormEps, &mu, &var);
      const double n = static_cast<double>(x.rows());
      for (std::size_t j = 0; j < mu.size(); ++j) {
        const double unbiased = var[j] * n / (n - 1.0);
        auto& rm = train_layer->running_mean[j];
        auto& rv = train_layer->running_var[j];
        rm = (1.0 - kBatchNormMomentum) * rm + kBatchNormMomentum * mu[j];
        rv = (1.0 - kBatchNormMomentum) * rv + kBatchNormMomentum * unbiased;
      }
    } else {
      const std::size_t w = layer.running_mean.size();
      std::vector<double> inv(w), shift(w);
      for (std::size_t j = 0; j < w; ++j) {
        inv[j] = 1.0 / std::sqrt(layer.running_var[j] + kBatchNormEps);
        shift[j] = -layer.running_mean[j] * inv[j];
      }
      const auto normalized = h * ad::Tensor::row(std::move(inv)) + ad::Tensor::row(std::move(shift));
      h = normalized * layer.gamma + layer.beta;
    }
  }
  switch (spec_.activations[i]) {
    case Activation::Relu: return ad::relu(h);
    case Activation::Tanh: return ad::tanh(h);
    case Activation::Linear: return h;
  }
  return h;
}

ad::Tensor Mlp::forward(const ad::Tensor& x, Mode mode) {
  if (x.cols() != spec_.input_width()) {
    throw ShapeError("mlp: input shape " + ad::to_string(x.shape()) + " does not match input width " +
                     std::to_string(spec_.input_width()));
  }
  ad::Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layer_forward(i, h, mode == Mode::Train ? &layers_[i] : nullptr);
  }
  return h;
}

ad::Tensor Mlp::forward(const ad::Tensor& x) const {
  if (x.cols() != spec_.input_width()) {
    throw ShapeError("mlp: input shape " + ad::to_string(x.shape()) + " does not match input width " +
                     std::to_string(spec_.input_width()));
  }
  ad::Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) h = layer_forward(i, h, nullptr);
  return h;
}

std::vector<NamedParameter> Mlp::parameters() const {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto p = "layer" + std::to_string(i);
    out.push_back({p + ".weight", layers_[i].weight});
    out.push_back({p + ".bias", layers_[i].bias});
    if (layers_[i].gamma.defined()) {
      out.push_back({p + ".gamma", layers_[i].gamma});
      out.push_back({p + ".beta", layers_[i].beta});
    }
  }
  return out;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

void Mlp::set_trainable(bool trainable) {
  for (auto& p : parameters()) {
    p.tensor.set_requires_grad(trainable);
    p.tensor.clear_grad();
  }
}

void Mlp::zero_output_layer() {
  auto& last = layers_.back();
  for (auto& v : last.weight.mutable_values()) v = 0.0;
  for (auto& v : last.bias.mutable_values()) v = 0.0;
}

void Mlp::write(Checkpoint& ckpt, std::string_view prefix) const {
  const std::string p(prefix);
  std::vector<double> widths(spec_.widths.begin(), spec_.widths.end());
  std::vector<double> acts, bn;
  for (auto a : spec_.activations) acts.push_back(static_cast<double>(static_cast<int>(a)));
  for (bool b : spec_.batchnorm) bn.push_back(b ? 1.0 : 0.0);
  ckpt.put(p + ".widths", {widths.size()}, widths);
  ckpt.put(p + ".activations", {acts.size()}, acts);
  ckpt.put(p + ".batchnorm", {bn.size()}, bn);
  for (const auto& np : parameters()) ckpt.put(p + "." + np.name, np.tensor);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (!spec_.batchnorm[i]) continue;
    const auto lp = p + ".layer" + std::to_string(i);
    ckpt.put(lp + ".running_mean", {layers_[i].running_mean.size()}, layers_[i].running_mean);
    ckpt.put(lp + ".running_var", {layers_[i].running_var.size()}, layers_[i].running_var);
  }
}

Mlp Mlp::read(const Checkpoint& ckpt, std::string_view prefix) {
  const std::string p(prefix);
  MlpSpec spec;
  spec.widths = ckpt.get_indices(p + ".widths");
  for (auto a : ckpt.get_indices(p + ".activations")) {
    if (a > 2) throw FormatError("mlp: unknown activation code in checkpoint");
    spec.activations.push_back(static_cast<Activation>(a));
  }
  for (auto b : ckpt.get_indices(p + ".batchnorm")) spec.batchnorm.push_back(b != 0);
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
  Mlp mlp(spec);
  for (auto& np : mlp.parameters()) {
    const auto& rec = ckpt.get(p + "." + np.name, np.tensor.shape());
    std::copy(rec.values.begin(), rec.values.end(), np.tensor.mutable_values().begin());
  }
  for (std::size_t i = 0; i < mlp.layers_.size(); ++i) {
    if (!spec.batchnorm[i]) continue;
    const auto lp = p + ".layer" + std::to_string(i);
    const std::vector<std::size_t> shape{spec.widths[i + 1]};
    mlp.layers_[i].running_mean = ckpt.get(lp + ".running_mean", shape).values;
    mlp.layers_[i].running_var = ckpt.get(lp + ".running_var", shape).values;
  }
  return mlp;
}

std::uint64_t Mlp::fingerprint() const {
  Fnv1a h;
  for (const auto& np : parameters()) h.update(np.tensor.values());
  for (const auto& l : layers_) {
    h.update(l.running_mean);
    h.update(l.running_var);
  }
  return h.digest();
}

}  // namespace invbench::nn
