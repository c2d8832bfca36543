#include "invbench/flows.hpp"

#include <algorithm>
#include <numeric>

#include "fit_loop.hpp"

namespace invbench::flows {

using ad::Tensor;

namespace {

nn::MlpSpec subnet(const CouplingOptions& o, std::size_t in, std::size_t out, std::uint64_t stream) {
  return nn::MlpSpec::make(in, o.hidden, out, o.activation, nn::Activation::Linear, false,
                           data::mix_seed(o.seed, stream));
}

std::size_t split_point(std::size_t width) { return width / 2; }

CouplingOptions checked(CouplingOptions o) {
  if (o.width < 2) throw ConfigError("coupling: width must be at least 2");
  if (!(o.clamp >= 0.0)) throw ConfigError("coupling: clamp must be non-negative");
  return o;
}

std::size_t passive_of(const CouplingOptions& o) {
  const std::size_t h = split_point(o.width);
  return o.passive_first ? h : o.width - h;
}

}  // namespace

// --- CouplingBlock ----------------------------------------------------------

CouplingBlock::CouplingBlock(CouplingOptions options)
    : options_(checked(std::move(options))),
      scale_(subnet(options_, passive_of(options_) + options_.condition_width, options_.width - passive_of(options_), 1)),
      translate_(
          subnet(options_, passive_of(options_) + options_.condition_width, options_.width - passive_of(options_), 2)) {
  scale_.zero_output_layer();
  if (options_.zero_translate) translate_.zero_output_layer();
  perm_ = options_.permutation;
  if (perm_.empty()) {
    perm_.resize(options_.width);
    std::iota(perm_.begin(), perm_.end(), 0);
  }
  if (perm_.size() != options_.width) throw ShapeError("coupling: permutation length does not match width");
  inverse_perm_.assign(perm_.size(), perm_.size());
  for (std::size_t j = 0; j < perm_.size(); ++j) {
    if (perm_[j] >= perm_.size() || inverse_perm_[perm_[j]] != perm_.size()) {
      throw ConfigError("coupling: permutation is not a bijection");
    }
    inverse_perm_[perm_[j]] = j;
  }
  options_.permutation = perm_;
}

std::size_t CouplingBlock::passive_width() const { return passive_of(options_); }

std::size_t CouplingBlock::active_width() const { return options_.width - passive_width(); }

Tensor CouplingBlock::passive(const Tensor& x) const {
  const std::size_t h = split_point(options_.width);
  return options_.passive_first ? ad::slice(x, 0, h) : ad::slice(x, h, options_.width);
}

Tensor CouplingBlock::active(const Tensor& x) const {
  const std::size_t h = split_point(options_.width);
  return options_.passive_first ? ad::slice(x, h, options_.width) : ad::slice(x, 0, h);
}

Tensor CouplingBlock::assemble(const Tensor& pass, const Tensor& act) const {
  return options_.passive_first ? ad::concat({pass, act}) : ad::concat({act, pass});
}

std::pair<Tensor, Tensor> CouplingBlock::scale_shift(const Tensor& pass, const Tensor& condition) const {
  if (options_.condition_width > 0) {
    if (!condition.defined() || condition.cols() != options_.condition_width || condition.rows() != pass.rows()) {
      throw ShapeError("coupling: expected a " + std::to_string(pass.rows()) + " x " +
                       std::to_string(options_.condition_width) + " condition");
    }
  } else if (condition.defined()) {
    throw ShapeError("coupling: block takes no condition");
  }
  const auto h = options_.condition_width > 0 ? ad::concat({pass, condition}) : pass;
  auto s = scale_.forward(h);
  if (options_.clamp > 0.0) s = ad::tanh(s * (1.0 / options_.clamp)) * options_.clamp;
  return {s, translate_.forward(h)};
}

FlowOutput CouplingBlock::forward(const Tensor& x, const Tensor& condition) const {
  if (x.cols() != options_.width) {
    throw ShapeError("coupling: input of shape " + ad::to_string(x.shape()) + ", expected width " +
                     std::to_string(options_.width));
  }
  const auto pass = passive(x);
  const auto [s, t] = scale_shift(pass, condition);
  const auto y = assemble(pass, active(x) * ad::exp(s) + t);
  return {ad::permute_columns(y, perm_), ad::row_sum(s)};
}

Tensor CouplingBlock::inverse(const Tensor& y, const Tensor& condition) const {
  if (y.cols() != options_.width) {
    throw ShapeError("coupling: input of shape " + ad::to_string(y.shape()) + ", expected width " +
                     std::to_string(options_.width));
  }
  const auto x = ad::permute_columns(y, inverse_perm_);
  const auto pass = passive(x);
  const auto [s, t] = scale_shift(pass, condition);
  return assemble(pass, (active(x) - t) * ad::exp(-s));
}

std::vector<nn::NamedParameter> CouplingBlock::parameters() const {
  std::vector<nn::NamedParameter> out;
  for (auto& p : scale_.parameters()) out.push_back({"scale." + p.name, p.tensor});
  for (auto& p : translate_.parameters()) out.push_back({"translate." + p.name, p.tensor});
  return out;
}

void CouplingBlock::write(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.put_scalar(prefix + ".width", static_cast<double>(options_.width));
  ckpt.put_scalar(prefix + ".condition_width", static_cast<double>(options_.condition_width));
  ckpt.put_scalar(prefix + ".passive_first", options_.passive_first ? 1.0 : 0.0);
  ckpt.put_scalar(prefix + ".clamp", options_.clamp);
  ckpt.put_indices(prefix + ".perm", perm_);
  scale_.write(ckpt, prefix + ".scale");
  translate_.write(ckpt, prefix + ".translate");
}

CouplingBlock CouplingBlock::read(const Checkpoint& ckpt, const std::string& prefix) {
  CouplingOptions o;
  o.width = static_cast<std::size_t>(ckpt.get_scalar(prefix + ".width"));
  o.condition_width = static_cast<std::size_t>(ckpt.get_scalar(prefix + ".condition_width"));
  o.passive_first = ckpt.get_scalar(prefix + ".passive_first") != 0.0;
  o.clamp = ckpt.get_scalar(prefix + ".clamp");
  o.permutation = ckpt.get_indices(prefix + ".perm");
  o.hidden.clear();
  CouplingBlock block(o);
  block.scale_ = nn::Mlp::read(ckpt, prefix + ".scale");
  block.translate_ = nn::Mlp::read(ckpt, prefix + ".translate");
  const std::size_t in = block.passive_width() + o.condition_width;
  for (const auto* net : {&block.scale_, &block.translate_}) {
    if (net->spec().input_width() != in || net->spec().output_width() != block.active_width()) {
      throw FormatError("coupling: stored subnetwork shape does not match block '" + prefix + "'");
    }
  }
  block.options_.hidden.assign(block.scale_.spec().widths.begin() + 1, block.scale_.spec().widths.end() - 1);
  return block;
}

// --- Flow -------------------------------------------------------------------

Flow::Flow(const FlowOptions& options) {
  if (options.blocks == 0) throw ConfigError("flow: at least one block required");
  std::mt19937_64 rng(data::mix_seed(options.seed, 0));
  for (std::size_t b = 0; b < options.blocks; ++b) {
    CouplingOptions o;
    o.width = options.width;
    o.condition_width = options.condition_width;
    o.passive_first = b % 2 == 0;
    o.hidden = options.hidden;
    o.activation = options.activation;
    o.clamp = options.clamp;
    o.zero_translate = options.zero_translate;
    o.seed = data::mix_seed(options.seed, b + 1);
    o.permutation.resize(options.width);
    std::iota(o.permutation.begin(), o.permutation.end(), 0);
    // Shuffle within each half so the alternating split reaches every column.
    const auto mid = o.permutation.begin() + static_cast<std::ptrdiff_t>(split_point(options.width));
    std::shuffle(o.permutation.begin(), mid, rng);
    std::shuffle(mid, o.permutation.end(), rng);
    blocks_.emplace_back(std::move(o));
  }
}

Flow::Flow(std::vector<CouplingBlock> blocks) : blocks_(std::move(blocks)) {
  if (blocks_.empty()) throw ConfigError("flow: at least one block required");
  for (const auto& b : blocks_) {
    if (b.options().width != blocks_.front().options().width) throw ShapeError("flow: blocks differ in width");
  }
}

std::size_t Flow::width() const { return blocks_.front().options().width; }

FlowOutput Flow::forward(const Tensor& x, const Tensor& condition) const {
  FlowOutput out{x, {}};
  for (const auto& block : blocks_) {
    auto step = block.forward(out.y, condition);
    out.y = step.y;
    out.logdet = out.logdet.defined() ? out.logdet + step.logdet : step.logdet;
  }
  return out;
}

Tensor Flow::inverse(const Tensor& y, const Tensor& condition) const {
  Tensor x = y;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) x = it->inverse(x, condition);
  return x;
}

std::vector<nn::NamedParameter> Flow::parameters() const {
  std::vector<nn::NamedParameter> out;
  for (std::size_t b = 0; b < blocks_.size(); ++b) {
    for (auto& p : blocks_[b].parameters()) out.push_back({"block" + std::to_string(b) + "." + p.name, p.tensor});
  }
  return out;
}

std::size_t Flow::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.tensor.numel();
  return n;
}

void Flow::write(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.put_scalar(prefix + ".blocks", static_cast<double>(blocks_.size()));
  for (std::size_t b = 0; b < blocks_.size(); ++b) blocks_[b].write(ckpt, prefix + ".block" + std::to_string(b));
}

Flow Flow::read(const Checkpoint& ckpt, const std::string& prefix) {
  const auto n = static_cast<std::size_t>(ckpt.get_scalar(prefix + ".blocks"));
  std::vector<CouplingBlock> blocks;
  for (std::size_t b = 0; b < n; ++b) blocks.push_back(CouplingBlock::read(ckpt, prefix + ".block" + std::to_string(b)));
  return Flow(std::move(blocks));
}

// --- losses -----------------------------------------------------------------

Tensor inn_loss(const Tensor& s_hat, const Tensor& s, const Tensor& z, const Tensor& logdet, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("inn_loss: sigma must be positive");
  const auto fit = ad::row_sum(ad::square(s_hat - s)) * (1.0 / (sigma * sigma));
  return ad::mean((fit + ad::row_sum(ad::square(z))) * 0.5 - logdet);
}

Tensor cinn_loss(const Tensor& z, const Tensor& logdet) {
  return ad::mean(ad::row_sum(ad::square(z)) * 0.5 - logdet);
}

double inn_loss(std::span<const double> s_hat, std::span<const double> s, std::span<const double> z, double logdet,
                double sigma) {
  if (!(sigma > 0.0)) throw DomainError("inn_loss: sigma must be positive");
  if (s_hat.size() != s.size()) throw ShapeError("inn_loss: predicted and target spectra differ in length");
  double fit = 0.0, norm = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) fit += (s_hat[k] - s[k]) * (s_hat[k] - s[k]);
  for (double v : z) norm += v * v;
  return 0.5 * (fit / (sigma * sigma) + norm) - logdet;
}

double cinn_loss(std::span<const double> z, double logdet) {
  double norm = 0.0;
  for (double v : z) norm += v * v;
  return 0.5 * norm - logdet;
}

// --- solvers ----------------------------------------------------------------

namespace {

FlowOptions flow_options(const solvers::SolverConfig& c, std::size_t width, std::size_t condition) {
  FlowOptions o;
  // With zero padding and zero translate outputs the pad path gets no gradient.
  o.zero_translate = condition > 0;
  o.width = width;
  o.condition_width = condition;
  o.blocks = c.blocks;
  o.hidden = c.hidden;
  o.activation = c.activation;
  o.clamp = c.clamp;
  o.seed = data::mix_seed(c.seed, 5);
  return o;
}

std::size_t inn_width(const solvers::SolverConfig& c, const em::TaskSpec& spec) {
  const std::size_t latent = c.inn_latent == 0 ? spec.design_dim : c.inn_latent;
  const std::size_t width = spec.spectrum_dim + latent;
  if (width < spec.design_dim) {
    throw ConfigError("inn: |s| + |z| = " + std::to_string(width) + " cannot hold a design of width " +
                      std::to_string(spec.design_dim));
  }
  return width;
}

Tensor tile(const Tensor& row, std::size_t times) {
  std::vector<double> v;
  v.reserve(row.numel() * times);
  for (std::size_t t = 0; t < times; ++t) v.insert(v.end(), row.values().begin(), row.values().end());
  return Tensor::matrix(times, row.cols(), std::move(v));
}

template <class Loss>
solvers::TrainReport fit_flow(Flow& flow, const solvers::SolverConfig& config, const char* label, std::size_t rows,
                              bool has_val, const Loss& batch_loss, const std::function<double()>& val_loss) {
  Flow best = flow;
  solvers::detail::LoopHooks hooks;
  hooks.batch_loss = batch_loss;
  if (has_val) hooks.val_loss = val_loss;
  hooks.snapshot = [&] { best = flow; };
  hooks.restore = [&] { flow = best; };
  return solvers::detail::run_training(solvers::detail::loop_spec(config, label, 11), rows, flow.parameters(), hooks);
}

}  // namespace

InvertibleNetwork::InvertibleNetwork(solvers::SolverConfig config, em::TaskSpec spec)
    : InverseSolver(std::move(config), std::move(spec)),
      latent_(inn_width(this->config(), this->spec()) - this->spec().spectrum_dim),
      flow_(flow_options(this->config(), inn_width(this->config(), this->spec()), 0)) {}

Tensor InvertibleNetwork::loss(const Batch& batch) const {
  const std::size_t n = batch.u.rows(), ds = spec().spectrum_dim;
  const auto x = pad_width() > 0
                     ? ad::concat({batch.u, Tensor::zeros({n, pad_width()})})
                     : batch.u;
  const auto out = flow_.forward(x);
  return inn_loss(ad::slice(out.y, 0, ds), batch.s, ad::slice(out.y, ds, flow_.width()), out.logdet,
                  config().sigma);
}

solvers::TrainReport InvertibleNetwork::fit(const Batch& train, const Batch& val) {
  using solvers::detail::gather_rows;
  return fit_flow(
      flow_, config(), "inn", train.u.rows(), val.u.defined(),
      [&](const std::vector<std::size_t>& idx) {
        return loss({gather_rows(train.u, idx), gather_rows(train.s, idx)});
      },
      [&] { return loss(val).item(); });
}

std::vector<double> InvertibleNetwork::propose_unit(const Tensor& s, std::size_t T, std::mt19937_64& rng,
                                                    std::vector<double>*) const {
  ad::NoGradGuard no_grad;
  const auto z = solvers::detail::normal_tensor(T, latent_, rng);
  const auto x = flow_.inverse(ad::concat({tile(s, T), z}));
  const auto g = ad::slice(x, 0, spec().design_dim);
  return {g.values().begin(), g.values().end()};
}

void InvertibleNetwork::write_state(Checkpoint& ckpt) const { flow_.write(ckpt, "inn"); }

void InvertibleNetwork::read_state(const Checkpoint& ckpt) {
  auto flow = Flow::read(ckpt, "inn");
  if (flow.width() != flow_.width()) throw FormatError("inn: stored flow width does not match the configuration");
  flow_ = std::move(flow);
}

ConditionalInvertibleNetwork::ConditionalInvertibleNetwork(solvers::SolverConfig config, em::TaskSpec spec)
    : InverseSolver(std::move(config), std::move(spec)),
      flow_(flow_options(this->config(), this->spec().design_dim, this->spec().spectrum_dim)) {}

Tensor ConditionalInvertibleNetwork::encode(const Tensor& u, const Tensor& s) const { return flow_.forward(u, s).y; }

std::pair<Tensor, Tensor> ConditionalInvertibleNetwork::normalized(const data::Dataset& data,
                                                                   data::Split split) const {
  auto b = make_batch(data, split);
  return {b.u, b.s};
}

solvers::TrainReport ConditionalInvertibleNetwork::fit(const Batch& train, const Batch& val) {
  using solvers::detail::gather_rows;
  auto loss_of = [&](const Tensor& u, const Tensor& s) {
    const auto out = flow_.forward(u, s);
    return cinn_loss(out.y, out.logdet);
  };
  return fit_flow(
      flow_, config(), "cinn", train.u.rows(), val.u.defined(),
      [&](const std::vector<std::size_t>& idx) { return loss_of(gather_rows(train.u, idx), gather_rows(train.s, idx)); },
      [&] { return loss_of(val.u, val.s).item(); });
}

std::vector<double> ConditionalInvertibleNetwork::propose_unit(const Tensor& s, std::size_t T, std::mt19937_64& rng,
                                                               std::vector<double>*) const {
  ad::NoGradGuard no_grad;
  const auto z = solvers::detail::normal_tensor(T, spec().design_dim, rng);
  const auto x = flow_.inverse(z, tile(s, T));
  return {x.values().begin(), x.values().end()};
}

void ConditionalInvertibleNetwork::write_state(Checkpoint& ckpt) const { flow_.write(ckpt, "cinn"); }

void ConditionalInvertibleNetwork::read_state(const Checkpoint& ckpt) {
  auto flow = Flow::read(ckpt, "cinn");
  if (flow.width() != flow_.width()) throw FormatError("cinn: stored flow width does not match the configuration");
  flow_ = std::move(flow);
}

}  // namespace invbench::flows
