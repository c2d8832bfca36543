#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "invbench/checkpoint.hpp"
#include "invbench/tensor.hpp"

namespace invbench::nn {

enum class Activation { Linear, Relu, Tanh };

const char* to_string(Activation a);
Activation parse_activation(std::string_view name);

enum class Mode { Train, Eval };

// widths = {input, hidden..., output}; one activation and batchnorm flag per
// affine layer (widths.size() - 1 entries each).
struct MlpSpec {
  std::vector<std::size_t> widths;
  std::vector<Activation> activations;
  std::vector<bool> batchnorm;
  std::uint64_t seed = 0;

  // Hidden layers share `hidden` and the batchnorm flag; the output layer is
  // affine followed by `output` and never normalized.
  static MlpSpec make(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                      Activation hidden_act, Activation output_act, bool hidden_batchnorm,
                      std::uint64_t seed);

  std::size_t layers() const { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t input_width() const { return widths.front(); }
  std::size_t output_width() const { return widths.back(); }
  void validate() const;
};

struct NamedParameter {
  std::string name;
  ad::Tensor tensor;
};

inline constexpr double kBatchNormMomentum = 0.1;
inline constexpr double kBatchNormEps = 1e-5;

// Multi-layer perceptron: affine -> (batchnorm) -> activation per layer.
// Copies are deep: parameters and running statistics are duplicated.
class Mlp {
 public:
  explicit Mlp(MlpSpec spec);
  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  const MlpSpec& spec() const { return spec_; }

  // Train mode uses batch statistics and updates the running averages.
  ad::Tensor forward(const ad::Tensor& x, Mode mode);
  // Always evaluates with running statistics.
  ad::Tensor forward(const ad::Tensor& x) const;

  std::vector<NamedParameter> parameters() const;
  std::size_t parameter_count() const;
  void set_trainable(bool trainable);
  // Zeroes the final layer so the network initially outputs exactly zero.
  void zero_output_layer();

  // Parameters, running statistics and the architecture under `prefix`.
  void write(Checkpoint& ckpt, std::string_view prefix) const;
  static Mlp read(const Checkpoint& ckpt, std::string_view prefix);
  // FNV-1a hash of every parameter and running-statistic bit pattern.
  std::uint64_t fingerprint() const;

 private:
  struct Layer {
    ad::Tensor weight;  // in x out
    ad::Tensor bias;    // 1 x out
    ad::Tensor gamma;   // 1 x out, batchnorm only
    ad::Tensor beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
  };

  // Running statistics are updated through `train_layer` when non-null.
  ad::Tensor layer_forward(std::size_t i, const ad::Tensor& x, Layer* train_layer) const;

  MlpSpec spec_;
  std::vector<Layer> layers_;
};

}  // namespace invbench::nn
