#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "icepll/errors.hpp"
#include "icepll/loss.hpp"
#include "icepll/rng.hpp"
#include "icepll/tensor.hpp"

namespace icepll {

// --- layer specs -------------------------------------------------------------

struct Conv2dSpec {
  std::size_t kernel = 3;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t stride = 1;
};
struct ReluSpec {};
struct MaxPoolSpec {
  std::size_t size = 2;
};
struct GlobalAvgPoolSpec {};
struct DenseSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
};
struct DropoutSpec {
  double rate = 0.0;
};

using LayerSpec =
    std::variant<Conv2dSpec, ReluSpec, MaxPoolSpec, GlobalAvgPoolSpec, DenseSpec, DropoutSpec>;

// Convolutional classifier used throughout: two conv blocks, global average
// pooling, then the two 64-unit fully connected layers with dropout 0.25
// ahead of the 6-way output.
std::vector<LayerSpec> default_layer_spec();

// Parameter tensors for one layer (weights then bias; empty when the layer
// has no parameters).
using ParamBlock = std::vector<Tensor>;

// Activations captured by a training forward pass, consumed by backward().
struct ForwardCache {
  std::vector<Tensor> inputs;  // input to each layer
  std::vector<Tensor> aux;     // dropout masks / max-pool argmax offsets
  Tensor logits;
};

class Network {
 public:
  // Validates layer chaining (dense dimensions, conv channels, final 6-way
  // dense) and initializes weights fan-in-scaled uniform from the seed.
  // Identical (spec, seed) pairs build bit-identical parameters.
  Network(std::vector<LayerSpec> spec, std::uint64_t seed);

  const std::vector<LayerSpec>& spec() const { return spec_; }
  const std::vector<ParamBlock>& parameters() const { return params_; }
  std::vector<ParamBlock>& parameters() { return params_; }
  std::size_t parameter_count() const;

  // Input [N, C, H, W] -> logits [N, 6]. Dropout draws from `rng` only when
  // training; pass nullptr otherwise. `cache` may be null for inference.
  Tensor forward(const Tensor& batch, bool training, Rng* rng, ForwardCache* cache) const;

  // Parameter gradients for the batch whose cache is given; grad_logits is
  // dLoss/dlogits summed semantics (the caller decides mean vs sum scaling).
  std::vector<ParamBlock> backward(const ForwardCache& cache, const Tensor& grad_logits) const;

  std::vector<std::size_t> predict(const Tensor& batch) const;

 private:
  std::vector<LayerSpec> spec_;
  std::vector<ParamBlock> params_;
};

std::vector<ParamBlock> zeros_like(const std::vector<ParamBlock>& params);
std::uint64_t parameter_checksum(const Network& net);

// --- optimizer ---------------------------------------------------------------

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<ParamBlock> m;
  std::vector<ParamBlock> v;

  static AdamState init(const std::vector<ParamBlock>& params, double lr = 1e-3);
};

// One bias-corrected Adam update, in place.
void adam_step(std::vector<ParamBlock>& params, const std::vector<ParamBlock>& grads,
               AdamState& state);

// --- training ----------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  double lr = 1e-3;
  LossConfig loss;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double train_accuracy = 0.0;
};
using History = std::vector<EpochStats>;

// Mini-batch training with per-epoch seeded shuffling. `labels` are the
// vectors fed to the loss; `true_classes` ground the accuracy column.
// Deterministic for fixed (network, data, config).
History train(Network& net, const std::vector<Tensor>& inputs, const std::vector<Vec>& labels,
              const std::vector<std::size_t>& true_classes, const TrainConfig& config);

std::string history_to_json(const History& history);

// --- checkpoints ---------------------------------------------------------------
//
// Binary container: magic "TNET", a format version, the layer specs, and the
// parameter tensors as little-endian 64-bit floats.

void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

}  // namespace icepll
