#include "icepll/net.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "binio.hpp"
#include "json.hpp"

namespace icepll {

std::vector<LayerSpec> default_layer_spec() {
  return {
      Conv2dSpec{3, 3, 8, 1},
      ReluSpec{},
      MaxPoolSpec{2},
      Conv2dSpec{3, 8, 16, 1},
      ReluSpec{},
      GlobalAvgPoolSpec{},
      DenseSpec{16, 64},
      ReluSpec{},
      DropoutSpec{0.25},
      DenseSpec{64, 64},
      ReluSpec{},
      DropoutSpec{0.25},
      DenseSpec{64, kNumClasses},
  };
}

namespace {

// Symbolic activation shape while chaining layers: an image with a channel
// count or a flat feature vector.
struct ChainState {
  bool image = false;
  std::size_t dim = 0;  // channels when image, feature width otherwise
};

ChainState chain_layer(const ChainState& s, const LayerSpec& layer, std::size_t index) {
  const std::string where = "layer " + std::to_string(index);
  if (const auto* conv = std::get_if<Conv2dSpec>(&layer)) {
    if (conv->kernel == 0 || conv->out_channels == 0 || conv->stride == 0 || conv->in_channels == 0)
      throw ShapeMismatch(where + ": conv dimensions must be positive");
    if (!s.image || s.dim != conv->in_channels)
      throw ShapeMismatch(where + ": conv expects " + std::to_string(conv->in_channels) +
                          " input channels");
    return {true, conv->out_channels};
  }
  if (std::holds_alternative<ReluSpec>(layer)) return s;
  if (std::holds_alternative<MaxPoolSpec>(layer)) {
    if (!s.image) throw ShapeMismatch(where + ": max-pool needs an image input");
    if (std::get<MaxPoolSpec>(layer).size == 0) throw ShapeMismatch(where + ": pool size must be positive");
    return s;
  }
  if (std::holds_alternative<GlobalAvgPoolSpec>(layer)) {
    if (!s.image) throw ShapeMismatch(where + ": global pooling needs an image input");
    return {false, s.dim};
  }
  if (const auto* dense = std::get_if<DenseSpec>(&layer)) {
    if (dense->in_dim == 0 || dense->out_dim == 0)
      throw ShapeMismatch(where + ": dense dimensions must be positive");
    if (s.image || s.dim != dense->in_dim)
      throw ShapeMismatch(where + ": dense expects width " + std::to_string(dense->in_dim));
    return {false, dense->out_dim};
  }
  const auto& drop = std::get<DropoutSpec>(layer);
  if (!(drop.rate >= 0.0 && drop.rate < 1.0))
    throw ShapeMismatch(where + ": dropout rate must lie in [0, 1)");
  return s;
}

ChainState initial_state(const LayerSpec& first) {
  if (const auto* conv = std::get_if<Conv2dSpec>(&first)) return {true, conv->in_channels};
  if (const auto* dense = std::get_if<DenseSpec>(&first)) return {false, dense->in_dim};
  throw ShapeMismatch("first layer must be Conv2d or Dense");
}

}  // namespace

Network::Network(std::vector<LayerSpec> spec, std::uint64_t seed) : spec_(std::move(spec)) {
  if (spec_.empty()) throw ShapeMismatch("network needs at least one layer");
  ChainState state = initial_state(spec_.front());
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    state = chain_layer(state, spec_[i], i);
  }
  const auto* last = std::get_if<DenseSpec>(&spec_.back());
  if (!last || last->out_dim != kNumClasses)
    throw ShapeMismatch("final layer must be Dense with " + std::to_string(kNumClasses) +
                        " outputs");

  Rng rng(seed);
  params_.resize(spec_.size());
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    if (const auto* conv = std::get_if<Conv2dSpec>(&spec_[i])) {
      Tensor w({conv->out_channels, conv->in_channels, conv->kernel, conv->kernel});
      const double limit =
          std::sqrt(6.0 / static_cast<double>(conv->in_channels * conv->kernel * conv->kernel));
      for (double& v : w.data) v = rng.uniform(-limit, limit);
      Tensor b({conv->out_channels});
      params_[i] = {std::move(w), std::move(b)};
    } else if (const auto* dense = std::get_if<DenseSpec>(&spec_[i])) {
      Tensor w({dense->out_dim, dense->in_dim});
      const double limit = std::sqrt(6.0 / static_cast<double>(dense->in_dim));
      for (double& v : w.data) v = rng.uniform(-limit, limit);
      Tensor b({dense->out_dim});
      params_[i] = {std::move(w), std::move(b)};
    }
  }
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& block : params_)
    for (const auto& t : block) n += t.size();
  return n;
}

namespace {

Tensor conv_forward(const Tensor& in, const Tensor& w, const Tensor& b, std::size_t stride) {
  const std::size_t n = in.shape[0], ci = in.shape[1], h = in.shape[2], wd = in.shape[3];
  const std::size_t co = w.shape[0], k = w.shape[2];
  if (h < k || wd < k) throw ShapeMismatch("conv kernel larger than input");
  const std::size_t ho = (h - k) / stride + 1;
  const std::size_t wo = (wd - k) / stride + 1;
  Tensor out({n, co, ho, wo});
  for (std::size_t in_i = 0; in_i < n; ++in_i) {
    const double* img = in.data.data() + in_i * ci * h * wd;
    double* res = out.data.data() + in_i * co * ho * wo;
    for (std::size_t oc = 0; oc < co; ++oc) {
      double* plane = res + oc * ho * wo;
      const double bias = b[oc];
      for (std::size_t p = 0; p < ho * wo; ++p) plane[p] = bias;
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const double* chan = img + ic * h * wd;
        const double* ker = w.data.data() + (oc * ci + ic) * k * k;
        for (std::size_t kh = 0; kh < k; ++kh) {
          for (std::size_t kw = 0; kw < k; ++kw) {
            const double wv = ker[kh * k + kw];
            for (std::size_t y = 0; y < ho; ++y) {
              const double* src = chan + (y * stride + kh) * wd + kw;
              double* dst = plane + y * wo;
              for (std::size_t x = 0; x < wo; ++x) dst[x] += wv * src[x * stride];
            }
          }
        }
      }
    }
  }
  return out;
}

void conv_backward(const Tensor& in, const Tensor& w, std::size_t stride, const Tensor& grad_out,
                   Tensor& dw, Tensor& db, Tensor& din) {
  const std::size_t n = in.shape[0], ci = in.shape[1], h = in.shape[2], wd = in.shape[3];
  const std::size_t co = w.shape[0], k = w.shape[2];
  const std::size_t ho = grad_out.shape[2], wo = grad_out.shape[3];
  for (std::size_t in_i = 0; in_i < n; ++in_i) {
    const double* img = in.data.data() + in_i * ci * h * wd;
    double* dimg = din.data.data() + in_i * ci * h * wd;
    const double* gres = grad_out.data.data() + in_i * co * ho * wo;
    for (std::size_t oc = 0; oc < co; ++oc) {
      const double* gplane = gres + oc * ho * wo;
      double bias_sum = 0.0;
      for (std::size_t p = 0; p < ho * wo; ++p) bias_sum += gplane[p];
      db[oc] += bias_sum;
      for (std::size_t ic = 0; ic < ci; ++ic) {
        const double* chan = img + ic * h * wd;
        double* dchan = dimg + ic * h * wd;
        const double* ker = w.data.data() + (oc * ci + ic) * k * k;
        double* dker = dw.data.data() + (oc * ci + ic) * k * k;
        for (std::size_t kh = 0; kh < k; ++kh) {
          for (std::size_t kw = 0; kw < k; ++kw) {
            const double wv = ker[kh * k + kw];
            double acc = 0.0;
            for (std::size_t y = 0; y < ho; ++y) {
              const double* src = chan + (y * stride + kh) * wd + kw;
              double* dsrc = dchan + (y * stride + kh) * wd + kw;
              const double* g = gplane + y * wo;
              for (std::size_t x = 0; x < wo; ++x) {
                acc += g[x] * src[x * stride];
                dsrc[x * stride] += g[x] * wv;
              }
            }
            dker[kh * k + kw] += acc;
          }
        }
      }
    }
  }
}

Tensor maxpool_forward(const Tensor& in, std::size_t m, Tensor* argmax) {
  const std::size_t n = in.shape[0], c = in.shape[1], h = in.shape[2], w = in.shape[3];
  if (h < m || w < m) throw ShapeMismatch("pool window larger than input");
  const std::size_t ho = h / m, wo = w / m;
  Tensor out({n, c, ho, wo});
  if (argmax) *argmax = Tensor({n, c, ho, wo});
  for (std::size_t i = 0; i < n * c; ++i) {
    const double* plane = in.data.data() + i * h * w;
    double* res = out.data.data() + i * ho * wo;
    double* arg = argmax ? argmax->data.data() + i * ho * wo : nullptr;
    for (std::size_t y = 0; y < ho; ++y) {
      for (std::size_t x = 0; x < wo; ++x) {
        std::size_t best = (y * m) * w + (x * m);
        double best_v = plane[best];
        for (std::size_t dy = 0; dy < m; ++dy) {
          for (std::size_t dx = 0; dx < m; ++dx) {
            const std::size_t at = (y * m + dy) * w + (x * m + dx);
            if (plane[at] > best_v) {
              best_v = plane[at];
              best = at;
            }
          }
        }
        res[y * wo + x] = best_v;
        if (arg) arg[y * wo + x] = static_cast<double>(best);
      }
    }
  }
  return out;
}

Tensor dense_forward(const Tensor& in, const Tensor& w, const Tensor& b) {
  const std::size_t n = in.shape[0], d = in.shape[1], o = w.shape[0];
  Tensor out({n, o});
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = in.data.data() + i * d;
    double* res = out.data.data() + i * o;
    for (std::size_t j = 0; j < o; ++j) {
      const double* wr = w.data.data() + j * d;
      double acc = b[j];
      for (std::size_t x = 0; x < d; ++x) acc += wr[x] * row[x];
      res[j] = acc;
    }
  }
  return out;
}

void dense_backward(const Tensor& in, const Tensor& w, const Tensor& grad_out, Tensor& dw,
                    Tensor& db, Tensor& din) {
  const std::size_t n = in.shape[0], d = in.shape[1], o = w.shape[0];
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = in.data.data() + i * d;
    const double* g = grad_out.data.data() + i * o;
    double* dr = din.data.data() + i * d;
    for (std::size_t j = 0; j < o; ++j) {
      const double gv = g[j];
      db[j] += gv;
      const double* wr = w.data.data() + j * d;
      double* dwr = dw.data.data() + j * d;
      for (std::size_t x = 0; x < d; ++x) {
        dwr[x] += gv * row[x];
        dr[x] += gv * wr[x];
      }
    }
  }
}

}  // namespace

Tensor Network::forward(const Tensor& batch, bool training, Rng* rng, ForwardCache* cache) const {
  if (const auto* conv = std::get_if<Conv2dSpec>(&spec_.front())) {
    if (batch.shape.size() != 4 || batch.shape[1] != conv->in_channels)
      throw ShapeMismatch("expected input [N, " + std::to_string(conv->in_channels) + ", H, W]");
  } else if (const auto* dense = std::get_if<DenseSpec>(&spec_.front())) {
    if (batch.shape.size() != 2 || batch.shape[1] != dense->in_dim)
      throw ShapeMismatch("expected input [N, " + std::to_string(dense->in_dim) + "]");
  }
  if (cache) {
    cache->inputs.clear();
    cache->aux.assign(spec_.size(), Tensor{});
  }

  Tensor current = batch;
  for (std::size_t i = 0; i < spec_.size(); ++i) {
    if (cache) cache->inputs.push_back(current);
    const Tensor& in = cache ? cache->inputs.back() : current;
    Tensor next;
    if (const auto* conv = std::get_if<Conv2dSpec>(&spec_[i])) {
      next = conv_forward(in, params_[i][0], params_[i][1], conv->stride);
    } else if (std::holds_alternative<ReluSpec>(spec_[i])) {
      next = in;
      for (double& v : next.data) v = v > 0.0 ? v : 0.0;
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&spec_[i])) {
      next = maxpool_forward(in, pool->size, cache ? &cache->aux[i] : nullptr);
    } else if (std::holds_alternative<GlobalAvgPoolSpec>(spec_[i])) {
      const std::size_t n = in.shape[0], c = in.shape[1], hw = in.shape[2] * in.shape[3];
      next = Tensor({n, c});
      for (std::size_t j = 0; j < n * c; ++j) {
        const double* plane = in.data.data() + j * hw;
        double acc = 0.0;
        for (std::size_t p = 0; p < hw; ++p) acc += plane[p];
        next.data[j] = acc / static_cast<double>(hw);
      }
    } else if (const auto* dense = std::get_if<DenseSpec>(&spec_[i])) {
      if (in.shape.size() != 2 || in.shape[1] != dense->in_dim)
        throw ShapeMismatch("dense input width mismatch");
      next = dense_forward(in, params_[i][0], params_[i][1]);
    } else {
      const auto& drop = std::get<DropoutSpec>(spec_[i]);
      next = in;
      if (training && drop.rate > 0.0) {
        const double keep = 1.0 - drop.rate;
        Tensor mask(in.shape);
        for (std::size_t j = 0; j < mask.size(); ++j) {
          mask.data[j] = (rng && rng->uniform() < keep) ? 1.0 / keep : 0.0;
          next.data[j] *= mask.data[j];
        }
        if (cache) cache->aux[i] = std::move(mask);
      }
    }
    current = std::move(next);
  }
  if (cache) cache->logits = current;
  return current;
}

std::vector<ParamBlock> Network::backward(const ForwardCache& cache,
                                          const Tensor& grad_logits) const {
  if (cache.inputs.size() != spec_.size())
    throw StaleCache("cache covers " + std::to_string(cache.inputs.size()) + " of " +
                     std::to_string(spec_.size()) + " layers");
  if (!grad_logits.same_shape(cache.logits))
    throw StaleCache("gradient shape does not match cached logits");

  std::vector<ParamBlock> grads = zeros_like(params_);
  Tensor grad = grad_logits;
  for (std::size_t idx = spec_.size(); idx-- > 0;) {
    const Tensor& in = cache.inputs[idx];
    Tensor din(in.shape);
    if (const auto* conv = std::get_if<Conv2dSpec>(&spec_[idx])) {
      conv_backward(in, params_[idx][0], conv->stride, grad, grads[idx][0], grads[idx][1], din);
    } else if (std::holds_alternative<ReluSpec>(spec_[idx])) {
      for (std::size_t j = 0; j < in.size(); ++j) din.data[j] = in.data[j] > 0.0 ? grad.data[j] : 0.0;
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&spec_[idx])) {
      (void)pool;
      const Tensor& arg = cache.aux[idx];
      const std::size_t planes = in.shape[0] * in.shape[1];
      const std::size_t hw = in.shape[2] * in.shape[3];
      const std::size_t ohw = grad.shape[2] * grad.shape[3];
      for (std::size_t pl = 0; pl < planes; ++pl) {
        double* dst = din.data.data() + pl * hw;
        const double* g = grad.data.data() + pl * ohw;
        const double* a = arg.data.data() + pl * ohw;
        for (std::size_t p = 0; p < ohw; ++p) dst[static_cast<std::size_t>(a[p])] += g[p];
      }
    } else if (std::holds_alternative<GlobalAvgPoolSpec>(spec_[idx])) {
      const std::size_t hw = in.shape[2] * in.shape[3];
      const double scale = 1.0 / static_cast<double>(hw);
      for (std::size_t j = 0; j < in.shape[0] * in.shape[1]; ++j) {
        double* dst = din.data.data() + j * hw;
        const double gv = grad.data[j] * scale;
        for (std::size_t p = 0; p < hw; ++p) dst[p] = gv;
      }
    } else if (std::holds_alternative<DenseSpec>(spec_[idx])) {
      dense_backward(in, params_[idx][0], grad, grads[idx][0], grads[idx][1], din);
    } else {
      const Tensor& mask = cache.aux[idx];
      if (mask.size() == in.size()) {
        for (std::size_t j = 0; j < in.size(); ++j) din.data[j] = grad.data[j] * mask.data[j];
      } else {
        din = grad;  // inference-style pass or rate 0: identity
      }
    }
    grad = std::move(din);
  }
  return grads;
}

std::vector<std::size_t> Network::predict(const Tensor& batch) const {
  const Tensor logits = forward(batch, false, nullptr, nullptr);
  const std::size_t n = logits.shape[0], l = logits.shape[1];
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data.data() + i * l;
    std::size_t best = 0;
    for (std::size_t j = 1; j < l; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[i] = best;
  }
  return out;
}

std::vector<ParamBlock> zeros_like(const std::vector<ParamBlock>& params) {
  std::vector<ParamBlock> out(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    out[i].reserve(params[i].size());
    for (const auto& t : params[i]) out[i].emplace_back(t.shape);
  }
  return out;
}

std::uint64_t parameter_checksum(const Network& net) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& block : net.parameters()) {
    for (const auto& t : block) {
      for (double v : t.data) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
        h = fnv1a(b, 8, h);
      }
    }
  }
  return h;
}

AdamState AdamState::init(const std::vector<ParamBlock>& params, double lr) {
  AdamState s;
  s.lr = lr;
  s.m = zeros_like(params);
  s.v = zeros_like(params);
  return s;
}

void adam_step(std::vector<ParamBlock>& params, const std::vector<ParamBlock>& grads,
               AdamState& state) {
  if (grads.size() != params.size()) throw LengthMismatch(params.size(), grads.size());
  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (std::size_t j = 0; j < params[i].size(); ++j) {
      Tensor& p = params[i][j];
      const Tensor& g = grads[i][j];
      Tensor& m = state.m[i][j];
      Tensor& v = state.v[i][j];
      if (!p.same_shape(g)) throw ShapeMismatch("gradient tensor shape differs from parameter");
      for (std::size_t x = 0; x < p.size(); ++x) {
        m.data[x] = state.beta1 * m.data[x] + (1.0 - state.beta1) * g.data[x];
        v.data[x] = state.beta2 * v.data[x] + (1.0 - state.beta2) * g.data[x] * g.data[x];
        const double mhat = m.data[x] / bc1;
        const double vhat = v.data[x] / bc2;
        p.data[x] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
      }
    }
  }
}

History train(Network& net, const std::vector<Tensor>& inputs, const std::vector<Vec>& labels,
              const std::vector<std::size_t>& true_classes, const TrainConfig& config) {
  if (inputs.empty()) throw EmptyDataset();
  if (inputs.size() != labels.size()) throw LengthMismatch(inputs.size(), labels.size());
  if (inputs.size() != true_classes.size()) throw LengthMismatch(inputs.size(), true_classes.size());
  if (config.epochs == 0) throw InvalidSpec("epochs must be >= 1");
  if (config.batch_size == 0) throw InvalidSpec("batch size must be >= 1");

  const std::size_t n = inputs.size();
  const std::size_t bs = std::min(config.batch_size, n);

  AdamState adam = AdamState::init(net.parameters(), config.lr);
  Rng shuffle_rng(derive_seed(config.seed, 0x5f0f));
  Rng dropout_rng(derive_seed(config.seed, 0xd0d0));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  // Batch tensors are assembled by copying sample planes into a contiguous
  // buffer; labels ride alongside in the same order.
  const auto& sample_shape = inputs[0].shape;
  std::vector<std::size_t> batch_shape;
  batch_shape.push_back(bs);
  for (std::size_t d : sample_shape) batch_shape.push_back(d);

  History history;
  history.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      std::vector<std::size_t> shape = batch_shape;
      shape[0] = count;
      Tensor batch(shape);
      const std::size_t stride = inputs[0].size();
      for (std::size_t b = 0; b < count; ++b) {
        const Tensor& src = inputs[order[start + b]];
        std::copy(src.data.begin(), src.data.end(), batch.data.begin() + b * stride);
      }

      ForwardCache cache;
      Tensor logits = net.forward(batch, true, &dropout_rng, &cache);
      const std::size_t l = logits.shape[1];
      Tensor grad_logits(logits.shape);
      for (std::size_t b = 0; b < count; ++b) {
        Vec z(logits.data.begin() + b * l, logits.data.begin() + (b + 1) * l);
        const Vec& y = labels[order[start + b]];
        loss_sum += loss_value(softmax(z), y, config.loss);
        const Vec g = loss_gradient(z, y, config.loss);
        for (std::size_t j = 0; j < l; ++j) {
          grad_logits.data[b * l + j] = g[j] / static_cast<double>(count);
        }
      }
      auto grads = net.backward(cache, grad_logits);
      adam_step(net.parameters(), grads, adam);
    }

    // Training accuracy is measured in inference mode over the whole set.
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t count = std::min(bs, n - start);
      std::vector<std::size_t> shape = batch_shape;
      shape[0] = count;
      Tensor batch(shape);
      const std::size_t stride = inputs[0].size();
      for (std::size_t b = 0; b < count; ++b) {
        const Tensor& src = inputs[start + b];
        std::copy(src.data.begin(), src.data.end(), batch.data.begin() + b * stride);
      }
      const auto preds = net.predict(batch);
      for (std::size_t b = 0; b < count; ++b) {
        if (preds[b] == true_classes[start + b]) ++correct;
      }
    }

    history.push_back({epoch, loss_sum / static_cast<double>(n),
                       static_cast<double>(correct) / static_cast<double>(n)});
  }
  return history;
}

std::string history_to_json(const History& history) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : history) {
    j.push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"train_accuracy", e.train_accuracy}});
  }
  return j.dump(2);
}

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

enum LayerTag : std::uint32_t {
  kTagConv = 0,
  kTagRelu = 1,
  kTagMaxPool = 2,
  kTagGlobalAvgPool = 3,
  kTagDense = 4,
  kTagDropout = 5,
};

}  // namespace

void save_checkpoint(const Network& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
  out.write("TNET", 4);
  binio::write_u32(out, kCheckpointVersion);
  binio::write_u32(out, static_cast<std::uint32_t>(net.spec().size()));
  for (const auto& layer : net.spec()) {
    if (const auto* conv = std::get_if<Conv2dSpec>(&layer)) {
      binio::write_u32(out, kTagConv);
      binio::write_u32(out, static_cast<std::uint32_t>(conv->kernel));
      binio::write_u32(out, static_cast<std::uint32_t>(conv->in_channels));
      binio::write_u32(out, static_cast<std::uint32_t>(conv->out_channels));
      binio::write_u32(out, static_cast<std::uint32_t>(conv->stride));
    } else if (std::holds_alternative<ReluSpec>(layer)) {
      binio::write_u32(out, kTagRelu);
    } else if (const auto* pool = std::get_if<MaxPoolSpec>(&layer)) {
      binio::write_u32(out, kTagMaxPool);
      binio::write_u32(out, static_cast<std::uint32_t>(pool->size));
    } else if (std::holds_alternative<GlobalAvgPoolSpec>(layer)) {
      binio::write_u32(out, kTagGlobalAvgPool);
    } else if (const auto* dense = std::get_if<DenseSpec>(&layer)) {
      binio::write_u32(out, kTagDense);
      binio::write_u32(out, static_cast<std::uint32_t>(dense->in_dim));
      binio::write_u32(out, static_cast<std::uint32_t>(dense->out_dim));
    } else {
      binio::write_u32(out, kTagDropout);
      binio::write_f64(out, std::get<DropoutSpec>(layer).rate);
    }
  }
  for (const auto& block : net.parameters()) {
    binio::write_u32(out, static_cast<std::uint32_t>(block.size()));
    for (const auto& t : block) {
      binio::write_u32(out, static_cast<std::uint32_t>(t.shape.size()));
      for (std::size_t d : t.shape) binio::write_u64(out, d);
      for (double v : t.data) binio::write_f64(out, v);
    }
  }
}

Network load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::string(magic, 4) != "TNET")
    throw FormatError("not a checkpoint file: " + path);
  const std::uint32_t version = binio::read_u32(in);
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t n_layers = binio::read_u32(in);
  std::vector<LayerSpec> spec;
  spec.reserve(n_layers);
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    switch (binio::read_u32(in)) {
      case kTagConv: {
        Conv2dSpec c;
        c.kernel = binio::read_u32(in);
        c.in_channels = binio::read_u32(in);
        c.out_channels = binio::read_u32(in);
        c.stride = binio::read_u32(in);
        spec.emplace_back(c);
        break;
      }
      case kTagRelu: spec.emplace_back(ReluSpec{}); break;
      case kTagMaxPool: spec.emplace_back(MaxPoolSpec{binio::read_u32(in)}); break;
      case kTagGlobalAvgPool: spec.emplace_back(GlobalAvgPoolSpec{}); break;
      case kTagDense: {
        DenseSpec d;
        d.in_dim = binio::read_u32(in);
        d.out_dim = binio::read_u32(in);
        spec.emplace_back(d);
        break;
      }
      case kTagDropout: spec.emplace_back(DropoutSpec{binio::read_f64(in)}); break;
      default: throw FormatError("unknown layer tag in checkpoint");
    }
  }
  Network net(std::move(spec), 0);
  for (auto& block : net.parameters()) {
    const std::uint32_t n_tensors = binio::read_u32(in);
    if (n_tensors != block.size()) throw FormatError("checkpoint parameter block mismatch");
    for (auto& t : block) {
      const std::uint32_t ndim = binio::read_u32(in);
      std::vector<std::size_t> shape(ndim);
      for (auto& d : shape) d = binio::read_u64(in);
      if (shape != t.shape) throw FormatError("checkpoint tensor shape mismatch");
      for (double& v : t.data) v = binio::read_f64(in);
    }
  }
  return net;
}

}  // namespace icepll
