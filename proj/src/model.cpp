#include "melad/model.hpp"

#include <string>

namespace melad {

namespace {

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

std::vector<float> to_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

std::string to_string(Label label) { return label == Label::benign ? "benign" : "malignant"; }

Prediction make_prediction(std::array<float, 2> logits) {
  const auto p = softmax(logits);
  Prediction pr;
  pr.logits = logits;
  pr.p_benign = p[0];
  pr.p_malignant = p[1];
  pr.tie = p[0] == p[1];
  pr.label = p[1] > p[0] ? Label::malignant : Label::benign;
  return pr;
}

Network::Network(const WeightBundle& bundle) : config_(bundle.config) {
  if (config_.reference_only) {
    throw ConfigError("architecture \"" + config_.name + "\" is reference-only, not executable");
  }
  config_.validate();
  bundle.validate();
  for (std::size_t i = 0; i < config_.layers.size(); ++i) {
    const auto& spec = config_.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    switch (spec.kind) {
      case LayerKind::conv: {
        ConvLayer c;
        c.params.kernel = bundle.get(p + "kernel");
        c.params.dilation = spec.dilation;
        c.has_bias = spec.bias;
        c.params.bias = spec.bias ? to_vector(bundle.get(p + "bias"))
                                  : std::vector<float>(spec.out_ch, 0.0f);
        c.params.validate();
        layers_.emplace_back(std::move(c));
        break;
      }
      case LayerKind::batchnorm: {
        NormLayer n;
        n.params.gamma = to_vector(bundle.get(p + "gamma"));
        n.params.beta = to_vector(bundle.get(p + "beta"));
        n.params.running_mean = to_vector(bundle.get(p + "running_mean"));
        n.params.running_var = to_vector(bundle.get(p + "running_var"));
        layers_.emplace_back(std::move(n));
        break;
      }
      case LayerKind::relu:
        layers_.emplace_back(ReluLayer{});
        break;
      case LayerKind::global_avg_pool:
        layers_.emplace_back(PoolLayer{});
        break;
      case LayerKind::softmax:
        layers_.emplace_back(SoftmaxLayer{});
        break;
      case LayerKind::dense:
        throw ConfigError("dense layers are not executable");
    }
  }
}

Tensor Network::logits(const Tensor& input) const {
  if (input.rank() != 3 && input.rank() != 4) {
    throw ShapeError("network input must be (3,H,W) or (N,3,H,W), got " +
                     shape_string(input.dims()));
  }
  if (input.channels() != config_.input.channels) {
    throw ShapeError("network expects " + std::to_string(config_.input.channels) +
                     " input channels, got " + std::to_string(input.channels()));
  }
  Tensor x = input;
  for (const auto& layer : layers_) {
    std::visit(overloaded{
                   [&](const ConvLayer& c) { x = conv2d_dilated(x, c.params); },
                   [&](const NormLayer& n) { x = batch_norm_infer(x, n.params); },
                   [&](const ReluLayer&) { relu_inplace(x); },
                   [&](const PoolLayer&) { x = global_avg_pool(x); },
                   // Softmax is applied when the logits become a Prediction.
                   [&](const SoftmaxLayer&) {},
               },
               layer);
  }
  return x;
}

Prediction Network::forward(const Tensor& image) const {
  if (image.rank() != 3) {
    throw ShapeError("forward expects one (3,H,W) image, got " + shape_string(image.dims()));
  }
  const Tensor z = logits(image);
  return make_prediction({z[0], z[1]});
}

std::vector<Prediction> Network::forward_batch(const Tensor& batch) const {
  const Tensor z = logits(batch);
  std::vector<Prediction> out;
  const std::size_t n = batch.rank() == 4 ? batch.dim(0) : 1;
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_prediction({z[2 * i], z[2 * i + 1]}));
  return out;
}

WeightBundle Network::to_bundle() const {
  WeightBundle b;
  b.config = config_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    if (const auto* c = std::get_if<ConvLayer>(&layers_[i])) {
      b.tensors.push_back({p + "kernel", c->params.kernel});
      if (c->has_bias) {
        b.tensors.push_back({p + "bias", Tensor({c->params.bias.size()}, c->params.bias)});
      }
    } else if (const auto* n = std::get_if<NormLayer>(&layers_[i])) {
      const auto& q = n->params;
      const std::size_t ch = q.channels();
      b.tensors.push_back({p + "gamma", Tensor({ch}, q.gamma)});
      b.tensors.push_back({p + "beta", Tensor({ch}, q.beta)});
      b.tensors.push_back({p + "running_mean", Tensor({ch}, q.running_mean)});
      b.tensors.push_back({p + "running_var", Tensor({ch}, q.running_var)});
    }
  }
  return b;
}

Prediction forward(const WeightBundle& weights, const Tensor& image) {
  return Network(weights).forward(image);
}

}  // namespace melad
