#include "uap/diffnet.hpp"

#include "uap/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace uap {

namespace {

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

using Vec = Eigen::VectorXd;
using ConstRowMap = Eigen::Map<const RowMatrix>;
using RowMap = Eigen::Map<RowMatrix>;

std::string layer_label(std::size_t index, const Layer& layer) {
    return "layer " + std::to_string(index) + " (" + to_string(layer_kind(layer)) + ")";
}

RowMatrix im2col(const Conv2dLayer& conv, const Vec& input) {
    const auto oh = conv.out_h(), ow = conv.out_w(), k = conv.kernel, c = conv.in_c;
    RowMatrix patches(static_cast<Eigen::Index>(oh * ow), static_cast<Eigen::Index>(k * k * c));
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            double* row = patches.row(static_cast<Eigen::Index>(oy * ow + ox)).data();
            for (std::size_t ky = 0; ky < k; ++ky) {
                const double* src = input.data() + ((oy * conv.stride + ky) * conv.in_w + ox * conv.stride) * c;
                std::copy(src, src + k * c, row + ky * k * c);
            }
        }
    return patches;
}

void col2im_add(const Conv2dLayer& conv, const RowMatrix& dpatches, Vec& dinput) {
    const auto oh = conv.out_h(), ow = conv.out_w(), k = conv.kernel, c = conv.in_c;
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const double* row = dpatches.row(static_cast<Eigen::Index>(oy * ow + ox)).data();
            for (std::size_t ky = 0; ky < k; ++ky) {
                double* dst = dinput.data() + ((oy * conv.stride + ky) * conv.in_w + ox * conv.stride) * c;
                const double* src = row + ky * k * c;
                for (std::size_t j = 0; j < k * c; ++j) dst[j] += src[j];
            }
        }
}

// Activations of every layer; acts[0] is the scaled input, acts[i + 1] the
// output of layer i. pool_index[i] holds argmax positions for max-pool layers.
struct Trace {
    std::vector<Vec> acts;
    std::vector<std::vector<std::size_t>> pool_index;
};

struct ParamGrads {
    std::vector<RowMatrix> weights;
    std::vector<Vec> bias;

    explicit ParamGrads(const Network& net) {
        for (const auto& layer : net.layers()) {
            std::visit(overloaded{[&](const DenseLayer& d) {
                                      weights.push_back(RowMatrix::Zero(d.weights.rows(), d.weights.cols()));
                                      bias.push_back(Vec::Zero(d.bias.size()));
                                  },
                                  [&](const Conv2dLayer& cv) {
                                      weights.push_back(RowMatrix::Zero(cv.weights.rows(), cv.weights.cols()));
                                      bias.push_back(Vec::Zero(cv.bias.size()));
                                  },
                                  [&](const auto&) {
                                      weights.emplace_back();
                                      bias.emplace_back();
                                  }},
                       layer);
        }
    }

    void set_zero() {
        for (auto& w : weights) w.setZero();
        for (auto& b : bias) b.setZero();
    }
};

void check_input(const Network& net, const Tensor& image) {
    if (image.shape() != net.input_shape())
        throw std::invalid_argument("input shape " + shape_string(image.shape()) + " does not match " +
                                    layer_label(0, net.layers().front()) + ", which expects " +
                                    shape_string(net.input_shape()));
}

// Runs every layer except the final softmax; acts.back() are the logits.
Trace run_forward(const Network& net, const Tensor& image) {
    check_input(net, image);
    const auto& layers = net.layers();
    Trace t;
    t.acts.reserve(layers.size() + 1);
    t.pool_index.resize(layers.size());
    t.acts.push_back(image.values() * net.input_scale());

    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        const Vec& in = t.acts.back();
        Vec out = std::visit(
            overloaded{
                [&](const DenseLayer& d) -> Vec { return d.weights * in + d.bias; },
                [&](const Conv2dLayer& cv) -> Vec {
                    const RowMatrix patches = im2col(cv, in);
                    RowMatrix y = patches * cv.weights;
                    y.rowwise() += cv.bias.transpose();
                    return Eigen::Map<const Vec>(y.data(), y.size());
                },
                [&](const ReluLayer&) -> Vec { return in.cwiseMax(0.0); },
                [&](const MaxPool2dLayer& mp) -> Vec {
                    const auto oh = mp.out_h(), ow = mp.out_w(), c = mp.channels;
                    Vec y(static_cast<Eigen::Index>(oh * ow * c));
                    auto& idx = t.pool_index[i];
                    idx.assign(oh * ow * c, 0);
                    for (std::size_t oy = 0; oy < oh; ++oy)
                        for (std::size_t ox = 0; ox < ow; ++ox)
                            for (std::size_t ch = 0; ch < c; ++ch) {
                                std::size_t best = ((oy * mp.stride) * mp.in_w + ox * mp.stride) * c + ch;
                                for (std::size_t py = 0; py < mp.size; ++py)
                                    for (std::size_t px = 0; px < mp.size; ++px) {
                                        const std::size_t j =
                                            ((oy * mp.stride + py) * mp.in_w + ox * mp.stride + px) * c + ch;
                                        if (in[static_cast<Eigen::Index>(j)] > in[static_cast<Eigen::Index>(best)])
                                            best = j;
                                    }
                                const std::size_t o = (oy * ow + ox) * c + ch;
                                idx[o] = best;
                                y[static_cast<Eigen::Index>(o)] = in[static_cast<Eigen::Index>(best)];
                            }
                    return y;
                },
                [&](const FlattenLayer&) -> Vec { return in; },
                [&](const SoftmaxLayer&) -> Vec { throw std::logic_error("softmax before the final layer"); },
            },
            layers[i]);
        t.acts.push_back(std::move(out));
    }
    return t;
}

Vec softmax(const Vec& z) {
    Vec e = (z.array() - z.maxCoeff()).exp();
    return e / e.sum();
}

// Gradient of the loss with respect to the logits.
Vec loss_logit_gradient(const Network& net, const Vec& probs, ClassId label) {
    const double w = net.class_weights()[label];
    Vec g = Vec::Zero(probs.size());
    if (probs[static_cast<Eigen::Index>(label)] < kProbabilityFloor) return g;
    g = w * probs;
    g[static_cast<Eigen::Index>(label)] -= w;
    return g;
}

double loss_from_probs(const Network& net, const Vec& probs, ClassId label) {
    const double p = std::max(probs[static_cast<Eigen::Index>(label)], kProbabilityFloor);
    return -net.class_weights()[label] * std::log(p);
}

// Back-propagates dlogits through layers [0, L-1); returns the gradient with
// respect to the scaled input. Parameter gradients accumulate into grads.
Vec run_backward(const Network& net, const Trace& t, Vec grad, ParamGrads* grads) {
    const auto& layers = net.layers();
    for (std::size_t ii = layers.size() - 1; ii-- > 0;) {
        const Vec& in = t.acts[ii];
        const bool need_input_grad = ii > 0 || grads == nullptr;
        grad = std::visit(
            overloaded{
                [&](const DenseLayer& d) -> Vec {
                    if (grads) {
                        grads->weights[ii].noalias() += grad * in.transpose();
                        grads->bias[ii] += grad;
                    }
                    if (!need_input_grad) return Vec();
                    return d.weights.transpose() * grad;
                },
                [&](const Conv2dLayer& cv) -> Vec {
                    const auto rows = static_cast<Eigen::Index>(cv.out_h() * cv.out_w());
                    ConstRowMap dy(grad.data(), rows, static_cast<Eigen::Index>(cv.out_c));
                    if (grads) {
                        const RowMatrix patches = im2col(cv, in);
                        grads->weights[ii].noalias() += patches.transpose() * dy;
                        grads->bias[ii] += dy.colwise().sum().transpose();
                    }
                    if (!need_input_grad) return Vec();
                    const RowMatrix dpatches = dy * cv.weights.transpose();
                    Vec dx = Vec::Zero(in.size());
                    col2im_add(cv, dpatches, dx);
                    return dx;
                },
                [&](const ReluLayer&) -> Vec { return (in.array() > 0.0).select(grad, 0.0); },
                [&](const MaxPool2dLayer&) -> Vec {
                    Vec dx = Vec::Zero(in.size());
                    const auto& idx = t.pool_index[ii];
                    for (std::size_t o = 0; o < idx.size(); ++o)
                        dx[static_cast<Eigen::Index>(idx[o])] += grad[static_cast<Eigen::Index>(o)];
                    return dx;
                },
                [&](const FlattenLayer&) -> Vec { return grad; },
                [&](const SoftmaxLayer&) -> Vec { throw std::logic_error("softmax before the final layer"); },
            },
            layers[ii]);
    }
    return grad;
}

double he_limit(std::size_t fan_in) { return std::sqrt(6.0 / static_cast<double>(fan_in)); }

}  // namespace

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::MaxPool2d: return "maxpool2d";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::Softmax: return "softmax";
    }
    return "unknown";
}

LayerKind layer_kind(const Layer& layer) {
    return std::visit(overloaded{[](const DenseLayer&) { return LayerKind::Dense; },
                                 [](const Conv2dLayer&) { return LayerKind::Conv2d; },
                                 [](const ReluLayer&) { return LayerKind::Relu; },
                                 [](const MaxPool2dLayer&) { return LayerKind::MaxPool2d; },
                                 [](const FlattenLayer&) { return LayerKind::Flatten; },
                                 [](const SoftmaxLayer&) { return LayerKind::Softmax; }},
                      layer);
}

Shape layer_input_shape(const Layer& layer) {
    return std::visit(overloaded{[](const DenseLayer& d) { return d.in_shape; },
                                 [](const Conv2dLayer& c) { return Shape{c.in_h, c.in_w, c.in_c}; },
                                 [](const ReluLayer& r) { return r.shape; },
                                 [](const MaxPool2dLayer& m) { return Shape{m.in_h, m.in_w, m.channels}; },
                                 [](const FlattenLayer& f) { return f.in_shape; },
                                 [](const SoftmaxLayer& s) { return Shape{s.classes}; }},
                      layer);
}

Shape layer_output_shape(const Layer& layer) {
    return std::visit(overloaded{[](const DenseLayer& d) { return Shape{d.out_size()}; },
                                 [](const Conv2dLayer& c) { return Shape{c.out_h(), c.out_w(), c.out_c}; },
                                 [](const ReluLayer& r) { return r.shape; },
                                 [](const MaxPool2dLayer& m) { return Shape{m.out_h(), m.out_w(), m.channels}; },
                                 [](const FlattenLayer& f) { return Shape{shape_size(f.in_shape)}; },
                                 [](const SoftmaxLayer& s) { return Shape{s.classes}; }},
                      layer);
}

Network::Network(Shape input_shape, std::vector<Layer> layers, std::vector<double> class_weights, double input_scale)
    : input_shape_(std::move(input_shape)),
      layers_(std::move(layers)),
      class_weights_(std::move(class_weights)),
      input_scale_(input_scale) {
    if (layers_.empty()) throw std::invalid_argument("network has no layers");
    const auto* sm = std::get_if<SoftmaxLayer>(&layers_.back());
    if (!sm) throw std::invalid_argument("final " + layer_label(layers_.size() - 1, layers_.back()) + " must be softmax");
    num_classes_ = sm->classes;
    if (class_weights_.empty()) class_weights_.assign(num_classes_, 1.0);
    validate();
}

void Network::validate() const {
    if (!(input_scale_ > 0.0) || !std::isfinite(input_scale_))
        throw std::invalid_argument("input scale must be positive and finite");
    if (num_classes_ == 0) throw std::invalid_argument("softmax layer has zero classes");
    if (class_weights_.size() != num_classes_)
        throw std::invalid_argument("expected " + std::to_string(num_classes_) + " class weights, got " +
                                    std::to_string(class_weights_.size()));
    for (double w : class_weights_)
        if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("class weights must be positive and finite");

    Shape current = input_shape_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        const Layer& layer = layers_[i];
        const Shape expected = layer_input_shape(layer);
        const bool flat_ok = std::holds_alternative<DenseLayer>(layer) || std::holds_alternative<SoftmaxLayer>(layer);
        const bool compatible = flat_ok ? shape_size(expected) == shape_size(current) : expected == current;
        if (!compatible)
            throw std::invalid_argument(layer_label(i, layer) + " expects input " + shape_string(expected) +
                                        " but receives " + shape_string(current));
        if (std::holds_alternative<SoftmaxLayer>(layer) && i + 1 != layers_.size())
            throw std::invalid_argument(layer_label(i, layer) + " must be the final layer");
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            if (d->bias.size() != d->weights.rows() || d->in_size() != shape_size(d->in_shape))
                throw std::invalid_argument(layer_label(i, layer) + " has inconsistent weight shapes");
        }
        if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
            if (c->kernel == 0 || c->stride == 0 || c->kernel > c->in_h || c->kernel > c->in_w)
                throw std::invalid_argument(layer_label(i, layer) + " has a kernel that does not fit its input");
            if (static_cast<std::size_t>(c->weights.rows()) != c->kernel * c->kernel * c->in_c ||
                static_cast<std::size_t>(c->weights.cols()) != c->out_c ||
                static_cast<std::size_t>(c->bias.size()) != c->out_c)
                throw std::invalid_argument(layer_label(i, layer) + " has inconsistent weight shapes");
        }
        if (const auto* m = std::get_if<MaxPool2dLayer>(&layer)) {
            if (m->size == 0 || m->stride == 0 || m->size > m->in_h || m->size > m->in_w)
                throw std::invalid_argument(layer_label(i, layer) + " has a window that does not fit its input");
        }
        current = layer_output_shape(layer);
    }
}

Network Network::build(const Shape& input_shape, std::span<const LayerSpec> specs, std::uint64_t seed,
                       double input_scale) {
    Rng rng(seed, streams::kWeightInit);
    std::vector<Layer> layers;
    Shape current = input_shape;
    auto require_hwc = [&](const char* what) {
        if (current.size() != 3)
            throw std::invalid_argument(std::string(what) + " at layer " + std::to_string(layers.size()) +
                                        " needs H x W x C input, got " + shape_string(current));
    };
    for (const auto& spec : specs) {
        std::visit(overloaded{
                       [&](const DenseSpec& s) {
                           if (s.units == 0) throw std::invalid_argument("dense layer needs units > 0");
                           DenseLayer d;
                           d.in_shape = current;
                           const auto in = shape_size(current);
                           d.weights.resize(static_cast<Eigen::Index>(s.units), static_cast<Eigen::Index>(in));
                           const double lim = he_limit(in);
                           for (Eigen::Index r = 0; r < d.weights.rows(); ++r)
                               for (Eigen::Index c = 0; c < d.weights.cols(); ++c) d.weights(r, c) = rng.uniform(-lim, lim);
                           d.bias = Vec::Zero(static_cast<Eigen::Index>(s.units));
                           layers.emplace_back(std::move(d));
                       },
                       [&](const Conv2dSpec& s) {
                           require_hwc("conv2d");
                           if (s.out_channels == 0 || s.kernel == 0 || s.stride == 0)
                               throw std::invalid_argument("conv2d needs positive channels, kernel and stride");
                           Conv2dLayer c;
                           c.in_h = current[0];
                           c.in_w = current[1];
                           c.in_c = current[2];
                           c.out_c = s.out_channels;
                           c.kernel = s.kernel;
                           c.stride = s.stride;
                           if (c.kernel > c.in_h || c.kernel > c.in_w)
                               throw std::invalid_argument("conv2d kernel larger than its input " + shape_string(current));
                           const auto fan_in = c.kernel * c.kernel * c.in_c;
                           c.weights.resize(static_cast<Eigen::Index>(fan_in), static_cast<Eigen::Index>(c.out_c));
                           const double lim = he_limit(fan_in);
                           for (Eigen::Index r = 0; r < c.weights.rows(); ++r)
                               for (Eigen::Index col = 0; col < c.weights.cols(); ++col)
                                   c.weights(r, col) = rng.uniform(-lim, lim);
                           c.bias = Vec::Zero(static_cast<Eigen::Index>(c.out_c));
                           layers.emplace_back(std::move(c));
                       },
                       [&](const ReluSpec&) { layers.emplace_back(ReluLayer{current}); },
                       [&](const MaxPool2dSpec& s) {
                           require_hwc("maxpool2d");
                           if (s.size == 0 || s.stride == 0 || s.size > current[0] || s.size > current[1])
                               throw std::invalid_argument("maxpool2d window does not fit input " + shape_string(current));
                           layers.emplace_back(MaxPool2dLayer{current[0], current[1], current[2], s.size, s.stride});
                       },
                       [&](const FlattenSpec&) { layers.emplace_back(FlattenLayer{current}); },
                       [&](const SoftmaxSpec&) { layers.emplace_back(SoftmaxLayer{shape_size(current)}); },
                   },
                   spec);
        current = layer_output_shape(layers.back());
    }
    return Network(input_shape, std::move(layers), {}, input_scale);
}

void Network::set_class_weights(std::vector<double> weights) {
    auto old = std::move(class_weights_);
    class_weights_ = std::move(weights);
    try {
        validate();
    } catch (...) {
        class_weights_ = std::move(old);
        throw;
    }
}

std::size_t Network::parameter_count() const {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        if (const auto* d = std::get_if<DenseLayer>(&layer)) n += d->weights.size() + d->bias.size();
        if (const auto* c = std::get_if<Conv2dLayer>(&layer)) n += c->weights.size() + c->bias.size();
    }
    return n;
}

bool operator==(const Network& a, const Network& b) {
    if (a.input_shape_ != b.input_shape_ || a.class_weights_ != b.class_weights_ || a.input_scale_ != b.input_scale_ ||
        a.layers_.size() != b.layers_.size())
        return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
        const auto& la = a.layers_[i];
        const auto& lb = b.layers_[i];
        if (layer_kind(la) != layer_kind(lb) || layer_input_shape(la) != layer_input_shape(lb) ||
            layer_output_shape(la) != layer_output_shape(lb))
            return false;
        if (const auto* d = std::get_if<DenseLayer>(&la)) {
            const auto& e = std::get<DenseLayer>(lb);
            if (d->weights != e.weights || d->bias != e.bias) return false;
        }
        if (const auto* c = std::get_if<Conv2dLayer>(&la)) {
            const auto& e = std::get<Conv2dLayer>(lb);
            if (c->stride != e.stride || c->kernel != e.kernel || c->weights != e.weights || c->bias != e.bias)
                return false;
        }
        if (const auto* m = std::get_if<MaxPool2dLayer>(&la)) {
            const auto& e = std::get<MaxPool2dLayer>(lb);
            if (m->size != e.size || m->stride != e.stride) return false;
        }
    }
    return true;
}

Eigen::VectorXd logits(const Network& net, const Tensor& image) { return run_forward(net, image).acts.back(); }

Eigen::VectorXd forward(const Network& net, const Tensor& image) { return softmax(logits(net, image)); }

ClassId argmax(const Eigen::Ref<const Eigen::VectorXd>& scores) {
    if (scores.size() == 0) throw std::invalid_argument("argmax of an empty vector");
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < scores.size(); ++i)
        if (scores[i] > scores[best]) best = i;
    return static_cast<ClassId>(best);
}

ClassId predict(const Network& net, const Tensor& image) { return argmax(forward(net, image)); }

static void check_label(const Network& net, ClassId label) {
    if (label >= net.num_classes())
        throw std::invalid_argument("label " + std::to_string(label) + " is not below class count " +
                                    std::to_string(net.num_classes()));
}

double loss(const Network& net, const Tensor& image, ClassId label) {
    check_label(net, label);
    return loss_from_probs(net, forward(net, image), label);
}

LossAndGradient loss_and_input_gradient(const Network& net, const Tensor& image, ClassId label) {
    check_label(net, label);
    const Trace t = run_forward(net, image);
    const Vec probs = softmax(t.acts.back());
    Vec g = run_backward(net, t, loss_logit_gradient(net, probs, label), nullptr);
    g *= net.input_scale();
    return {loss_from_probs(net, probs, label), argmax(probs), Tensor(image.shape(), std::move(g))};
}

ProbeResult probe(const Network& net, const Tensor& image,
                  const std::function<std::optional<ClassId>(ClassId)>& label_for) {
    const Trace t = run_forward(net, image);
    const Vec probs = softmax(t.acts.back());
    ProbeResult out{argmax(probs), std::nullopt};
    if (const auto label = label_for(out.predicted)) {
        check_label(net, *label);
        Vec g = run_backward(net, t, loss_logit_gradient(net, probs, *label), nullptr);
        g *= net.input_scale();
        out.gradient = Tensor(image.shape(), std::move(g));
    }
    return out;
}

Tensor input_gradient(const Network& net, const Tensor& image, ClassId label) {
    return loss_and_input_gradient(net, image, label).gradient;
}

Network train(Network net, const Dataset& data, const TrainOptions& options) {
    if (options.epochs == 0) return net;
    if (data.empty()) throw std::invalid_argument("cannot train on an empty dataset");
    if (options.batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (!(options.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    data.validate();
    if (data.num_classes() != net.num_classes())
        throw std::invalid_argument("dataset has " + std::to_string(data.num_classes()) + " classes, network has " +
                                    std::to_string(net.num_classes()));

    Rng rng(options.seed, streams::kTrainShuffle);
    ParamGrads grads(net);
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t stop = std::min(order.size(), start + options.batch_size);
            grads.set_zero();
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t i = order[b];
                const Trace t = run_forward(net, data.images[i]);
                const Vec probs = softmax(t.acts.back());
                const double l = loss_from_probs(net, probs, data.labels[i]);
                if (!std::isfinite(l))
                    throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", image " +
                                             std::to_string(i));
                run_backward(net, t, loss_logit_gradient(net, probs, data.labels[i]), &grads);
            }
            const double step = options.learning_rate / static_cast<double>(stop - start);
            auto& layers = net.mutable_layers();
            for (std::size_t li = 0; li < layers.size(); ++li) {
                if (auto* d = std::get_if<DenseLayer>(&layers[li])) {
                    d->weights -= step * grads.weights[li];
                    d->bias -= step * grads.bias[li];
                } else if (auto* c = std::get_if<Conv2dLayer>(&layers[li])) {
                    c->weights -= step * grads.weights[li];
                    c->bias -= step * grads.bias[li];
                }
            }
        }
    }
    for (const auto& layer : net.layers()) {
        bool finite = true;
        if (const auto* d = std::get_if<DenseLayer>(&layer)) finite = d->weights.allFinite() && d->bias.allFinite();
        if (const auto* c = std::get_if<Conv2dLayer>(&layer)) finite = c->weights.allFinite() && c->bias.allFinite();
        if (!finite) throw std::runtime_error("training diverged: non-finite weights");
    }
    return net;
}

std::vector<double> inverse_frequency_weights(const Dataset& data) {
    if (data.empty()) throw std::invalid_argument("inverse-frequency weights need a nonempty dataset");
    const auto counts = data.class_counts();
    const double n = static_cast<double>(data.size());
    const double k = static_cast<double>(counts.size());
    std::vector<double> w(counts.size(), 1.0);
    for (std::size_t c = 0; c < counts.size(); ++c)
        if (counts[c] > 0) w[c] = n / (k * static_cast<double>(counts[c]));
    return w;
}

}  // namespace uap
