#ifndef UAP_TESTS_SUPPORT_HPP
#define UAP_TESTS_SUPPORT_HPP

#include "uap/dataset.hpp"
#include "uap/diffnet.hpp"
#include "uap/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

namespace uap::test {

namespace fs = std::filesystem;

inline Tensor vec(std::initializer_list<double> v) {
    Eigen::VectorXd e(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) e[i++] = x;
    return Tensor({v.size()}, e);
}

// Dense -> softmax over a flat input; weights are classes x pixels. No input
// scaling, so logits are exactly W x + b.
inline Network linear_net(const RowMatrix& w, const Eigen::VectorXd& b = {}) {
    const auto in = static_cast<std::size_t>(w.cols()), out = static_cast<std::size_t>(w.rows());
    DenseLayer d{{in}, w, b.size() ? b : Eigen::VectorXd::Zero(w.rows())};
    return Network({in}, {d, SoftmaxLayer{out}}, {}, 1.0);
}

inline Dataset make_dataset(const std::vector<Tensor>& images, const std::vector<ClassId>& labels, std::size_t k,
                            PixelDomain domain = {}) {
    Dataset d;
    d.images = images;
    d.labels = labels;
    for (std::size_t c = 0; c < k; ++c) d.class_names.push_back("c" + std::to_string(c));
    d.domain = domain;
    d.validate();
    return d;
}

// Random images with pixels uniform over the domain.
inline Dataset random_dataset(Rng& rng, std::size_t n, const Shape& shape, std::size_t k, PixelDomain domain = {}) {
    std::vector<Tensor> images;
    std::vector<ClassId> labels;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor t(shape);
        for (std::size_t j = 0; j < t.size(); ++j) t[j] = rng.uniform(domain.lo, domain.hi);
        images.push_back(std::move(t));
        labels.push_back(rng.index(k));
    }
    return make_dataset(images, labels, k, domain);
}

inline Tensor random_image(Rng& rng, const Shape& shape, PixelDomain domain = {}) {
    Tensor t(shape);
    for (std::size_t j = 0; j < t.size(); ++j) t[j] = rng.uniform(domain.lo, domain.hi);
    return t;
}

// Small randomised architecture drawn from a handful of families, each with
// at most three parametrised layers and at most 500 parameters.
inline Network random_net(Rng& rng, std::uint64_t seed) {
    const std::size_t k = 2 + rng.index(3);
    Shape in;
    std::vector<LayerSpec> specs;
    switch (rng.index(4)) {
        case 0:
            in = {6};
            specs = {DenseSpec{5}, ReluSpec{}, DenseSpec{k}, SoftmaxSpec{}};
            break;
        case 1:
            in = {4, 4, 1};
            specs = {Conv2dSpec{2, 3, 1}, ReluSpec{}, FlattenSpec{}, DenseSpec{k}, SoftmaxSpec{}};
            break;
        case 2:
            in = {6, 6, 2};
            specs = {Conv2dSpec{3, 3, 1}, ReluSpec{}, MaxPool2dSpec{2, 2}, FlattenSpec{}, DenseSpec{k}, SoftmaxSpec{}};
            break;
        default:
            in = {5, 5, 1};
            specs = {Conv2dSpec{2, 2, 2}, ReluSpec{}, FlattenSpec{}, DenseSpec{6}, ReluSpec{}, DenseSpec{k}, SoftmaxSpec{}};
            break;
    }
    Network net = Network::build(in, specs, seed);
    // Spread the biases so ReLUs are not all active at once.
    for (auto& layer : net.mutable_layers()) {
        if (auto* d = std::get_if<DenseLayer>(&layer))
            for (Eigen::Index i = 0; i < d->bias.size(); ++i) d->bias[i] = rng.uniform(-0.3, 0.3);
        if (auto* c = std::get_if<Conv2dLayer>(&layer))
            for (Eigen::Index i = 0; i < c->bias.size(); ++i) c->bias[i] = rng.uniform(-0.3, 0.3);
    }
    std::vector<double> w(k);
    for (auto& x : w) x = rng.uniform(0.5, 2.0);
    net.set_class_weights(w);
    return net;
}

// Forward pass written directly from the layer definitions with plain loops;
// shares no code with the library's implementation.
inline std::vector<double> reference_forward(const Network& net, const Tensor& image) {
    std::vector<double> a(image.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = image[i] * net.input_scale();
    for (const auto& layer : net.layers()) {
        std::vector<double> out;
        if (const auto* d = std::get_if<DenseLayer>(&layer)) {
            out.assign(static_cast<std::size_t>(d->weights.rows()), 0.0);
            for (std::size_t o = 0; o < out.size(); ++o) {
                double s = d->bias[static_cast<Eigen::Index>(o)];
                for (std::size_t i = 0; i < a.size(); ++i) s += d->weights(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) * a[i];
                out[o] = s;
            }
        } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
            const std::size_t oh = (c->in_h - c->kernel) / c->stride + 1, ow = (c->in_w - c->kernel) / c->stride + 1;
            out.assign(oh * ow * c->out_c, 0.0);
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox)
                    for (std::size_t oc = 0; oc < c->out_c; ++oc) {
                        double s = c->bias[static_cast<Eigen::Index>(oc)];
                        for (std::size_t ky = 0; ky < c->kernel; ++ky)
                            for (std::size_t kx = 0; kx < c->kernel; ++kx)
                                for (std::size_t ic = 0; ic < c->in_c; ++ic) {
                                    const std::size_t y = oy * c->stride + ky, x = ox * c->stride + kx;
                                    const auto row = static_cast<Eigen::Index>((ky * c->kernel + kx) * c->in_c + ic);
                                    s += c->weights(row, static_cast<Eigen::Index>(oc)) * a[(y * c->in_w + x) * c->in_c + ic];
                                }
                        out[(oy * ow + ox) * c->out_c + oc] = s;
                    }
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            out = a;
            for (auto& v : out) v = std::max(v, 0.0);
        } else if (const auto* m = std::get_if<MaxPool2dLayer>(&layer)) {
            const std::size_t oh = (m->in_h - m->size) / m->stride + 1, ow = (m->in_w - m->size) / m->stride + 1;
            out.assign(oh * ow * m->channels, 0.0);
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox)
                    for (std::size_t ch = 0; ch < m->channels; ++ch) {
                        double best = -INFINITY;
                        for (std::size_t dy = 0; dy < m->size; ++dy)
                            for (std::size_t dx = 0; dx < m->size; ++dx)
                                best = std::max(best, a[((oy * m->stride + dy) * m->in_w + ox * m->stride + dx) * m->channels + ch]);
                        out[(oy * ow + ox) * m->channels + ch] = best;
                    }
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            out = a;
        } else {
            const double mx = *std::max_element(a.begin(), a.end());
            double z = 0.0;
            out = a;
            for (auto& v : out) z += (v = std::exp(v - mx));
            for (auto& v : out) v /= z;
        }
        a = std::move(out);
    }
    return a;
}

// Central differences of loss() in every pixel.
inline Eigen::VectorXd numeric_gradient(const Network& net, const Tensor& image, ClassId label, double h = 1e-5) {
    Eigen::VectorXd g(static_cast<Eigen::Index>(image.size()));
    Tensor x = image;
    for (std::size_t i = 0; i < image.size(); ++i) {
        x[i] = image[i] + h;
        const double up = loss(net, x, label);
        x[i] = image[i] - h;
        const double down = loss(net, x, label);
        x[i] = image[i];
        g[static_cast<Eigen::Index>(i)] = (up - down) / (2.0 * h);
    }
    return g;
}

// Largest componentwise difference relative to the larger gradient's
// magnitude (max-norm), floored at 1e-8.
inline double gradient_relative_error(const Eigen::VectorXd& analytic, const Eigen::VectorXd& numeric) {
    const double scale = std::max({analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-8});
    return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

// Fresh, empty directory under the system temp dir.
inline fs::path temp_dir(const std::string& tag) {
    static std::atomic<int> counter{0};
    const auto dir = fs::temp_directory_path() / ("uap-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                                                  std::to_string(counter++));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace uap::test

#endif  // UAP_TESTS_SUPPORT_HPP
