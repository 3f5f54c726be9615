#ifndef UAP_DIFFNET_HPP
#define UAP_DIFFNET_HPP

#include "uap/dataset.hpp"
#include "uap/tensor.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace uap {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Architecture description, weights not yet materialised.
struct DenseSpec {
    std::size_t units = 0;
};
struct Conv2dSpec {
    std::size_t out_channels = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
};
struct ReluSpec {};
struct MaxPool2dSpec {
    std::size_t size = 2;
    std::size_t stride = 2;
};
struct FlattenSpec {};
struct SoftmaxSpec {};

using LayerSpec = std::variant<DenseSpec, Conv2dSpec, ReluSpec, MaxPool2dSpec, FlattenSpec, SoftmaxSpec>;

enum class LayerKind : std::uint8_t { Dense = 1, Conv2d = 2, Relu = 3, MaxPool2d = 4, Flatten = 5, Softmax = 6 };

std::string to_string(LayerKind kind);

// Fully connected: y = W x + b over the flattened input. W is out x in.
struct DenseLayer {
    Shape in_shape;
    RowMatrix weights;
    Eigen::VectorXd bias;

    std::size_t in_size() const { return static_cast<std::size_t>(weights.cols()); }
    std::size_t out_size() const { return static_cast<std::size_t>(weights.rows()); }
};

// Valid (unpadded) convolution over H x W x C input. Kernel rows are ordered
// (ky, kx, c_in); columns are output channels.
struct Conv2dLayer {
    std::size_t in_h = 0, in_w = 0, in_c = 0;
    std::size_t out_c = 0, kernel = 0, stride = 1;
    RowMatrix weights;  // (kernel * kernel * in_c) x out_c
    Eigen::VectorXd bias;

    std::size_t out_h() const { return (in_h - kernel) / stride + 1; }
    std::size_t out_w() const { return (in_w - kernel) / stride + 1; }
};

struct ReluLayer {
    Shape shape;
};

struct MaxPool2dLayer {
    std::size_t in_h = 0, in_w = 0, channels = 0;
    std::size_t size = 2, stride = 2;

    std::size_t out_h() const { return (in_h - size) / stride + 1; }
    std::size_t out_w() const { return (in_w - size) / stride + 1; }
};

struct FlattenLayer {
    Shape in_shape;
};

struct SoftmaxLayer {
    std::size_t classes = 0;
};

using Layer = std::variant<DenseLayer, Conv2dLayer, ReluLayer, MaxPool2dLayer, FlattenLayer, SoftmaxLayer>;

LayerKind layer_kind(const Layer& layer);
Shape layer_input_shape(const Layer& layer);
Shape layer_output_shape(const Layer& layer);

// Layered classifier ending in a softmax over K classes. Pixels are scaled by
// input_scale before the first layer; gradients are reported in pixel units.
class Network {
public:
    Network(Shape input_shape, std::vector<Layer> layers, std::vector<double> class_weights = {},
            double input_scale = 1.0 / 255.0);

    // He-uniform weights drawn from the weight-init stream of `seed`, zero biases.
    static Network build(const Shape& input_shape, std::span<const LayerSpec> specs, std::uint64_t seed,
                         double input_scale = 1.0 / 255.0);

    const Shape& input_shape() const { return input_shape_; }
    std::size_t num_classes() const { return num_classes_; }
    double input_scale() const { return input_scale_; }
    const std::vector<double>& class_weights() const { return class_weights_; }
    void set_class_weights(std::vector<double> weights);

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& mutable_layers() { return layers_; }
    std::size_t parameter_count() const;

    friend bool operator==(const Network&, const Network&);

private:
    void validate() const;

    Shape input_shape_;
    std::vector<Layer> layers_;
    std::vector<double> class_weights_;
    double input_scale_;
    std::size_t num_classes_ = 0;
};

inline constexpr double kProbabilityFloor = 1e-12;

// Softmax probabilities, length K.
Eigen::VectorXd forward(const Network& net, const Tensor& image);

// Pre-softmax scores.
Eigen::VectorXd logits(const Network& net, const Tensor& image);

// Index of the largest entry; ties go to the lowest index.
ClassId argmax(const Eigen::Ref<const Eigen::VectorXd>& scores);

ClassId predict(const Network& net, const Tensor& image);

// -w_y log(max(p_y, 1e-12))
double loss(const Network& net, const Tensor& image, ClassId label);

// Exact gradient of loss() with respect to every pixel, same shape as image.
Tensor input_gradient(const Network& net, const Tensor& image, ClassId label);

struct LossAndGradient {
    double loss = 0.0;
    ClassId predicted = 0;
    Tensor gradient;
};

// One forward and one backward pass; `predicted` is the argmax of the same
// forward pass.
LossAndGradient loss_and_input_gradient(const Network& net, const Tensor& image, ClassId label);

struct ProbeResult {
    ClassId predicted = 0;
    std::optional<Tensor> gradient;
};

// Forward pass; when label_for(predicted) yields a label, also back-propagates
// that label's loss to the input.
ProbeResult probe(const Network& net, const Tensor& image,
                  const std::function<std::optional<ClassId>(ClassId)>& label_for);

struct TrainOptions {
    std::size_t epochs = 10;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

// Mini-batch gradient descent on the class-weighted loss. The visiting order
// comes from the train-shuffle stream of options.seed.
Network train(Network net, const Dataset& data, const TrainOptions& options);

// w_c = N / (K * n_c), normalised so classes with no samples get weight 1.
std::vector<double> inverse_frequency_weights(const Dataset& data);

std::vector<std::uint8_t> serialize_model(const Network& net);
Network deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const Network& net, const std::filesystem::path& path);
Network load_model(const std::filesystem::path& path);

}  // namespace uap

#endif  // UAP_DIFFNET_HPP
