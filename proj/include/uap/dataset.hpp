#ifndef UAP_DATASET_HPP
#define UAP_DATASET_HPP

#include "uap/tensor.hpp"

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace uap {

using ClassId = std::size_t;

enum class Split { Train, Test };

inline std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

// Labelled image set. Images are H x W x C tensors in pixel units.
struct Dataset {
    std::vector<Tensor> images;
    std::vector<ClassId> labels;
    std::vector<std::string> class_names;
    Split split = Split::Train;
    PixelDomain domain;

    std::size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }
    std::size_t num_classes() const { return class_names.size(); }

    const Shape& image_shape() const {
        if (images.empty()) throw std::invalid_argument("empty dataset has no image shape");
        return images.front().shape();
    }

    std::vector<std::size_t> class_counts() const {
        std::vector<std::size_t> counts(num_classes(), 0);
        for (auto y : labels) ++counts.at(y);
        return counts;
    }

    ClassId class_index(const std::string& name) const {
        for (std::size_t i = 0; i < class_names.size(); ++i)
            if (class_names[i] == name) return i;
        throw std::invalid_argument("unknown class name '" + name + "'");
    }

    // Throws on length mismatch, out-of-range labels, mixed shapes, or pixels
    // outside the domain.
    void validate() const {
        if (images.size() != labels.size())
            throw std::invalid_argument("dataset has " + std::to_string(images.size()) + " images but " +
                                        std::to_string(labels.size()) + " labels");
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] >= num_classes())
                throw std::invalid_argument("label " + std::to_string(labels[i]) + " of image " + std::to_string(i) +
                                            " is not below class count " + std::to_string(num_classes()));
            if (images[i].shape() != images.front().shape())
                throw std::invalid_argument("image " + std::to_string(i) + " has shape " +
                                            shape_string(images[i].shape()) + ", expected " +
                                            shape_string(images.front().shape()));
            const auto& v = images[i].values();
            if (!v.allFinite() || (v.size() > 0 && (v.minCoeff() < domain.lo || v.maxCoeff() > domain.hi)))
                throw std::invalid_argument("image " + std::to_string(i) + " has pixels outside the domain");
        }
    }
};

// Concatenates two datasets with identical class layout (used for pooled
// norm statistics).
inline Dataset pooled(const Dataset& a, const Dataset& b) {
    if (a.class_names != b.class_names) throw std::invalid_argument("cannot pool datasets with different classes");
    Dataset out = a;
    out.images.insert(out.images.end(), b.images.begin(), b.images.end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    return out;
}

}  // namespace uap

#endif  // UAP_DATASET_HPP
