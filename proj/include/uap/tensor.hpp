#ifndef UAP_TENSOR_HPP
#define UAP_TENSOR_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace uap {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense N-d array, row-major. Storage is an Eigen column vector so the
// values can take part in Eigen expressions directly.
template <typename Scalar>
class BasicTensor {
public:
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    BasicTensor() = default;

    explicit BasicTensor(Shape shape)
        : shape_(std::move(shape)), values_(Vector::Zero(static_cast<Eigen::Index>(shape_size(shape_)))) {
        check_shape();
    }

    BasicTensor(Shape shape, Vector values) : shape_(std::move(shape)), values_(std::move(values)) {
        check_shape();
        if (static_cast<std::size_t>(values_.size()) != shape_size(shape_))
            throw std::invalid_argument("tensor data length " + std::to_string(values_.size()) +
                                        " does not match shape " + shape_string(shape_));
    }

    static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return static_cast<std::size_t>(values_.size()); }
    bool empty() const { return values_.size() == 0; }

    Vector& values() { return values_; }
    const Vector& values() const { return values_; }

    Scalar& operator[](std::size_t i) { return values_[static_cast<Eigen::Index>(i)]; }
    Scalar operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }

    bool all_finite() const { return values_.allFinite(); }

    friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    void check_shape() const {
        for (auto d : shape_)
            if (d == 0) throw std::invalid_argument("tensor shape " + shape_string(shape_) + " has a zero dimension");
    }

    Shape shape_;
    Vector values_;
};

using Tensor = BasicTensor<double>;

// Closed interval of admissible pixel values.
struct PixelDomain {
    double lo = 0.0;
    double hi = 255.0;

    double width() const { return hi - lo; }
};

template <typename Derived>
auto clip_to_domain(const Eigen::MatrixBase<Derived>& v, const PixelDomain& domain) {
    return v.cwiseMax(domain.lo).cwiseMin(domain.hi);
}

// clip(x + rho) as a new tensor with x's shape.
inline Tensor perturb(const Tensor& x, const Tensor& rho, const PixelDomain& domain) {
    if (x.shape() != rho.shape())
        throw std::invalid_argument("perturbation shape " + shape_string(rho.shape()) +
                                    " does not match image shape " + shape_string(x.shape()));
    return Tensor(x.shape(), clip_to_domain(x.values() + rho.values(), domain));
}

}  // namespace uap

#endif  // UAP_TENSOR_HPP
