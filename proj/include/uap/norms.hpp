#ifndef UAP_NORMS_HPP
#define UAP_NORMS_HPP

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace uap {

enum class Norm : std::uint8_t { L1 = 1, L2 = 2, Linf = 255 };

inline std::string to_string(Norm p) {
    switch (p) {
        case Norm::L1: return "1";
        case Norm::L2: return "2";
        case Norm::Linf: return "inf";
    }
    throw std::invalid_argument("bad norm selector");
}

inline Norm parse_norm(const std::string& s) {
    if (s == "1" || s == "l1" || s == "L1") return Norm::L1;
    if (s == "2" || s == "l2" || s == "L2") return Norm::L2;
    if (s == "inf" || s == "linf" || s == "Linf" || s == "infinity") return Norm::Linf;
    throw std::invalid_argument("unknown norm '" + s + "' (expected 1, 2 or inf)");
}

inline Norm norm_from_tag(std::uint8_t tag) {
    switch (tag) {
        case 1: return Norm::L1;
        case 2: return Norm::L2;
        case 255: return Norm::Linf;
        default: throw std::invalid_argument("bad norm tag " + std::to_string(tag));
    }
}

template <typename Derived>
typename Derived::RealScalar lp_norm(const Eigen::MatrixBase<Derived>& v, Norm p) {
    if (v.size() == 0) return 0;
    switch (p) {
        case Norm::L1: return v.template lpNorm<1>();
        case Norm::L2: return v.norm();
        case Norm::Linf: return v.template lpNorm<Eigen::Infinity>();
    }
    throw std::invalid_argument("bad norm selector");
}

}  // namespace uap

#endif  // UAP_NORMS_HPP
