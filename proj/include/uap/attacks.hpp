#ifndef UAP_ATTACKS_HPP
#define UAP_ATTACKS_HPP

#include "uap/dataset.hpp"
#include "uap/diffnet.hpp"
#include "uap/norms.hpp"
#include "uap/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uap {

enum class AttackMode { Nontargeted, Targeted };

std::string to_string(AttackMode mode);
AttackMode parse_attack_mode(const std::string& s);

// Lp-ball budget ||rho||_p <= xi. When zeta is set, xi was resolved as
// zeta times the dataset's mean image norm.
struct AttackBudget {
    Norm p = Norm::Linf;
    double xi = 0.0;
    std::optional<double> zeta;

    void validate() const {
        if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("budget xi must be positive and finite");
        if (zeta && !(*zeta > 0.0 && *zeta <= 1.0)) throw std::invalid_argument("budget zeta must lie in (0, 1]");
    }
};

struct AttackParams {
    double eps = 0.001;       // FGSM step size, in pixel units
    std::size_t i_max = 15;   // passes over the image set
    AttackMode mode = AttackMode::Nontargeted;
    std::optional<ClassId> target;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("attack eps must be positive and finite");
        if (mode == AttackMode::Targeted && !target) throw std::invalid_argument("targeted attack requires a target class");
        if (mode == AttackMode::Nontargeted && target)
            throw std::invalid_argument("nontargeted attack must not carry a target class");
    }
};

enum class Provenance : std::uint8_t { UapNontargeted = 1, UapTargeted = 2, Random = 3 };

std::string to_string(Provenance p);

struct Perturbation {
    Tensor tensor;
    AttackBudget budget;
    Provenance provenance = Provenance::UapNontargeted;

    double norm() const { return lp_norm(tensor.values(), budget.p); }
    bool within_budget() const { return norm() <= budget.xi * (1.0 + 1e-9); }
};

// Single FGSM step: eps * sign(g) for p = inf, eps * g / ||g||_p for p in
// {1, 2}; negated in targeted mode. sign(0) = 0 and a zero gradient gives a
// zero step.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> fgsm_step(const Eigen::MatrixBase<Derived>& grad, double eps,
                                                                     Norm p, AttackMode mode) {
    using Scalar = typename Derived::Scalar;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    if (!(eps > 0.0)) throw std::invalid_argument("fgsm step size must be positive");
    if (!grad.allFinite()) throw std::invalid_argument("fgsm gradient must be finite");
    const Scalar s = mode == AttackMode::Targeted ? Scalar(-eps) : Scalar(eps);
    if (p == Norm::Linf) return grad.unaryExpr([s](Scalar g) { return g > 0 ? s : (g < 0 ? -s : Scalar(0)); });
    const Scalar n = lp_norm(grad, p);
    if (n == Scalar(0)) return Vector::Zero(grad.size());
    return s * grad / n;
}

Tensor fgsm_step(const Tensor& grad, double eps, Norm p, AttackMode mode);

namespace detail {

// Largest multiple v * scale (scale <= xi / ||v||) whose computed norm is
// within xi, so a second projection is an exact no-op.
template <typename Vector>
Vector scale_into_ball(const Vector& v, Norm p, double xi) {
    using Scalar = typename Vector::Scalar;
    const Scalar n = lp_norm(v, p);
    Scalar scale = Scalar(xi) / n;
    Vector out = v * scale;
    while (lp_norm(out, p) > xi) {
        scale = std::nextafter(scale, Scalar(0));
        out = v * scale;
    }
    return out;
}

// Euclidean projection of |v| onto the simplex of radius xi (sort-based),
// with signs restored.
template <typename Vector>
Vector project_l1(const Vector& v, double xi) {
    using Scalar = typename Vector::Scalar;
    std::vector<Scalar> u(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) u[static_cast<std::size_t>(i)] = std::abs(v[i]);
    std::sort(u.begin(), u.end(), std::greater<>());
    Scalar cumulative = 0, theta = 0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cumulative += u[j];
        const Scalar t = (cumulative - Scalar(xi)) / static_cast<Scalar>(j + 1);
        if (u[j] - t > 0) theta = t;
    }
    Vector out = v.unaryExpr([theta](Scalar x) {
        const Scalar m = std::max(std::abs(x) - theta, Scalar(0));
        return x < 0 ? -m : m;
    });
    if (lp_norm(out, Norm::L1) > xi) out = scale_into_ball(out, Norm::L1, xi);
    return out;
}

}  // namespace detail

// Closest point (Euclidean distance) to v inside the Lp ball of radius xi.
// Points already inside are returned unchanged.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> project(const Eigen::MatrixBase<Derived>& v, Norm p, double xi) {
    using Scalar = typename Derived::Scalar;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    if (!(xi > 0.0)) throw std::invalid_argument("projection radius must be positive");
    Vector x = v;
    if (lp_norm(x, p) <= xi) return x;
    switch (p) {
        case Norm::Linf: return x.cwiseMax(Scalar(-xi)).cwiseMin(Scalar(xi));
        case Norm::L2: return detail::scale_into_ball(x, Norm::L2, xi);
        case Norm::L1: return detail::project_l1(x, xi);
    }
    throw std::invalid_argument("bad norm selector");
}

Tensor project(const Tensor& v, Norm p, double xi);

struct UapStats {
    std::size_t passes = 0;
    std::size_t visits = 0;
    std::size_t fgsm_steps = 0;
    std::size_t updates = 0;
};

// Iterative universal perturbation: starting from rho = 0, each of i_max
// passes visits the images in a fresh order drawn from the uap-order stream
// of params.seed. An image still classified as before (nontargeted) or not
// yet as the target (targeted) gets an FGSM step on clip(x + rho); if the
// stepped image x_adv flips as wanted, rho <- project(x_adv - x).
Perturbation generate_uap(const Network& net, const Dataset& images, const AttackBudget& budget,
                          const AttackParams& params, UapStats* stats = nullptr);

// Norm-matched random control. p in {1, 2}: iid standard normal components
// scaled to norm xi. p = inf: iid uniform on [-1, 1] scaled so the largest
// magnitude is xi.
Perturbation random_uap(const Shape& shape, Norm p, double xi, std::uint64_t seed);

std::vector<std::uint8_t> serialize_perturbation(const Perturbation& rho);
Perturbation deserialize_perturbation(std::span<const std::uint8_t> bytes);
void save_perturbation(const Perturbation& rho, const std::filesystem::path& path);
Perturbation load_perturbation(const std::filesystem::path& path);

}  // namespace uap

#endif  // UAP_ATTACKS_HPP
