#include "uap/attacks.hpp"

#include "uap/binary_io.hpp"
#include "uap/rng.hpp"

namespace uap {

std::string to_string(AttackMode mode) { return mode == AttackMode::Targeted ? "targeted" : "nontargeted"; }

AttackMode parse_attack_mode(const std::string& s) {
    if (s == "nontargeted") return AttackMode::Nontargeted;
    if (s == "targeted") return AttackMode::Targeted;
    throw std::invalid_argument("unknown attack mode '" + s + "' (expected nontargeted or targeted)");
}

std::string to_string(Provenance p) {
    switch (p) {
        case Provenance::UapNontargeted: return "uap_nontargeted";
        case Provenance::UapTargeted: return "uap_targeted";
        case Provenance::Random: return "random";
    }
    return "unknown";
}

Tensor fgsm_step(const Tensor& grad, double eps, Norm p, AttackMode mode) {
    return Tensor(grad.shape(), fgsm_step(grad.values(), eps, p, mode));
}

Tensor project(const Tensor& v, Norm p, double xi) { return Tensor(v.shape(), project(v.values(), p, xi)); }

Perturbation generate_uap(const Network& net, const Dataset& images, const AttackBudget& budget,
                          const AttackParams& params, UapStats* stats) {
    budget.validate();
    params.validate();
    if (params.target && *params.target >= net.num_classes())
        throw std::invalid_argument("target class " + std::to_string(*params.target) + " is not below class count " +
                                    std::to_string(net.num_classes()));

    const bool targeted = params.mode == AttackMode::Targeted;
    Perturbation rho{Tensor::zeros(net.input_shape()), budget,
                     targeted ? Provenance::UapTargeted : Provenance::UapNontargeted};
    UapStats local;
    UapStats& st = stats ? *stats : local;
    st = {};
    if (images.empty() || params.i_max == 0) return rho;
    if (images.image_shape() != net.input_shape())
        throw std::invalid_argument("image shape " + shape_string(images.image_shape()) +
                                    " does not match perturbation shape " + shape_string(net.input_shape()));

    const PixelDomain& domain = images.domain;
    std::vector<ClassId> clean;
    if (!targeted) {
        clean.reserve(images.size());
        for (const auto& x : images.images) clean.push_back(predict(net, x));
    }

    Rng rng(params.seed, streams::kUapOrder);
    Eigen::VectorXd& r = rho.tensor.values();
    for (std::size_t pass = 0; pass < params.i_max; ++pass) {
        ++st.passes;
        for (const std::size_t i : rng.permutation(images.size())) {
            ++st.visits;
            const Tensor& x = images.images[i];
            const Tensor xr(x.shape(), clip_to_domain(x.values() + r, domain));
            // Nontargeted: still predicted as on the clean image, so push away
            // from that label. Targeted: not yet the target, so pull toward it.
            const auto probed = probe(net, xr, [&](ClassId predicted) -> std::optional<ClassId> {
                if (targeted) return predicted != *params.target ? params.target : std::nullopt;
                return predicted == clean[i] ? std::optional<ClassId>(predicted) : std::nullopt;
            });
            if (!probed.gradient) continue;
            ++st.fgsm_steps;
            const Eigen::VectorXd step = fgsm_step(probed.gradient->values(), params.eps, budget.p, params.mode);
            const Tensor x_adv(x.shape(), clip_to_domain(x.values() + r + step, domain));
            const ClassId adv = predict(net, x_adv);
            const bool success = targeted ? adv == *params.target : adv != clean[i];
            if (success) {
                r = project(x_adv.values() - x.values(), budget.p, budget.xi);
                ++st.updates;
            }
        }
    }
    return rho;
}

Perturbation random_uap(const Shape& shape, Norm p, double xi, std::uint64_t seed) {
    if (!(xi > 0.0) || !std::isfinite(xi)) throw std::invalid_argument("random perturbation radius must be positive");
    Rng rng(seed, streams::kRandomUap);
    Tensor t(shape);
    Eigen::VectorXd& v = t.values();
    do {
        for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = p == Norm::Linf ? rng.uniform(-1.0, 1.0) : rng.normal();
    } while (lp_norm(v, p) == 0.0);
    v *= xi / lp_norm(v, p);
    return Perturbation{std::move(t), AttackBudget{p, xi, std::nullopt}, Provenance::Random};
}

namespace {
constexpr std::string_view kPerturbationMagic = "UAPF";
constexpr std::uint32_t kPerturbationVersion = 1;
}  // namespace

std::vector<std::uint8_t> serialize_perturbation(const Perturbation& rho) {
    ByteWriter w;
    w.bytes(kPerturbationMagic);
    w.u32(kPerturbationVersion);
    w.u8(static_cast<std::uint8_t>(rho.budget.p));
    w.f64(rho.budget.xi);
    w.u8(static_cast<std::uint8_t>(rho.provenance));
    w.f64(rho.budget.zeta.value_or(0.0));
    w.u32(static_cast<std::uint32_t>(rho.tensor.shape().size()));
    for (auto d : rho.tensor.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < rho.tensor.size(); ++i) w.f64(rho.tensor[i]);
    w.seal();
    return std::move(w.buffer());
}

Perturbation deserialize_perturbation(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic(kPerturbationMagic);
    const auto version = r.u32("version");
    if (version != kPerturbationVersion)
        throw FormatError("unsupported perturbation version " + std::to_string(version), r.offset() - 4);
    Perturbation rho;
    const std::size_t norm_at = r.offset();
    try {
        rho.budget.p = norm_from_tag(r.u8("norm selector"));
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what(), norm_at);
    }
    rho.budget.xi = r.f64("xi");
    const std::size_t prov_at = r.offset();
    const auto prov = r.u8("provenance");
    if (prov < 1 || prov > 3) throw FormatError("unknown provenance " + std::to_string(prov), prov_at);
    rho.provenance = static_cast<Provenance>(prov);
    const double zeta = r.f64("zeta");
    if (zeta != 0.0) rho.budget.zeta = zeta;
    const std::size_t rank_at = r.offset();
    const auto rank = r.u32("rank");
    if (rank == 0 || rank > 8) throw FormatError("implausible rank " + std::to_string(rank), rank_at);
    Shape shape(rank);
    for (auto& d : shape) {
        d = r.u32("dimension");
        if (d == 0) throw FormatError("zero dimension", r.offset() - 4);
    }
    const std::size_t n = shape_size(shape);
    r.need(n * 8, "perturbation values");
    Eigen::VectorXd values(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < values.size(); ++i) values[i] = r.f64("perturbation value");
    r.verify_seal();
    rho.tensor = Tensor(std::move(shape), std::move(values));
    if (!rho.tensor.all_finite()) throw FormatError("non-finite perturbation value", 0);
    try {
        rho.budget.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(e.what(), norm_at);
    }
    return rho;
}

void save_perturbation(const Perturbation& rho, const std::filesystem::path& path) {
    write_file(path, serialize_perturbation(rho));
}

Perturbation load_perturbation(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    try {
        return deserialize_perturbation(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string(), e);
    }
}

}  // namespace uap
