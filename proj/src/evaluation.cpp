#include "uap/evaluation.hpp"

#include <sstream>
#include <stdexcept>

namespace uap {

namespace {

void require_nonempty(const Dataset& data, const char* what) {
    if (data.empty()) throw std::invalid_argument(std::string(what) + " of an empty dataset");
}

void require_rho_shape(const Dataset& data, const Tensor& rho) {
    if (rho.shape() != data.image_shape())
        throw std::invalid_argument("perturbation shape " + shape_string(rho.shape()) + " does not match image shape " +
                                    shape_string(data.image_shape()));
}

double count_fraction(std::size_t count, std::size_t n) { return static_cast<double>(count) / static_cast<double>(n); }

std::size_t count_correct(std::span<const ClassId> predicted, std::span<const ClassId> labels) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < predicted.size(); ++i) c += predicted[i] == labels[i];
    return c;
}

std::size_t count_equal(std::span<const ClassId> predicted, ClassId y) {
    std::size_t c = 0;
    for (auto p : predicted) c += p == y;
    return c;
}

}  // namespace

std::vector<ClassId> predictions(const Network& net, const Dataset& data, const Tensor* rho) {
    std::vector<ClassId> out;
    out.reserve(data.size());
    if (rho && !data.empty()) require_rho_shape(data, *rho);
    for (const auto& x : data.images) out.push_back(rho ? predict(net, perturb(x, *rho, data.domain)) : predict(net, x));
    return out;
}

double accuracy(const Network& net, const Dataset& data) {
    require_nonempty(data, "accuracy");
    return count_fraction(count_correct(predictions(net, data), data.labels), data.size());
}

double fooling_rate(const Network& net, const Dataset& data, const Tensor& rho) {
    require_nonempty(data, "fooling rate");
    require_rho_shape(data, rho);
    return 1.0 - count_fraction(count_correct(predictions(net, data, &rho), data.labels), data.size());
}

double fooling_rate(const Network& net, const Dataset& data, const Perturbation& rho) {
    return fooling_rate(net, data, rho.tensor);
}

double targeted_success_rate(const Network& net, const Dataset& data, const Tensor& rho, ClassId target) {
    require_nonempty(data, "targeted success rate");
    require_rho_shape(data, rho);
    if (target >= net.num_classes())
        throw std::invalid_argument("target class " + std::to_string(target) + " is not below class count " +
                                    std::to_string(net.num_classes()));
    return count_fraction(count_equal(predictions(net, data, &rho), target), data.size());
}

double targeted_success_rate(const Network& net, const Dataset& data, const Perturbation& rho, ClassId target) {
    return targeted_success_rate(net, data, rho.tensor, target);
}

ConfusionMatrix confusion_matrix(std::span<const ClassId> actual, std::span<const ClassId> predicted, std::size_t k) {
    if (actual.size() != predicted.size()) throw std::invalid_argument("actual and predicted label counts differ");
    ConfusionMatrix cm = ConfusionMatrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < actual.size(); ++i) {
        if (actual[i] >= k || predicted[i] >= k) throw std::invalid_argument("label out of range for confusion matrix");
        ++cm(static_cast<Eigen::Index>(actual[i]), static_cast<Eigen::Index>(predicted[i]));
    }
    return cm;
}

ConfusionMatrix confusion_matrix(const Network& net, const Dataset& data, const Tensor* rho) {
    return confusion_matrix(data.labels, predictions(net, data, rho), net.num_classes());
}

std::pair<ClassId, double> dominant_column(const ConfusionMatrix& cm) {
    const Eigen::Matrix<std::int64_t, 1, Eigen::Dynamic> cols = cm.colwise().sum();
    const std::int64_t total = cols.sum();
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < cols.size(); ++j)
        if (cols[j] > cols[best]) best = j;
    const double share = total > 0 ? static_cast<double>(cols[best]) / static_cast<double>(total) : 0.0;
    return {static_cast<ClassId>(best), share};
}

double dataset_norm_stats(const Dataset& data, Norm p) {
    require_nonempty(data, "norm statistics");
    double sum = 0.0;
    for (const auto& x : data.images) sum += lp_norm(x.values(), p);
    return sum / static_cast<double>(data.size());
}

AttackBudget resolve_budget(double zeta, const Dataset& data, Norm p) {
    if (!(zeta > 0.0 && zeta <= 1.0)) throw std::invalid_argument("zeta must lie in (0, 1]");
    return AttackBudget{p, zeta * dataset_norm_stats(data, p), zeta};
}

EvalReport evaluate(const Network& net, const Dataset& data, const Perturbation* rho, std::optional<ClassId> target) {
    require_nonempty(data, "evaluation");
    if (target && *target >= net.num_classes())
        throw std::invalid_argument("target class " + std::to_string(*target) + " is not below class count " +
                                    std::to_string(net.num_classes()));
    const std::size_t k = net.num_classes();
    const std::size_t n = data.size();
    EvalReport rep;
    rep.split = to_string(data.split);
    rep.class_names = data.class_names;
    rep.target = target;

    const auto clean = predictions(net, data);
    rep.accuracy = count_fraction(count_correct(clean, data.labels), n);
    rep.clean_confusion = confusion_matrix(data.labels, clean, k);

    const auto perturbed = rho ? predictions(net, data, &rho->tensor) : clean;
    rep.confusion = confusion_matrix(data.labels, perturbed, k);
    std::tie(rep.dominant_class, rep.dominant_share) = dominant_column(rep.confusion);

    const auto row_sums = rep.confusion.rowwise().sum();
    rep.per_class.assign(k, 0.0);
    if (!rho) {
        rep.metric = "none";
        rep.value = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const auto i = static_cast<Eigen::Index>(c);
            if (row_sums[i] > 0) rep.per_class[c] = static_cast<double>(rep.confusion(i, i)) / static_cast<double>(row_sums[i]);
        }
    } else if (target) {
        rep.metric = "R_s";
        rep.value = count_fraction(count_equal(perturbed, *target), n);
        const auto t = static_cast<Eigen::Index>(*target);
        for (std::size_t c = 0; c < k; ++c) {
            const auto i = static_cast<Eigen::Index>(c);
            if (row_sums[i] > 0) rep.per_class[c] = static_cast<double>(rep.confusion(i, t)) / static_cast<double>(row_sums[i]);
        }
    } else {
        rep.metric = "R_f";
        rep.value = 1.0 - count_fraction(count_correct(perturbed, data.labels), n);
        for (std::size_t c = 0; c < k; ++c) {
            const auto i = static_cast<Eigen::Index>(c);
            if (row_sums[i] > 0)
                rep.per_class[c] = static_cast<double>(row_sums[i] - rep.confusion(i, i)) / static_cast<double>(row_sums[i]);
        }
    }
    if (rho) {
        rep.metadata["provenance"] = to_string(rho->provenance);
        rep.metadata["norm"] = to_string(rho->budget.p);
        rep.metadata["xi"] = rho->budget.xi;
        if (rho->budget.zeta) rep.metadata["zeta"] = *rho->budget.zeta;
        rep.metadata["perturbation_norm"] = rho->norm();
    }
    return rep;
}

nlohmann::ordered_json confusion_to_json(const ConfusionMatrix& cm) {
    auto rows = nlohmann::ordered_json::array();
    for (Eigen::Index i = 0; i < cm.rows(); ++i) {
        auto row = nlohmann::ordered_json::array();
        for (Eigen::Index j = 0; j < cm.cols(); ++j) row.push_back(cm(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::ordered_json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["split"] = r.split;
    j["size"] = r.clean_confusion.sum();
    j["accuracy"] = r.accuracy;
    j["metric"] = r.metric;
    j["value"] = r.value;
    if (r.target) {
        j["target"] = *r.target;
        j["target_name"] = r.class_names.at(*r.target);
    }
    j["class_names"] = r.class_names;
    j["per_class"] = r.per_class;
    j["confusion"] = confusion_to_json(r.confusion);
    j["clean_confusion"] = confusion_to_json(r.clean_confusion);
    j["dominant_class"] = r.dominant_class;
    j["dominant_class_name"] = r.class_names.at(r.dominant_class);
    j["dominant_share"] = r.dominant_share;
    j["metadata"] = r.metadata;
    return j;
}

std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names) {
    if (static_cast<std::size_t>(cm.rows()) != class_names.size())
        throw std::invalid_argument("class name count does not match confusion matrix size");
    std::ostringstream out;
    out << "actual";
    for (const auto& name : class_names) out << ',' << name;
    out << '\n';
    for (Eigen::Index i = 0; i < cm.rows(); ++i) {
        out << class_names[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < cm.cols(); ++j) out << ',' << cm(i, j);
        out << '\n';
    }
    return out.str();
}

}  // namespace uap
