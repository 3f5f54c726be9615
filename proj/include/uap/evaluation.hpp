#ifndef UAP_EVALUATION_HPP
#define UAP_EVALUATION_HPP

#include "uap/attacks.hpp"
#include "uap/dataset.hpp"
#include "uap/diffnet.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace uap {

// Rows are actual classes, columns predicted classes.
using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

// Predicted class of every image, optionally after clip(x + rho).
std::vector<ClassId> predictions(const Network& net, const Dataset& data, const Tensor* rho = nullptr);

double accuracy(const Network& net, const Dataset& data);

// Fraction of images with predict(clip(x + rho)) != actual label, computed as
// 1 - correct / N so that rho = 0 reproduces 1 - accuracy bit-exactly.
double fooling_rate(const Network& net, const Dataset& data, const Tensor& rho);
double fooling_rate(const Network& net, const Dataset& data, const Perturbation& rho);

// Fraction of images with predict(clip(x + rho)) == target.
double targeted_success_rate(const Network& net, const Dataset& data, const Tensor& rho, ClassId target);
double targeted_success_rate(const Network& net, const Dataset& data, const Perturbation& rho, ClassId target);

ConfusionMatrix confusion_matrix(std::span<const ClassId> actual, std::span<const ClassId> predicted, std::size_t k);
ConfusionMatrix confusion_matrix(const Network& net, const Dataset& data, const Tensor* rho = nullptr);

// Index of the column holding the most predictions (lowest index on ties)
// and that column's share of all predictions.
std::pair<ClassId, double> dominant_column(const ConfusionMatrix& cm);

// Mean per-image Lp norm, pixel units.
double dataset_norm_stats(const Dataset& data, Norm p);

// xi = zeta * dataset_norm_stats(data, p).
AttackBudget resolve_budget(double zeta, const Dataset& data, Norm p);

struct EvalReport {
    std::string split;
    double accuracy = 0.0;                 // clean
    std::string metric;                    // "R_f", "R_s" or "none"
    double value = 0.0;
    std::optional<ClassId> target;
    ConfusionMatrix confusion;             // after perturbation
    ConfusionMatrix clean_confusion;
    std::vector<double> per_class;         // per actual class: fooled (R_f) or sent to target (R_s)
    std::vector<std::string> class_names;
    ClassId dominant_class = 0;
    double dominant_share = 0.0;
    nlohmann::ordered_json metadata = nlohmann::ordered_json::object();
};

// Clean accuracy and confusion always; with rho, the attack metric (R_s if a
// target is given, R_f otherwise) and the perturbed confusion matrix.
EvalReport evaluate(const Network& net, const Dataset& data, const Perturbation* rho = nullptr,
                    std::optional<ClassId> target = std::nullopt);

nlohmann::ordered_json to_json(const EvalReport& report);
nlohmann::ordered_json confusion_to_json(const ConfusionMatrix& cm);

// Header row of class names, then one row per actual class.
std::string confusion_csv(const ConfusionMatrix& cm, const std::vector<std::string>& class_names);

}  // namespace uap

#endif  // UAP_EVALUATION_HPP
