#pragma once

#include <vector>

#include "fbc/model.hpp"
#include "fbc/synthdata.hpp"
#include "fbc/tape.hpp"

namespace fbc {

/// Training hyperparameters.
struct Hyperparams {
    double alpha = 0.05;      // inner SGD learning rate
    double beta = 1.0;        // meta-update rate
    double gamma = 0.1;       // diversity weight
    double lambda_adv = 0.5;  // adversarial weight
    int n_itr = 40;           // episode count
    double tau = 0.7;         // pseudo-label confidence threshold

    void validate() const; // throws ConfigError
};

struct PseudoLabel {
    int label = 0;
    double confidence = 0.0;
    bool retained = false; // confidence >= tau; only retained instances enter the CE term
};

struct ScenePseudoLabels {
    int scene_id = 0;
    std::vector<PseudoLabel> instances;
};

using PseudoLabels = std::vector<ScenePseudoLabels>;

// Plain scalar losses over probability rows / classifier scores.
double cross_entropy_scene(const std::vector<std::vector<double>>& probs,
                           const std::vector<int>& labels); // throws LabelError
double entropy_scene(const std::vector<std::vector<double>>& probs);
// Least-squares domain loss, source scored toward 0 and target toward 1:
// 0.5*mean(s_S^2) + 0.5*mean((1 - s_T)^2).
double adversarial_loss(const std::vector<double>& scores_s, const std::vector<double>& scores_t);

// Differentiable per-scene losses. The source phase combines detection CE,
// the adversarial term (routed through the gradient reversal op into the
// extractor) and a maximum-entropy term; the target phase combines pseudo-label
// CE with a minimum-entropy term.
LossFn source_phase_loss_fn(const ModelSizes& sizes, const Scene& source, const TargetScene& target,
                            const Hyperparams& hp, bool use_grl = true);
LossFn target_phase_loss_fn(const ModelSizes& sizes, const TargetScene& target,
                            const ScenePseudoLabels& pseudo, const Hyperparams& hp);

// Loss values at fixed parameters.
double source_phase_loss(const ParamVector& params, const ModelSizes& sizes, const Scene& source,
                         const TargetScene& target, const Hyperparams& hp);
double target_phase_loss(const ParamVector& params, const ModelSizes& sizes,
                         const TargetScene& target, const ScenePseudoLabels& pseudo,
                         const Hyperparams& hp);

// Domain-diversity diagnostic: -(mean source prediction entropy) + (mean
// target prediction entropy).
double diversity_value(const ParamVector& params, const ModelSizes& sizes,
                       const std::vector<Scene>& source, const std::vector<TargetScene>& target);

// Mean prediction entropy of one target scene, differentiable.
LossFn scene_entropy_fn(const ModelSizes& sizes, const TargetScene& target);

// Whole-domain mean classification losses, used by the gradient-alignment
// meters: mean over scenes of the per-scene cross entropy.
LossFn source_domain_loss_fn(const ModelSizes& sizes, const std::vector<Scene>& source);
LossFn target_domain_loss_fn(const ModelSizes& sizes, const std::vector<TargetScene>& target,
                             const PseudoLabels& pseudo);

} // namespace fbc
