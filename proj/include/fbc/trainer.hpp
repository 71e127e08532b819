#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fbc/objectives.hpp"

namespace fbc {

/// Per-episode observability record. `target_accuracy` is filled only when an
/// evaluation harness is supplied; the trainer itself never sees target labels.
struct EpisodeMetrics {
    int episode = 0;
    double source_loss = 0.0;
    double target_loss = 0.0;
    double grad_inner_product = 0.0;
    double source_entropy = 0.0;
    double target_entropy = 0.0;
    std::optional<double> target_accuracy;
    int pseudo_label_count = 0;
    std::optional<double> proxy_a_distance;
};

/// Evaluation harness: the only component that holds target ground truth.
/// Hands out accuracy numbers, never labels.
class TargetEvaluator {
public:
    TargetEvaluator(std::vector<TargetScene> scenes, HiddenLabels hidden);
    double accuracy(const ParamVector& params, const ModelSizes& sizes) const;

private:
    std::vector<TargetScene> scenes_;
    HiddenLabels hidden_;
};

struct TrainOptions {
    std::uint64_t seed = 0;
    // Ablation switches: gradient alignment (the cyclic phases themselves),
    // local adversarial alignment, domain diversity.
    bool enable_gradient_alignment = true;
    bool enable_adv = true;
    bool enable_diversity = true;
    // Optional probe run every `pad_every` episodes (and on the last one);
    // wired by the caller so the trainer stays independent of the estimator.
    int pad_every = 0;
    std::function<double(const ParamVector&)> pad_probe;
};

struct TrainResult {
    ParamVector params;
    std::vector<EpisodeMetrics> metrics;
    bool aborted = false;
    std::string abort_reason;
};

/// One backward-hopping phase: theta_S <- theta, then one pass of per-scene
/// SGD on the source phase loss, pairing source scene i with target scene
/// i mod N_T for the adversarial term. `mean_loss_out`, when given, receives
/// the mean of the per-step loss values.
ParamVector backward_hop(const ParamVector& theta, const std::vector<Scene>& source,
                         const std::vector<TargetScene>& target, const ModelSizes& sizes,
                         const Hyperparams& hp, bool use_grl = true,
                         double* mean_loss_out = nullptr);

/// Argmax pseudo labels from the classifier at theta_s; instances whose top
/// probability falls below tau are marked not retained.
PseudoLabels generate_pseudo_labels(const ParamVector& theta_s,
                                    const std::vector<TargetScene>& target,
                                    const ModelSizes& sizes, double tau);

/// One forward-passing phase: theta_T <- theta, then per-scene SGD on the
/// target phase loss with fixed pseudo labels.
ParamVector forward_pass(const ParamVector& theta, const std::vector<TargetScene>& target,
                         const PseudoLabels& pseudo, const ModelSizes& sizes, const Hyperparams& hp,
                         double* mean_loss_out = nullptr);

/// Reptile-style shared-model update: theta + beta * (theta_phase - theta).
ParamVector meta_update(const ParamVector& theta, const ParamVector& theta_phase, double beta);

/// Full episodic training: per episode, backward hop, meta update, pseudo-label
/// generation, forward pass, meta update. Aborts with partial metrics if a
/// loss or an update goes non-finite. A single run is strictly single-threaded
/// for bit-reproducibility; runs with distinct seeds share nothing mutable.
TrainResult train(const std::vector<Scene>& source, const std::vector<TargetScene>& target,
                  const ModelSizes& sizes, const Hyperparams& hp, const TrainOptions& opts,
                  const TargetEvaluator* evaluator = nullptr);

/// Baseline: plain per-scene SGD on source cross entropy only, same episode
/// budget over the source set.
TrainResult train_source_only(const std::vector<Scene>& source,
                              const std::vector<TargetScene>& target, const ModelSizes& sizes,
                              const Hyperparams& hp, const TrainOptions& opts,
                              const TargetEvaluator* evaluator = nullptr);

/// Initialization shared by all training modes: seeded Gaussian, std 0.1.
ParamVector init_params(const ModelSizes& sizes, std::uint64_t seed);

/// Instance-level accuracy of the detector on labeled scenes.
double source_accuracy(const ParamVector& params, const ModelSizes& sizes,
                       const std::vector<Scene>& scenes);

} // namespace fbc
