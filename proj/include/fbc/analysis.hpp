#pragma once

#include <cstdint>
#include <vector>

#include "fbc/objectives.hpp"

namespace fbc {

/// Gradients captured around one two-phase episode, for checking the
/// second-order expansion of the sequential update.
struct GradientReport {
    Gradient g_bar_s;   // source-loss gradient at the shared parameters
    Gradient g_bar_t;   // target-loss gradient at the shared parameters
    Gradient g_e;       // realized episode gradient (theta0 - theta_final)/alpha
    Gradient hvp_term;  // alpha * H_T(theta0) * g_bar_s
    double residual_norm = 0.0; // |g_e - (g_bar_s + g_bar_t - hvp_term)|
    double inner_product = 0.0; // <g_bar_s, g_bar_t>
};

/// Inner product of the two domains' classification-loss gradients, both
/// evaluated at the same parameters over whole-domain mean losses.
double grad_inner_product(const ParamVector& theta, const std::vector<Scene>& source,
                          const std::vector<TargetScene>& target, const PseudoLabels& pseudo,
                          const ModelSizes& sizes);

// Residual of the expansion g_e = g_s + g_t - alpha*H_t*g_s + O(alpha^2).
// The generic form simulates the two SGD steps directly from the loss pair;
// the scene form merges each domain into a single bag and obtains the final
// parameters from the actual backward-hop / forward-pass code paths.
GradientReport taylor_residual(const LossFn& loss_s, const LossFn& loss_t,
                               const ParamVector& theta, double alpha, double hvp_step = 1e-4);
GradientReport taylor_residual(const ParamVector& theta, const std::vector<Scene>& source,
                               const std::vector<TargetScene>& target, const PseudoLabels& pseudo,
                               const ModelSizes& sizes, double alpha);

// Relative error of the product-rule identity
//   H_t*g_s + H_s*g_t = d/dtheta <g_s, g_t>,
// left side from two Hessian-vector products, right side from central
// differences of the inner product.
double product_rule_check(const LossFn& loss_s, const LossFn& loss_t, const ParamVector& theta,
                          double fd_step = 1e-5, double hvp_step = 1e-4);
double product_rule_check(const ParamVector& theta, const std::vector<Scene>& source,
                          const std::vector<TargetScene>& target, const PseudoLabels& pseudo,
                          const ModelSizes& sizes);

/// Proxy A-distance fragment: 2*(1 - 2*eps) clamped to [0, 2], where eps is
/// the held-out error of a domain classifier trained from scratch on an 80/20
/// split of the per-instance features.
struct ProxyADistanceResult {
    double value = 0.0;
    double test_error = 0.5;
};
ProxyADistanceResult proxy_a_distance(const std::vector<std::vector<double>>& features_source,
                                      const std::vector<std::vector<double>>& features_target,
                                      std::uint64_t seed);

/// Ideal-joint-hypothesis error: trains one detector on the union of both
/// labeled domains and returns held-out source error + target error.
/// Evaluation-harness context only; target labels are permitted here.
struct JointErrorResult {
    double total = 0.0;
    double source_error = 0.0;
    double target_error = 0.0;
};
JointErrorResult ideal_joint_error(const std::vector<Scene>& source,
                                   const std::vector<Scene>& target_labeled,
                                   const ModelSizes& sizes, std::uint64_t seed);

/// Domain-divergence diagnostics in one record.
struct DivergenceReport {
    double proxy_a_distance = 0.0;
    double domain_classifier_test_error = 0.5;
    double ideal_joint_error = 0.0;
    double source_error = 0.0;
    double target_error = 0.0;
};

// Low-level per-instance features of whole domains, the input to the
// divergence estimators.
std::vector<std::vector<double>> collect_local_features(const ParamVector& params,
                                                        const ModelSizes& sizes,
                                                        const std::vector<Scene>& scenes);
std::vector<std::vector<double>> collect_local_features(const ParamVector& params,
                                                        const ModelSizes& sizes,
                                                        const std::vector<TargetScene>& scenes);

} // namespace fbc
