#include "fbc/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fbc/errors.hpp"
#include "fbc/trainer.hpp"

namespace fbc {
namespace {

Gradient zeros(std::size_t n) {
    Gradient g;
    g.values.assign(n, 0.0);
    return g;
}

// H*v with a zero direction mapped to a zero product instead of an error;
// the analysis identities contract H with gradients that may vanish.
Gradient hvp_or_zero(const LossFn& loss, const ParamVector& theta, const Gradient& v,
                     double step) {
    if (norm(v) == 0.0) return zeros(theta.size());
    return hessian_vector_product(loss, theta, v, step);
}

GradientReport report_from_final(const LossFn& loss_s, const LossFn& loss_t,
                                 const ParamVector& theta0, const ParamVector& theta_final,
                                 double alpha, double hvp_step) {
    GradientReport r;
    r.g_bar_s = value_and_grad(loss_s, theta0).grad;
    r.g_bar_t = value_and_grad(loss_t, theta0).grad;
    r.g_e = zeros(theta0.size());
    for (std::size_t i = 0; i < theta0.size(); ++i) {
        r.g_e.values[i] = (theta0[i] - theta_final[i]) / alpha;
    }
    r.hvp_term = alpha * hvp_or_zero(loss_t, theta0, r.g_bar_s, hvp_step);
    Gradient prediction = r.g_bar_s + r.g_bar_t - r.hvp_term;
    r.residual_norm = norm(r.g_e - prediction);
    r.inner_product = dot(r.g_bar_s, r.g_bar_t);
    return r;
}

// Everything in both domains concatenated into one bag per domain, so one
// phase pass is exactly one SGD step on the whole-domain loss.
Scene merge_source(const std::vector<Scene>& scenes) {
    Scene merged;
    for (const Scene& s : scenes) {
        merged.instances.insert(merged.instances.end(), s.instances.begin(), s.instances.end());
        merged.labels.insert(merged.labels.end(), s.labels.begin(), s.labels.end());
    }
    return merged;
}

TargetScene merge_target(const std::vector<TargetScene>& scenes) {
    TargetScene merged;
    for (const TargetScene& s : scenes) {
        merged.instances.insert(merged.instances.end(), s.instances.begin(), s.instances.end());
    }
    return merged;
}

ScenePseudoLabels merge_pseudo(const PseudoLabels& pseudo) {
    ScenePseudoLabels merged;
    for (const auto& s : pseudo) {
        merged.instances.insert(merged.instances.end(), s.instances.begin(), s.instances.end());
    }
    return merged;
}

// Deterministic 80/20 index split.
void split_indices(std::size_t n, Rng& rng, std::vector<std::size_t>& train,
                   std::vector<std::size_t>& test) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) {
        std::size_t j = rng.uniform_int(i);
        std::swap(idx[i - 1], idx[j]);
    }
    std::size_t n_test = std::max<std::size_t>(1, n / 5);
    test.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
}

} // namespace

double grad_inner_product(const ParamVector& theta, const std::vector<Scene>& source,
                          const std::vector<TargetScene>& target, const PseudoLabels& pseudo,
                          const ModelSizes& sizes) {
    Gradient gs = value_and_grad(source_domain_loss_fn(sizes, source), theta).grad;
    Gradient gt = value_and_grad(target_domain_loss_fn(sizes, target, pseudo), theta).grad;
    return dot(gs, gt);
}

GradientReport taylor_residual(const LossFn& loss_s, const LossFn& loss_t,
                               const ParamVector& theta, double alpha, double hvp_step) {
    if (!(alpha > 0.0)) throw ConfigError("taylor_residual: alpha must be > 0");
    ParamVector theta1 = theta;
    Gradient g1 = value_and_grad(loss_s, theta).grad;
    for (std::size_t i = 0; i < theta1.size(); ++i) theta1[i] -= alpha * g1[i];
    ParamVector theta2 = theta1;
    Gradient g2 = value_and_grad(loss_t, theta1).grad;
    for (std::size_t i = 0; i < theta2.size(); ++i) theta2[i] -= alpha * g2[i];
    return report_from_final(loss_s, loss_t, theta, theta2, alpha, hvp_step);
}

GradientReport taylor_residual(const ParamVector& theta, const std::vector<Scene>& source,
                               const std::vector<TargetScene>& target, const PseudoLabels& pseudo,
                               const ModelSizes& sizes, double alpha) {
    if (!(alpha > 0.0)) throw ConfigError("taylor_residual: alpha must be > 0");
    const Scene merged_s = merge_source(source);
    const TargetScene merged_t = merge_target(target);
    const ScenePseudoLabels merged_p = merge_pseudo(pseudo);

    Hyperparams hp;
    hp.alpha = alpha;
    hp.lambda_adv = 0.0;
    hp.gamma = 0.0;

    LossFn loss_s = source_phase_loss_fn(sizes, merged_s, TargetScene{}, hp, false);
    LossFn loss_t = target_phase_loss_fn(sizes, merged_t, merged_p, hp);

    // One step per phase through the real trainer code paths (beta = 1).
    ParamVector theta1 = backward_hop(theta, {merged_s}, {}, sizes, hp);
    ParamVector theta2 = forward_pass(theta1, {merged_t}, {merged_p}, sizes, hp);
    return report_from_final(loss_s, loss_t, theta, theta2, alpha, 1e-4);
}

double product_rule_check(const LossFn& loss_s, const LossFn& loss_t, const ParamVector& theta,
                          double fd_step, double hvp_step) {
    Gradient gs = value_and_grad(loss_s, theta).grad;
    Gradient gt = value_and_grad(loss_t, theta).grad;
    Gradient lhs = hvp_or_zero(loss_t, theta, gs, hvp_step) +
                   hvp_or_zero(loss_s, theta, gt, hvp_step);

    // d/dtheta <grad_s, grad_t> by central differences.
    Gradient rhs = zeros(theta.size());
    ParamVector work = theta;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double original = work[i];
        work[i] = original + fd_step;
        const double up = dot(value_and_grad(loss_s, work).grad, value_and_grad(loss_t, work).grad);
        work[i] = original - fd_step;
        const double down =
            dot(value_and_grad(loss_s, work).grad, value_and_grad(loss_t, work).grad);
        work[i] = original;
        rhs.values[i] = (up - down) / (2.0 * fd_step);
    }

    const double scale = std::max(norm(lhs), norm(rhs));
    if (scale == 0.0) return 0.0;
    return norm(lhs - rhs) / scale;
}

double product_rule_check(const ParamVector& theta, const std::vector<Scene>& source,
                          const std::vector<TargetScene>& target, const PseudoLabels& pseudo,
                          const ModelSizes& sizes) {
    return product_rule_check(source_domain_loss_fn(sizes, source),
                              target_domain_loss_fn(sizes, target, pseudo), theta);
}

ProxyADistanceResult proxy_a_distance(const std::vector<std::vector<double>>& features_source,
                                      const std::vector<std::vector<double>>& features_target,
                                      std::uint64_t seed) {
    if (features_source.size() < 20 || features_target.size() < 20) {
        throw DataError("proxy_a_distance: need at least 20 instances per domain, got " +
                        std::to_string(features_source.size()) + "/" +
                        std::to_string(features_target.size()));
    }
    const std::size_t dim = features_source.front().size();
    ModelSizes dc_sizes;
    dc_sizes.d_low = dim;
    dc_sizes.dc_hidden = 16;

    Rng rng(seed);
    std::vector<std::size_t> train_s, test_s, train_t, test_t;
    split_indices(features_source.size(), rng, train_s, test_s);
    split_indices(features_target.size(), rng, train_t, test_t);

    ParamVector params = ParamVector::random_normal(domain_classifier_layout(dc_sizes), 0.1, rng);

    // Least-squares domain loss over the training split, full batch.
    LossFn loss = [&](Tape& tape) {
        std::vector<NodeId> ss, tt;
        for (std::size_t i : train_s) {
            NodeId x = tape.constant(features_source[i]);
            ss.push_back(domain_score(tape, dc_sizes, x, false));
        }
        for (std::size_t i : train_t) {
            NodeId x = tape.constant(features_target[i]);
            tt.push_back(domain_score(tape, dc_sizes, x, false));
        }
        NodeId s_term = tape.axpb(tape.mean(tape.square(tape.concat(ss))), 0.5, 0.0);
        NodeId t_term =
            tape.axpb(tape.mean(tape.square(tape.axpb(tape.concat(tt), -1.0, 1.0))), 0.5, 0.0);
        return tape.add(s_term, t_term);
    };
    constexpr int kEpochs = 200;
    constexpr double kLr = 0.5;
    for (int e = 0; e < kEpochs; ++e) {
        Gradient g = value_and_grad(loss, params).grad;
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= kLr * g[i];
    }

    std::size_t errors = 0;
    std::vector<std::vector<double>> batch;
    for (std::size_t i : test_s) batch.push_back(features_source[i]);
    auto scores = domain_discriminate(params, dc_sizes, batch);
    for (double s : scores) {
        if (s > 0.5) ++errors; // source scored as target
    }
    batch.clear();
    for (std::size_t i : test_t) batch.push_back(features_target[i]);
    scores = domain_discriminate(params, dc_sizes, batch);
    for (double s : scores) {
        if (s <= 0.5) ++errors; // target scored as source
    }
    ProxyADistanceResult out;
    out.test_error =
        static_cast<double>(errors) / static_cast<double>(test_s.size() + test_t.size());
    out.value = std::clamp(2.0 * (1.0 - 2.0 * out.test_error), 0.0, 2.0);
    return out;
}

JointErrorResult ideal_joint_error(const std::vector<Scene>& source,
                                   const std::vector<Scene>& target_labeled,
                                   const ModelSizes& sizes, std::uint64_t seed) {
    if (source.size() < 5 || target_labeled.size() < 5) {
        throw DataError("ideal_joint_error: need at least 5 scenes per domain");
    }
    Rng rng(seed);
    std::vector<std::size_t> train_s, test_s, train_t, test_t;
    split_indices(source.size(), rng, train_s, test_s);
    split_indices(target_labeled.size(), rng, train_t, test_t);

    ParamVector params = ParamVector::random_normal(detector_layout(sizes), 0.1, rng);
    Hyperparams hp;
    hp.lambda_adv = 0.0;
    hp.gamma = 0.0;

    constexpr int kEpochs = 40;
    constexpr double kLr = 0.05;
    hp.alpha = kLr;
    for (int e = 0; e < kEpochs; ++e) {
        for (std::size_t i : train_s) {
            auto loss = source_phase_loss_fn(sizes, source[i], TargetScene{}, hp, false);
            Gradient g = value_and_grad(loss, params).grad;
            for (std::size_t k = 0; k < params.size(); ++k) params[k] -= kLr * g[k];
        }
        for (std::size_t i : train_t) {
            auto loss = source_phase_loss_fn(sizes, target_labeled[i], TargetScene{}, hp, false);
            Gradient g = value_and_grad(loss, params).grad;
            for (std::size_t k = 0; k < params.size(); ++k) params[k] -= kLr * g[k];
        }
    }

    std::vector<Scene> eval_s, eval_t;
    for (std::size_t i : test_s) eval_s.push_back(source[i]);
    for (std::size_t i : test_t) eval_t.push_back(target_labeled[i]);
    JointErrorResult out;
    out.source_error = 1.0 - source_accuracy(params, sizes, eval_s);
    out.target_error = 1.0 - source_accuracy(params, sizes, eval_t);
    out.total = out.source_error + out.target_error;
    return out;
}

std::vector<std::vector<double>> collect_local_features(const ParamVector& params,
                                                        const ModelSizes& sizes,
                                                        const std::vector<Scene>& scenes) {
    std::vector<std::vector<double>> out;
    for (const Scene& s : scenes) {
        auto feats = extract_features(params, sizes, s.instances);
        for (auto& f : feats.local) out.push_back(std::move(f));
    }
    return out;
}

std::vector<std::vector<double>> collect_local_features(const ParamVector& params,
                                                        const ModelSizes& sizes,
                                                        const std::vector<TargetScene>& scenes) {
    std::vector<std::vector<double>> out;
    for (const TargetScene& s : scenes) {
        auto feats = extract_features(params, sizes, s.instances);
        for (auto& f : feats.local) out.push_back(std::move(f));
    }
    return out;
}

} // namespace fbc
