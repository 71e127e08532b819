#include "fbc/trainer.hpp"

#include <cmath>

#include "fbc/analysis.hpp"
#include "fbc/errors.hpp"

namespace fbc {
namespace {

void sgd_step(ParamVector& params, const Gradient& grad, double alpha, const char* phase) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= alpha * grad[i];
    if (!params.all_finite()) {
        throw NonFiniteLoss(std::string("parameter update produced non-finite values in ") + phase);
    }
}

int argmax_row(const std::vector<double>& row) {
    int best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
        if (row[j] > row[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
    }
    return best;
}

Hyperparams effective_hp(const Hyperparams& hp, const TrainOptions& opts) {
    Hyperparams eff = hp;
    if (!opts.enable_adv) eff.lambda_adv = 0.0;
    if (!opts.enable_diversity) eff.gamma = 0.0;
    return eff;
}

double mean_scene_entropy(const ParamVector& params, const ModelSizes& sizes,
                          const std::vector<TargetScene>& scenes) {
    double acc = 0.0;
    for (const TargetScene& s : scenes) acc += entropy_scene(scene_probs(params, sizes, s.instances));
    return acc / static_cast<double>(scenes.size());
}

double mean_scene_entropy(const ParamVector& params, const ModelSizes& sizes,
                          const std::vector<Scene>& scenes) {
    double acc = 0.0;
    for (const Scene& s : scenes) acc += entropy_scene(scene_probs(params, sizes, s.instances));
    return acc / static_cast<double>(scenes.size());
}

int retained_count(const PseudoLabels& pseudo) {
    int n = 0;
    for (const auto& scene : pseudo) {
        for (const auto& p : scene.instances) {
            if (p.retained) ++n;
        }
    }
    return n;
}

} // namespace

TargetEvaluator::TargetEvaluator(std::vector<TargetScene> scenes, HiddenLabels hidden)
    : scenes_(std::move(scenes)), hidden_(std::move(hidden)) {
    if (hidden_.labels.size() != scenes_.size())
        throw DataError("hidden labels do not cover the target scenes");
    for (std::size_t s = 0; s < scenes_.size(); ++s) {
        if (hidden_.labels[s].size() != scenes_[s].instances.size())
            throw DataError("hidden labels do not cover scene " +
                            std::to_string(scenes_[s].scene_id));
    }
}

double TargetEvaluator::accuracy(const ParamVector& params, const ModelSizes& sizes) const {
    std::size_t correct = 0, total = 0;
    for (std::size_t s = 0; s < scenes_.size(); ++s) {
        auto probs = scene_probs(params, sizes, scenes_[s].instances);
        for (std::size_t k = 0; k < probs.size(); ++k) {
            if (argmax_row(probs[k]) == hidden_.labels[s][k]) ++correct;
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

ParamVector backward_hop(const ParamVector& theta, const std::vector<Scene>& source,
                         const std::vector<TargetScene>& target, const ModelSizes& sizes,
                         const Hyperparams& hp, bool use_grl, double* mean_loss_out) {
    if (source.empty()) throw DataError("backward_hop: no source scenes");
    if (hp.lambda_adv > 0.0 && target.empty())
        throw DataError("backward_hop: adversarial term needs target scenes");
    static const TargetScene kNoTarget{};
    ParamVector theta_s = theta;
    double loss_acc = 0.0;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const TargetScene& paired =
            hp.lambda_adv > 0.0 ? target[i % target.size()] : kNoTarget;
        auto loss = source_phase_loss_fn(sizes, source[i], paired, hp, use_grl);
        ValueGrad vg = value_and_grad(loss, theta_s);
        loss_acc += vg.value;
        sgd_step(theta_s, vg.grad, hp.alpha, "backward hop");
    }
    if (mean_loss_out) *mean_loss_out = loss_acc / static_cast<double>(source.size());
    return theta_s;
}

PseudoLabels generate_pseudo_labels(const ParamVector& theta_s,
                                    const std::vector<TargetScene>& target,
                                    const ModelSizes& sizes, double tau) {
    PseudoLabels out;
    out.reserve(target.size());
    for (const TargetScene& scene : target) {
        ScenePseudoLabels sp;
        sp.scene_id = scene.scene_id;
        auto probs = scene_probs(theta_s, sizes, scene.instances);
        for (const auto& row : probs) {
            PseudoLabel p;
            p.label = argmax_row(row);
            p.confidence = row[static_cast<std::size_t>(p.label)];
            p.retained = p.confidence >= tau;
            sp.instances.push_back(p);
        }
        out.push_back(std::move(sp));
    }
    return out;
}

ParamVector forward_pass(const ParamVector& theta, const std::vector<TargetScene>& target,
                         const PseudoLabels& pseudo, const ModelSizes& sizes, const Hyperparams& hp,
                         double* mean_loss_out) {
    if (target.empty()) throw DataError("forward_pass: no target scenes");
    if (pseudo.size() != target.size())
        throw ShapeError("forward_pass: pseudo labels do not cover target scenes");
    ParamVector theta_t = theta;
    double loss_acc = 0.0;
    for (std::size_t j = 0; j < target.size(); ++j) {
        auto loss = target_phase_loss_fn(sizes, target[j], pseudo[j], hp);
        ValueGrad vg = value_and_grad(loss, theta_t);
        loss_acc += vg.value;
        sgd_step(theta_t, vg.grad, hp.alpha, "forward pass");
    }
    if (mean_loss_out) *mean_loss_out = loss_acc / static_cast<double>(target.size());
    return theta_t;
}

ParamVector meta_update(const ParamVector& theta, const ParamVector& theta_phase, double beta) {
    if (!theta.same_layout(theta_phase)) throw LayoutMismatch("meta_update: layout mismatch");
    if (beta == 1.0) return theta_phase;
    if (beta == 0.0) return theta;
    ParamVector out = theta;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = theta[i] + beta * (theta_phase[i] - theta[i]);
    }
    return out;
}

ParamVector init_params(const ModelSizes& sizes, std::uint64_t seed) {
    Rng rng(seed);
    return ParamVector::random_normal(model_layout(sizes), 0.1, rng);
}

double source_accuracy(const ParamVector& params, const ModelSizes& sizes,
                       const std::vector<Scene>& scenes) {
    std::size_t correct = 0, total = 0;
    for (const Scene& s : scenes) {
        auto probs = scene_probs(params, sizes, s.instances);
        for (std::size_t k = 0; k < probs.size(); ++k) {
            if (argmax_row(probs[k]) == s.labels[k]) ++correct;
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

TrainResult train(const std::vector<Scene>& source, const std::vector<TargetScene>& target,
                  const ModelSizes& sizes, const Hyperparams& hp, const TrainOptions& opts,
                  const TargetEvaluator* evaluator) {
    const Hyperparams eff = effective_hp(hp, opts);
    TrainResult result;
    result.params = init_params(sizes, opts.seed);

    for (int t = 0; t < eff.n_itr; ++t) {
        EpisodeMetrics m;
        m.episode = t;
        try {
            PseudoLabels pseudo;
            if (opts.enable_gradient_alignment) {
                ParamVector theta_s =
                    backward_hop(result.params, source, target, sizes, eff, true, &m.source_loss);
                result.params = meta_update(result.params, theta_s, eff.beta);
                pseudo = generate_pseudo_labels(result.params, target, sizes, eff.tau);
                ParamVector theta_t =
                    forward_pass(result.params, target, pseudo, sizes, eff, &m.target_loss);
                result.params = meta_update(result.params, theta_t, eff.beta);
            } else {
                // Joint single-model SGD on the combined objective; used when
                // the cyclic phases are ablated away.
                double loss_acc = 0.0;
                for (std::size_t i = 0; i < source.size(); ++i) {
                    const TargetScene& paired = target[i % target.size()];
                    auto src_part = source_phase_loss_fn(sizes, source[i], paired, eff, true);
                    auto tgt_entropy = scene_entropy_fn(sizes, paired);
                    auto joint = [&](Tape& tape) {
                        NodeId total = src_part(tape);
                        if (eff.gamma > 0.0) {
                            total = tape.add(total, tape.axpb(tgt_entropy(tape), eff.gamma, 0.0));
                        }
                        return total;
                    };
                    ValueGrad vg = value_and_grad(joint, result.params);
                    loss_acc += vg.value;
                    sgd_step(result.params, vg.grad, eff.alpha, "joint update");
                }
                m.source_loss = loss_acc / static_cast<double>(source.size());
                pseudo = generate_pseudo_labels(result.params, target, sizes, eff.tau);
            }
            m.pseudo_label_count = retained_count(pseudo);
            m.grad_inner_product = grad_inner_product(result.params, source, target, pseudo, sizes);
            m.source_entropy = mean_scene_entropy(result.params, sizes, source);
            m.target_entropy = mean_scene_entropy(result.params, sizes, target);
            if (evaluator) m.target_accuracy = evaluator->accuracy(result.params, sizes);
            if (opts.pad_probe && opts.pad_every > 0 &&
                ((t + 1) % opts.pad_every == 0 || t + 1 == eff.n_itr)) {
                m.proxy_a_distance = opts.pad_probe(result.params);
            }
        } catch (const NonFiniteLoss& e) {
            result.aborted = true;
            result.abort_reason = "episode " + std::to_string(t) + ": " + e.what();
            break;
        }
        result.metrics.push_back(m);
    }
    return result;
}

TrainResult train_source_only(const std::vector<Scene>& source,
                              const std::vector<TargetScene>& target, const ModelSizes& sizes,
                              const Hyperparams& hp, const TrainOptions& opts,
                              const TargetEvaluator* evaluator) {
    if (source.empty()) throw DataError("train_source_only: no source scenes");
    Hyperparams eff = hp;
    eff.lambda_adv = 0.0;
    eff.gamma = 0.0;
    TrainResult result;
    result.params = init_params(sizes, opts.seed);

    for (int t = 0; t < eff.n_itr; ++t) {
        EpisodeMetrics m;
        m.episode = t;
        try {
            double loss_acc = 0.0;
            for (const Scene& scene : source) {
                auto loss = source_phase_loss_fn(sizes, scene, TargetScene{}, eff, false);
                ValueGrad vg = value_and_grad(loss, result.params);
                loss_acc += vg.value;
                sgd_step(result.params, vg.grad, eff.alpha, "source-only update");
            }
            m.source_loss = loss_acc / static_cast<double>(source.size());
            m.source_entropy = mean_scene_entropy(result.params, sizes, source);
            m.target_entropy = mean_scene_entropy(result.params, sizes, target);
            if (evaluator) m.target_accuracy = evaluator->accuracy(result.params, sizes);
        } catch (const NonFiniteLoss& e) {
            result.aborted = true;
            result.abort_reason = "episode " + std::to_string(t) + ": " + e.what();
            break;
        }
        result.metrics.push_back(m);
    }
    return result;
}

} // namespace fbc
