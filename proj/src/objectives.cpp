#include "fbc/objectives.hpp"

#include <cmath>

#include "fbc/errors.hpp"

namespace fbc {
namespace {

constexpr double kFloor = Tape::kLogFloor;

// -log(p[label] + floor) for one instance on the tape.
NodeId instance_ce(Tape& tape, NodeId probs, int label, std::size_t n_cat) {
    if (label < 0 || static_cast<std::size_t>(label) >= n_cat) {
        throw LabelError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(n_cat) + " categories");
    }
    return tape.axpb(tape.log_floor(tape.pick(probs, static_cast<std::size_t>(label))), -1.0, 0.0);
}

// -sum(p * log(p + floor)) for one instance.
NodeId instance_entropy(Tape& tape, NodeId probs) {
    return tape.axpb(tape.sum(tape.mul(probs, tape.log_floor(probs))), -1.0, 0.0);
}

// 0.5*mean(s_S^2) + 0.5*mean((1-s_T)^2) from per-instance score nodes.
NodeId adversarial_node(Tape& tape, std::span<const NodeId> scores_s,
                        std::span<const NodeId> scores_t) {
    NodeId s = tape.concat(scores_s);
    NodeId t = tape.concat(scores_t);
    NodeId src_term = tape.axpb(tape.mean(tape.square(s)), 0.5, 0.0);
    NodeId tgt_term = tape.axpb(tape.mean(tape.square(tape.axpb(t, -1.0, 1.0))), 0.5, 0.0);
    return tape.add(src_term, tgt_term);
}

} // namespace

void Hyperparams::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("alpha: must be > 0");
    if (!(beta > 0.0)) throw ConfigError("beta: must be > 0");
    if (gamma < 0.0) throw ConfigError("gamma: must be >= 0");
    if (lambda_adv < 0.0) throw ConfigError("lambda_adv: must be >= 0");
    if (n_itr < 1) throw ConfigError("n_itr: must be >= 1");
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau: must be in [0, 1]");
}

double cross_entropy_scene(const std::vector<std::vector<double>>& probs,
                           const std::vector<int>& labels) {
    if (probs.size() != labels.size())
        throw ShapeError("cross_entropy_scene: one label per instance required");
    if (probs.empty()) throw ShapeError("cross_entropy_scene: empty scene");
    double acc = 0.0;
    for (std::size_t k = 0; k < probs.size(); ++k) {
        const int label = labels[k];
        if (label < 0 || static_cast<std::size_t>(label) >= probs[k].size()) {
            throw LabelError("label " + std::to_string(label) + " out of range for " +
                             std::to_string(probs[k].size()) + " categories");
        }
        acc += -std::log(probs[k][static_cast<std::size_t>(label)] + kFloor);
    }
    return acc / static_cast<double>(probs.size());
}

double entropy_scene(const std::vector<std::vector<double>>& probs) {
    if (probs.empty()) throw ShapeError("entropy_scene: empty scene");
    double acc = 0.0;
    for (const auto& row : probs) {
        double h = 0.0;
        for (double p : row) h -= p * std::log(p + kFloor);
        acc += h;
    }
    return acc / static_cast<double>(probs.size());
}

double adversarial_loss(const std::vector<double>& scores_s, const std::vector<double>& scores_t) {
    if (scores_s.empty() || scores_t.empty())
        throw ShapeError("adversarial_loss: empty score list");
    double s_acc = 0.0;
    for (double v : scores_s) s_acc += v * v;
    double t_acc = 0.0;
    for (double v : scores_t) t_acc += (1.0 - v) * (1.0 - v);
    return 0.5 * s_acc / static_cast<double>(scores_s.size()) +
           0.5 * t_acc / static_cast<double>(scores_t.size());
}

LossFn source_phase_loss_fn(const ModelSizes& sizes, const Scene& source,
                            const TargetScene& target, const Hyperparams& hp, bool use_grl) {
    if (source.instances.size() != source.labels.size())
        throw ShapeError("source scene labels do not cover instances");
    return [sizes, source, target, hp, use_grl](Tape& tape) -> NodeId {
        std::vector<NodeId> ce_terms, ent_terms, scores_s, scores_t;
        for (std::size_t k = 0; k < source.instances.size(); ++k) {
            InstanceNodes nodes = detector_instance(tape, sizes, source.instances[k]);
            NodeId probs = head_probs(tape, sizes, nodes.high);
            ce_terms.push_back(instance_ce(tape, probs, source.labels[k], sizes.num_categories()));
            if (hp.gamma > 0.0) ent_terms.push_back(instance_entropy(tape, probs));
            if (hp.lambda_adv > 0.0)
                scores_s.push_back(domain_score(tape, sizes, nodes.local, use_grl));
        }
        NodeId total = tape.mean_of(ce_terms);
        if (hp.lambda_adv > 0.0) {
            for (const auto& x : target.instances) {
                InstanceNodes nodes = detector_instance(tape, sizes, x);
                scores_t.push_back(domain_score(tape, sizes, nodes.local, use_grl));
            }
            NodeId adv = adversarial_node(tape, scores_s, scores_t);
            total = tape.add(total, tape.axpb(adv, hp.lambda_adv, 0.0));
        }
        if (hp.gamma > 0.0) {
            total = tape.sub(total, tape.axpb(tape.mean_of(ent_terms), hp.gamma, 0.0));
        }
        return total;
    };
}

LossFn target_phase_loss_fn(const ModelSizes& sizes, const TargetScene& target,
                            const ScenePseudoLabels& pseudo, const Hyperparams& hp) {
    if (pseudo.instances.size() != target.instances.size())
        throw ShapeError("pseudo labels do not cover target scene instances");
    return [sizes, target, pseudo, hp](Tape& tape) -> NodeId {
        std::vector<NodeId> ce_terms, ent_terms;
        for (std::size_t k = 0; k < target.instances.size(); ++k) {
            InstanceNodes nodes = detector_instance(tape, sizes, target.instances[k]);
            NodeId probs = head_probs(tape, sizes, nodes.high);
            if (pseudo.instances[k].retained) {
                ce_terms.push_back(
                    instance_ce(tape, probs, pseudo.instances[k].label, sizes.num_categories()));
            }
            if (hp.gamma > 0.0) ent_terms.push_back(instance_entropy(tape, probs));
        }
        NodeId total = ce_terms.empty() ? tape.constant(0.0) : tape.mean_of(ce_terms);
        if (hp.gamma > 0.0) {
            total = tape.add(total, tape.axpb(tape.mean_of(ent_terms), hp.gamma, 0.0));
        }
        return total;
    };
}

double source_phase_loss(const ParamVector& params, const ModelSizes& sizes, const Scene& source,
                         const TargetScene& target, const Hyperparams& hp) {
    return loss_value(source_phase_loss_fn(sizes, source, target, hp), params);
}

double target_phase_loss(const ParamVector& params, const ModelSizes& sizes,
                         const TargetScene& target, const ScenePseudoLabels& pseudo,
                         const Hyperparams& hp) {
    return loss_value(target_phase_loss_fn(sizes, target, pseudo, hp), params);
}

double diversity_value(const ParamVector& params, const ModelSizes& sizes,
                       const std::vector<Scene>& source, const std::vector<TargetScene>& target) {
    double src = 0.0;
    for (const Scene& s : source) src += entropy_scene(scene_probs(params, sizes, s.instances));
    src /= static_cast<double>(source.size());
    double tgt = 0.0;
    for (const TargetScene& t : target)
        tgt += entropy_scene(scene_probs(params, sizes, t.instances));
    tgt /= static_cast<double>(target.size());
    return -src + tgt;
}

LossFn scene_entropy_fn(const ModelSizes& sizes, const TargetScene& target) {
    return [sizes, target](Tape& tape) -> NodeId {
        std::vector<NodeId> ent_terms;
        for (const auto& x : target.instances) {
            InstanceNodes nodes = detector_instance(tape, sizes, x);
            ent_terms.push_back(instance_entropy(tape, head_probs(tape, sizes, nodes.high)));
        }
        return tape.mean_of(ent_terms);
    };
}

LossFn source_domain_loss_fn(const ModelSizes& sizes, const std::vector<Scene>& source) {
    return [sizes, source](Tape& tape) -> NodeId {
        std::vector<NodeId> scene_terms;
        for (const Scene& scene : source) {
            std::vector<NodeId> ce_terms;
            for (std::size_t k = 0; k < scene.instances.size(); ++k) {
                InstanceNodes nodes = detector_instance(tape, sizes, scene.instances[k]);
                NodeId probs = head_probs(tape, sizes, nodes.high);
                ce_terms.push_back(
                    instance_ce(tape, probs, scene.labels[k], sizes.num_categories()));
            }
            scene_terms.push_back(tape.mean_of(ce_terms));
        }
        return tape.mean_of(scene_terms);
    };
}

LossFn target_domain_loss_fn(const ModelSizes& sizes, const std::vector<TargetScene>& target,
                             const PseudoLabels& pseudo) {
    if (pseudo.size() != target.size())
        throw ShapeError("pseudo labels do not cover target scenes");
    return [sizes, target, pseudo](Tape& tape) -> NodeId {
        std::vector<NodeId> scene_terms;
        for (std::size_t s = 0; s < target.size(); ++s) {
            std::vector<NodeId> ce_terms;
            for (std::size_t k = 0; k < target[s].instances.size(); ++k) {
                if (!pseudo[s].instances[k].retained) continue;
                InstanceNodes nodes = detector_instance(tape, sizes, target[s].instances[k]);
                NodeId probs = head_probs(tape, sizes, nodes.high);
                ce_terms.push_back(instance_ce(tape, probs, pseudo[s].instances[k].label,
                                               sizes.num_categories()));
            }
            if (!ce_terms.empty()) scene_terms.push_back(tape.mean_of(ce_terms));
        }
        return scene_terms.empty() ? tape.constant(0.0) : tape.mean_of(scene_terms);
    };
}

} // namespace fbc
