#include "fbc/verify.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "fbc/errors.hpp"
#include "fbc/report_io.hpp"
#include "fbc/trainer.hpp"

namespace fbc {
namespace {

using ordered_json = nlohmann::ordered_json;

struct TestConfig {
    ModelSizes sizes;
    ParamVector params;
    std::vector<Scene> source;
    std::vector<TargetScene> target;
    PseudoLabels pseudo;
    Hyperparams hp;
};

// Randomized architecture + data for gradient-level checks. Sizes vary with
// the seed; parameters use std 0.5 so the nonlinearities are active.
TestConfig make_config(std::uint64_t seed, bool small) {
    Rng rng(seed);
    TestConfig cfg;
    if (small) {
        cfg.sizes.d_in = 3 + rng.uniform_int(2);
        cfg.sizes.d_low = 4 + rng.uniform_int(3);
        cfg.sizes.d_high = 4 + rng.uniform_int(3);
        cfg.sizes.num_classes = 2;
        cfg.sizes.dc_hidden = 3 + rng.uniform_int(2);
    } else {
        cfg.sizes.d_in = 3 + rng.uniform_int(6);
        cfg.sizes.d_low = 4 + rng.uniform_int(17);
        cfg.sizes.d_high = 4 + rng.uniform_int(17);
        cfg.sizes.num_classes = 2 + rng.uniform_int(3);
        cfg.sizes.dc_hidden = 4 + rng.uniform_int(13);
    }
    cfg.params = ParamVector::random_normal(model_layout(cfg.sizes), 0.5, rng);

    const std::size_t n_scenes = 1 + rng.uniform_int(small ? 1 : 3);
    const std::size_t k = 2 + rng.uniform_int(small ? 2 : 5);
    for (std::size_t s = 0; s < n_scenes; ++s) {
        Scene sc;
        sc.scene_id = static_cast<int>(s);
        TargetScene tc;
        tc.scene_id = static_cast<int>(s);
        for (std::size_t i = 0; i < k; ++i) {
            std::vector<double> xs(cfg.sizes.d_in), xt(cfg.sizes.d_in);
            for (auto& v : xs) v = rng.normal();
            for (auto& v : xt) v = rng.normal();
            sc.instances.push_back(std::move(xs));
            sc.labels.push_back(static_cast<int>(rng.uniform_int(cfg.sizes.num_categories())));
            tc.instances.push_back(std::move(xt));
        }
        cfg.source.push_back(std::move(sc));
        cfg.target.push_back(std::move(tc));
    }
    cfg.pseudo = generate_pseudo_labels(cfg.params, cfg.target, cfg.sizes, 0.0);
    return cfg;
}

double max_rel_error(const Gradient& a, const Gradient& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::fabs(a[i] - b[i]) / (1.0 + std::fabs(a[i])));
    }
    return worst;
}

// Seeded symmetric positive-definite matrix (M^T M + I) and its product.
std::vector<double> spd_matrix(std::size_t n, Rng& rng) {
    std::vector<double> m(n * n);
    for (auto& v : m) v = rng.normal(0.0, 0.5);
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = i == j ? 1.0 : 0.0;
            for (std::size_t k = 0; k < n; ++k) acc += m[k * n + i] * m[k * n + j];
            a[i * n + j] = acc;
        }
    }
    return a;
}

std::vector<double> matvec(const std::vector<double>& a, std::size_t n,
                           const std::vector<double>& x) {
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) y[i] += a[i * n + j] * x[j];
    }
    return y;
}

// 0.5 * theta^T A theta + c^T theta on the tape.
LossFn quadratic_loss(std::vector<double> a, std::size_t n, std::vector<double> c) {
    return [a = std::move(a), c = std::move(c), n](Tape& tape) {
        NodeId theta = tape.param_all();
        NodeId zero = tape.constant(std::vector<double>(n, 0.0));
        NodeId atheta = tape.affine(tape.constant(a), n, n, theta, zero);
        NodeId quad = tape.axpb(tape.dot(theta, atheta), 0.5, 0.0);
        return tape.add(quad, tape.dot(tape.constant(c), theta));
    };
}

ParamVector theta_vector(std::size_t n, Rng& rng, double stddev = 1.0) {
    ParamVector theta(std::vector<Segment>{{"theta", n, 1}});
    for (std::size_t i = 0; i < n; ++i) theta[i] = rng.normal(0.0, stddev);
    return theta;
}

Gradient to_grad(std::vector<double> v) {
    Gradient g;
    g.values = std::move(v);
    return g;
}

// Pure adversarial term lambda * L_adv for one source/target scene pair.
LossFn scaled_adversarial_fn(const ModelSizes& sizes, const Scene& src, const TargetScene& tgt,
                             double lambda, bool use_grl) {
    return [sizes, src, tgt, lambda, use_grl](Tape& tape) {
        std::vector<NodeId> ss, tt;
        for (const auto& x : src.instances) {
            InstanceNodes nodes = detector_instance(tape, sizes, x);
            ss.push_back(domain_score(tape, sizes, nodes.local, use_grl));
        }
        for (const auto& x : tgt.instances) {
            InstanceNodes nodes = detector_instance(tape, sizes, x);
            tt.push_back(domain_score(tape, sizes, nodes.local, use_grl));
        }
        NodeId s_term = tape.axpb(tape.mean(tape.square(tape.concat(ss))), 0.5, 0.0);
        NodeId t_term =
            tape.axpb(tape.mean(tape.square(tape.axpb(tape.concat(tt), -1.0, 1.0))), 0.5, 0.0);
        return tape.axpb(tape.add(s_term, t_term), lambda, 0.0);
    };
}

double fit_loglog_slope(const std::vector<double>& alphas, const std::vector<double>& residuals) {
    const std::size_t n = alphas.size();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = std::log(alphas[i]);
        const double y = std::log(residuals[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double dn = static_cast<double>(n);
    return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

class Suite {
public:
    explicit Suite(const VerifyOptions& opts) : opts_(opts) {}

    VerifyReport run() {
        check_autodiff_vs_finite_difference();
        check_quadratic_gradient();
        check_gradient_linearity();
        check_hvp_quadratic();
        check_hvp_symmetry();
        check_taylor_quadratic();
        check_taylor_scaling();
        check_taylor_relative_residual();
        check_product_rule_quadratic();
        check_product_rule_mlp();
        check_grl_negation();
        check_adversarial_signs();
        check_probability_rows();
        check_entropy_and_adversarial_bounds();
        check_pseudo_label_filter();
        check_meta_update();
        check_sgd_sequentiality();
        check_inner_product_symmetry();
        check_generation_determinism();
        check_training_determinism();
        fill_sample_reports();
        report_.all_passed = true;
        for (const auto& c : report_.checks) report_.all_passed = report_.all_passed && c.passed;
        return std::move(report_);
    }

private:
    void add(const std::string& name, bool passed, double measured, const std::string& bound,
             const std::string& details = "") {
        report_.checks.push_back({name, passed, measured, bound, details});
    }

    // Reverse-mode vs central differences on 20 seeded configurations, GRL
    // left out so both sides compute the same mathematical derivative.
    void check_autodiff_vs_finite_difference() {
        double worst = 0.0;
        for (int c = 0; c < 20; ++c) {
            TestConfig cfg = make_config(opts_.seed + 100 + c, false);
            LossFn loss;
            if (c % 2 == 0) {
                loss = source_phase_loss_fn(cfg.sizes, cfg.source[0], cfg.target[0], cfg.hp, false);
            } else {
                loss = target_phase_loss_fn(cfg.sizes, cfg.target[0], cfg.pseudo[0], cfg.hp);
            }
            Gradient ad = value_and_grad(loss, cfg.params).grad;
            Gradient fd = finite_diff_grad(loss, cfg.params, 1e-5);
            worst = std::max(worst, max_rel_error(ad, fd));
        }
        add("autodiff_vs_finite_difference", worst <= 1e-6, worst, "<= 1e-6",
            "20 seeded configurations, h = 1e-5");
    }

    void check_quadratic_gradient() {
        ParamVector theta(std::vector<Segment>{{"theta", 2, 1}});
        theta[0] = 1.0;
        theta[1] = 2.0;
        LossFn loss = [](Tape& tape) {
            return tape.axpb(tape.sum(tape.square(tape.param_all())), 0.5, 0.0);
        };
        ValueGrad vg = value_and_grad(loss, theta);
        double worst = std::fabs(vg.value - 2.5);
        worst = std::max(worst, std::fabs(vg.grad[0] - 1.0));
        worst = std::max(worst, std::fabs(vg.grad[1] - 2.0));
        add("quadratic_gradient_exact", worst <= 1e-12, worst, "<= 1e-12",
            "0.5*|theta|^2 at theta=(1,2)");
    }

    void check_gradient_linearity() {
        TestConfig cfg = make_config(opts_.seed + 1, false);
        LossFn l1 = source_phase_loss_fn(cfg.sizes, cfg.source[0], cfg.target[0], cfg.hp, false);
        LossFn l2 = target_phase_loss_fn(cfg.sizes, cfg.target[0], cfg.pseudo[0], cfg.hp);
        LossFn combined = [&](Tape& tape) { return tape.add(l1(tape), l2(tape)); };
        Gradient sum = value_and_grad(l1, cfg.params).grad + value_and_grad(l2, cfg.params).grad;
        Gradient both = value_and_grad(combined, cfg.params).grad;
        const double worst = max_rel_error(both, sum);
        add("gradient_linearity", worst <= 1e-12, worst, "<= 1e-12",
            "grad(L1 + L2) vs grad(L1) + grad(L2)");
    }

    void check_hvp_quadratic() {
        double worst = 0.0;
        for (int c = 0; c < 5; ++c) {
            Rng rng(opts_.seed + 300 + c);
            const std::size_t n = 8 + rng.uniform_int(8);
            auto a = spd_matrix(n, rng);
            ParamVector theta = theta_vector(n, rng);
            LossFn loss = quadratic_loss(a, n, std::vector<double>(n, 0.0));
            Gradient v = to_grad(std::vector<double>(n));
            for (auto& x : v.values) x = rng.normal();
            Gradient hv = hessian_vector_product(loss, theta, v);
            Gradient oracle = to_grad(matvec(a, n, v.values));
            worst = std::max(worst, norm(hv - oracle) / norm(oracle));
        }
        add("hvp_quadratic_identity", worst <= 1e-6, worst, "<= 1e-6",
            "H v vs explicit A*v on seeded quadratics");
    }

    void check_hvp_symmetry() {
        double worst = 0.0;
        for (int c = 0; c < 5; ++c) {
            Rng rng(opts_.seed + 400 + c);
            const std::size_t n = 8 + rng.uniform_int(8);
            auto a = spd_matrix(n, rng);
            ParamVector theta = theta_vector(n, rng);
            LossFn loss = quadratic_loss(a, n, std::vector<double>(n, 0.0));
            Gradient u = to_grad(std::vector<double>(n)), v = to_grad(std::vector<double>(n));
            for (auto& x : u.values) x = rng.normal();
            for (auto& x : v.values) x = rng.normal();
            const double uhv = dot(u, hessian_vector_product(loss, theta, v));
            const double vhu = dot(v, hessian_vector_product(loss, theta, u));
            worst = std::max(worst, std::fabs(uhv - vhu) / std::max(std::fabs(uhv), 1e-12));
        }
        add("hvp_symmetry", worst <= 1e-6, worst, "<= 1e-6", "u.(Hv) vs v.(Hu)");
    }

    void check_taylor_quadratic() {
        double worst = 0.0;
        for (int c = 0; c < 5; ++c) {
            Rng rng(opts_.seed + 500 + c);
            const std::size_t n = 6 + rng.uniform_int(8);
            auto a = spd_matrix(n, rng);
            auto b = spd_matrix(n, rng);
            std::vector<double> ca(n), cb(n);
            for (auto& x : ca) x = rng.normal();
            for (auto& x : cb) x = rng.normal();
            ParamVector theta = theta_vector(n, rng);
            GradientReport r = taylor_residual(quadratic_loss(a, n, ca), quadratic_loss(b, n, cb),
                                               theta, 0.05);
            worst = std::max(worst, r.residual_norm);
        }
        add("taylor_quadratic_exact", worst <= 1e-8, worst, "<= 1e-8",
            "episode expansion is exact on quadratic pairs");
    }

    void check_taylor_scaling() {
        const std::vector<double> alphas = {2e-2, 1e-2, 5e-3, 2.5e-3};
        double slope_sum = 0.0;
        int n_seeds = 10;
        for (int c = 0; c < n_seeds; ++c) {
            TestConfig cfg = make_config(opts_.seed + 600 + c, true);
            std::vector<double> residuals;
            for (double alpha : alphas) {
                GradientReport r = taylor_residual(cfg.params, cfg.source, cfg.target, cfg.pseudo,
                                                   cfg.sizes, alpha);
                residuals.push_back(r.residual_norm);
            }
            slope_sum += fit_loglog_slope(alphas, residuals);
        }
        const double mean_slope = slope_sum / n_seeds;
        add("taylor_alpha_scaling_slope", mean_slope >= 1.7 && mean_slope <= 2.3, mean_slope,
            "in [1.7, 2.3]", "log-log slope of residual vs alpha, 10 seeds");
    }

    void check_taylor_relative_residual() {
        double worst = 0.0;
        for (int c = 0; c < 10; ++c) {
            TestConfig cfg = make_config(opts_.seed + 600 + c, true);
            GradientReport r =
                taylor_residual(cfg.params, cfg.source, cfg.target, cfg.pseudo, cfg.sizes, 1e-2);
            worst = std::max(worst, r.residual_norm / norm(r.g_e));
        }
        add("taylor_relative_residual", worst <= 1e-2, worst, "<= 1e-2",
            "residual / |g_e| at alpha = 1e-2");
    }

    void check_product_rule_quadratic() {
        double worst = 0.0;
        for (int c = 0; c < 5; ++c) {
            Rng rng(opts_.seed + 700 + c);
            const std::size_t n = 6 + rng.uniform_int(6);
            auto a = spd_matrix(n, rng);
            auto b = spd_matrix(n, rng);
            ParamVector theta = theta_vector(n, rng);
            LossFn loss_s = quadratic_loss(a, n, std::vector<double>(n, 0.0));
            LossFn loss_t = quadratic_loss(b, n, std::vector<double>(n, 0.0));

            // Explicit oracle: B*(A theta) + A*(B theta).
            std::vector<double> th(theta.values().begin(), theta.values().end());
            auto oracle_v = matvec(b, n, matvec(a, n, th));
            auto abv = matvec(a, n, matvec(b, n, th));
            for (std::size_t i = 0; i < n; ++i) oracle_v[i] += abv[i];
            Gradient oracle = to_grad(std::move(oracle_v));

            Gradient gs = value_and_grad(loss_s, theta).grad;
            Gradient gt = value_and_grad(loss_t, theta).grad;
            Gradient lhs = hessian_vector_product(loss_t, theta, gs) +
                           hessian_vector_product(loss_s, theta, gt);
            worst = std::max(worst, norm(lhs - oracle) / norm(oracle));
            worst = std::max(worst, product_rule_check(loss_s, loss_t, theta));
        }
        add("product_rule_quadratic", worst <= 1e-6, worst, "<= 1e-6",
            "both routes vs explicit A/B oracle");
    }

    void check_product_rule_mlp() {
        double worst = 0.0;
        for (int c = 0; c < 10; ++c) {
            TestConfig cfg = make_config(opts_.seed + 800 + c, true);
            worst = std::max(worst, product_rule_check(cfg.params, cfg.source, cfg.target,
                                                       cfg.pseudo, cfg.sizes));
        }
        add("product_rule_mlp", worst <= 1e-4, worst, "<= 1e-4", "10 seeded network pairs");
    }

    // The reversed adversarial gradient must be the exact negation of the
    // unreversed one on the extractor segments and identical on the domain
    // classifier segments.
    void check_grl_negation() {
        double worst = 0.0;
        for (int c = 0; c < 10; ++c) {
            TestConfig cfg = make_config(opts_.seed + 900 + c, false);
            LossFn rev = scaled_adversarial_fn(cfg.sizes, cfg.source[0], cfg.target[0], 0.5,
                                               !opts_.perturb_grl);
            LossFn unrev = scaled_adversarial_fn(cfg.sizes, cfg.source[0], cfg.target[0], 0.5,
                                                 false);
            Gradient gr = value_and_grad(rev, cfg.params).grad;
            Gradient gu = value_and_grad(unrev, cfg.params).grad;
            for (const Segment& seg : cfg.params.layout()) {
                const bool is_dc = seg.name.rfind("dc", 0) == 0;
                for (std::size_t i = seg.offset; i < seg.offset + seg.size(); ++i) {
                    const double v = is_dc ? gr[i] - gu[i] : gr[i] + gu[i];
                    worst = std::max(worst, std::fabs(v));
                }
            }
        }
        add("grl_negation", worst == 0.0, worst, "== 0",
            "reversed vs unreversed adversarial gradient, 10 seeds");
    }

    void check_adversarial_signs() {
        int violations = 0;
        for (int c = 0; c < 5; ++c) {
            TestConfig cfg = make_config(opts_.seed + 1000 + c, false);
            LossFn rev = scaled_adversarial_fn(cfg.sizes, cfg.source[0], cfg.target[0], 0.5,
                                               !opts_.perturb_grl);
            LossFn unrev = scaled_adversarial_fn(cfg.sizes, cfg.source[0], cfg.target[0], 0.5,
                                                 false);
            Gradient gr = value_and_grad(rev, cfg.params).grad;
            Gradient gu = value_and_grad(unrev, cfg.params).grad;
            for (const Segment& seg : cfg.params.layout()) {
                double seg_dot = 0.0, seg_norm = 0.0;
                for (std::size_t i = seg.offset; i < seg.offset + seg.size(); ++i) {
                    seg_dot += gr[i] * gu[i];
                    seg_norm += gu[i] * gu[i];
                }
                if (seg_norm == 0.0) continue; // segment untouched by the adversarial path
                const bool is_dc = seg.name.rfind("dc", 0) == 0;
                if (is_dc && seg_dot <= 0.0) ++violations;
                if (!is_dc && seg_dot >= 0.0) ++violations;
            }
        }
        add("adversarial_gradient_signs", violations == 0, violations, "== 0",
            "per-segment reversal sign test");
    }

    void check_probability_rows() {
        double worst = 0.0;
        for (int c = 0; c < 5; ++c) {
            TestConfig cfg = make_config(opts_.seed + 1100 + c, false);
            for (const Scene& s : cfg.source) {
                for (const auto& row : scene_probs(cfg.params, cfg.sizes, s.instances)) {
                    double sum = 0.0;
                    for (double p : row) {
                        sum += p;
                        if (p < 0.0) worst = std::max(worst, -p);
                    }
                    worst = std::max(worst, std::fabs(sum - 1.0));
                }
            }
        }
        add("probability_rows_normalized", worst <= 1e-12, worst, "<= 1e-12",
            "softmax rows sum to 1 and are non-negative");
    }

    void check_entropy_and_adversarial_bounds() {
        double worst = 0.0;
        for (int c = 0; c < 5; ++c) {
            TestConfig cfg = make_config(opts_.seed + 1200 + c, false);
            const double hmax = std::log(static_cast<double>(cfg.sizes.num_categories()));
            for (const Scene& s : cfg.source) {
                const double h = entropy_scene(scene_probs(cfg.params, cfg.sizes, s.instances));
                worst = std::max(worst, std::max(-h, h - hmax));
            }
            Rng rng(opts_.seed + 1300 + c);
            std::vector<double> ss(10), tt(10);
            for (auto& v : ss) v = rng.uniform();
            for (auto& v : tt) v = rng.uniform();
            const double adv = adversarial_loss(ss, tt);
            worst = std::max(worst, std::max(-adv, adv - 1.0));
        }
        add("entropy_and_adversarial_bounds", worst <= 1e-10, worst, "<= 1e-10",
            "entropy in [0, log(C+1)], adversarial loss in [0, 1]");
    }

    void check_pseudo_label_filter() {
        int mismatches = 0;
        TestConfig cfg = make_config(opts_.seed + 2, false);
        const double tau = 0.5;
        PseudoLabels got = generate_pseudo_labels(cfg.params, cfg.target, cfg.sizes, tau);
        for (std::size_t s = 0; s < cfg.target.size(); ++s) {
            auto probs = scene_probs(cfg.params, cfg.sizes, cfg.target[s].instances);
            for (std::size_t k = 0; k < probs.size(); ++k) {
                int best = 0;
                for (std::size_t j = 1; j < probs[k].size(); ++j) {
                    if (probs[k][j] > probs[k][static_cast<std::size_t>(best)])
                        best = static_cast<int>(j);
                }
                const bool keep = probs[k][static_cast<std::size_t>(best)] >= tau;
                const PseudoLabel& p = got[s].instances[k];
                if (p.label != best || p.retained != keep) ++mismatches;
            }
        }
        add("pseudo_label_filter", mismatches == 0, mismatches, "== 0",
            "argmax + threshold filter vs brute force, tau = 0.5");
    }

    void check_meta_update() {
        Rng rng(opts_.seed + 3);
        ModelSizes sizes;
        ParamVector theta = ParamVector::random_normal(model_layout(sizes), 0.3, rng);
        ParamVector phase = ParamVector::random_normal(model_layout(sizes), 0.3, rng);
        double worst = 0.0;
        ParamVector full = meta_update(theta, phase, 1.0);
        ParamVector none = meta_update(theta, phase, 0.0);
        for (std::size_t i = 0; i < theta.size(); ++i) {
            worst = std::max(worst, std::fabs(full[i] - phase[i]));
            worst = std::max(worst, std::fabs(none[i] - theta[i]));
        }
        for (double beta : {0.3, 0.7, 1.0}) {
            ParamVector fixed = meta_update(theta, theta, beta);
            for (std::size_t i = 0; i < theta.size(); ++i) {
                worst = std::max(worst, std::fabs(fixed[i] - theta[i]));
            }
        }
        ParamVector a(std::vector<Segment>{{"theta", 2, 1}});
        ParamVector b(std::vector<Segment>{{"theta", 2, 1}});
        b[0] = 2.0;
        b[1] = 4.0;
        ParamVector mid = meta_update(a, b, 0.5);
        worst = std::max(worst, std::fabs(mid[0] - 1.0));
        worst = std::max(worst, std::fabs(mid[1] - 2.0));
        add("meta_update_contracts", worst == 0.0, worst, "== 0",
            "beta in {0, 0.5, 1} plus fixed point");
    }

    // Per-scene SGD differs from one step on the averaged gradient; the gap
    // is the second-order term the episode expansion accounts for.
    void check_sgd_sequentiality() {
        TestConfig cfg = make_config(opts_.seed + 4, false);
        while (cfg.source.size() < 2) {
            cfg = make_config(opts_.seed + 5 + cfg.source.size(), false);
        }
        Hyperparams hp;
        hp.alpha = 0.1;
        hp.lambda_adv = 0.0;
        hp.gamma = 0.0;
        std::vector<Scene> two = {cfg.source[0], cfg.source[1]};
        ParamVector seq = backward_hop(cfg.params, two, cfg.target, cfg.sizes, hp);

        Gradient g0 = value_and_grad(
                          source_phase_loss_fn(cfg.sizes, two[0], cfg.target[0], hp, false),
                          cfg.params)
                          .grad;
        Gradient g1 = value_and_grad(
                          source_phase_loss_fn(cfg.sizes, two[1], cfg.target[0], hp, false),
                          cfg.params)
                          .grad;
        ParamVector avg = cfg.params;
        for (std::size_t i = 0; i < avg.size(); ++i) avg[i] -= hp.alpha * (g0[i] + g1[i]);

        double dist = 0.0;
        for (std::size_t i = 0; i < avg.size(); ++i) {
            const double d = seq[i] - avg[i];
            dist += d * d;
        }
        dist = std::sqrt(dist);
        add("sgd_sequentiality", dist > 1e-10, dist, "> 1e-10",
            "sequential two-scene pass differs from averaged-gradient step");
    }

    void check_inner_product_symmetry() {
        TestConfig cfg = make_config(opts_.seed + 6, false);
        const double forward =
            grad_inner_product(cfg.params, cfg.source, cfg.target, cfg.pseudo, cfg.sizes);

        // Swap the roles: target instances with pseudo labels become the
        // labeled domain, source scenes become the pseudo-labeled one.
        std::vector<Scene> swapped_source;
        for (std::size_t s = 0; s < cfg.target.size(); ++s) {
            Scene sc;
            sc.scene_id = cfg.target[s].scene_id;
            sc.instances = cfg.target[s].instances;
            for (const auto& p : cfg.pseudo[s].instances) sc.labels.push_back(p.label);
            swapped_source.push_back(std::move(sc));
        }
        std::vector<TargetScene> swapped_target;
        PseudoLabels swapped_pseudo;
        for (const Scene& s : cfg.source) {
            TargetScene tc;
            tc.scene_id = s.scene_id;
            tc.instances = s.instances;
            swapped_target.push_back(std::move(tc));
            ScenePseudoLabels sp;
            sp.scene_id = s.scene_id;
            for (int label : s.labels) sp.instances.push_back({label, 1.0, true});
            swapped_pseudo.push_back(std::move(sp));
        }
        const double backward = grad_inner_product(cfg.params, swapped_source, swapped_target,
                                                   swapped_pseudo, cfg.sizes);
        const double diff = std::fabs(forward - backward);
        add("grad_inner_product_symmetry", diff == 0.0, diff, "== 0",
            "inner product invariant under swapping the domains");
    }

    void check_generation_determinism() {
        ScenarioSpec spec;
        spec.seed = opts_.seed + 11;
        spec.n_source = 6;
        spec.n_target = 6;
        spec.instances_per_scene = 5;
        int mismatches = 0;
        for (const char* name : {"shift-gauss", "fog"}) {
            spec.name = name;
            Dataset a = generate(spec);
            Dataset b = generate(spec);
            if (source_dataset_to_csv(a.source) != source_dataset_to_csv(b.source)) ++mismatches;
            if (target_dataset_to_csv(a.target) != target_dataset_to_csv(b.target)) ++mismatches;
            if (hidden_labels_to_csv(a.target, a.hidden) != hidden_labels_to_csv(b.target, b.hidden))
                ++mismatches;
        }
        add("generation_determinism", mismatches == 0, mismatches, "== 0",
            "same seed produces byte-identical datasets");
    }

    void check_training_determinism() {
        ScenarioSpec spec;
        spec.seed = opts_.seed + 12;
        spec.n_source = 8;
        spec.n_target = 8;
        spec.instances_per_scene = 4;
        Dataset ds = generate(spec);
        ModelSizes sizes;
        Hyperparams hp;
        hp.n_itr = 3;
        TrainOptions topts;
        topts.seed = opts_.seed + 13;
        TargetEvaluator evaluator(ds.target, ds.hidden);
        TrainResult a = train(ds.source, ds.target, sizes, hp, topts, &evaluator);
        TrainResult b = train(ds.source, ds.target, sizes, hp, topts, &evaluator);
        int mismatches = 0;
        if (metrics_to_jsonl(a.metrics, false) != metrics_to_jsonl(b.metrics, false)) ++mismatches;
        if (params_to_csv(a.params) != params_to_csv(b.params)) ++mismatches;
        add("training_determinism", mismatches == 0, mismatches, "== 0",
            "same seed produces byte-identical metrics and parameters");
    }

    void fill_sample_reports() {
        TestConfig cfg = make_config(opts_.seed + 21, true);
        report_.sample_gradient =
            taylor_residual(cfg.params, cfg.source, cfg.target, cfg.pseudo, cfg.sizes, 1e-2);

        ScenarioSpec spec;
        spec.seed = opts_.seed + 22;
        spec.n_source = 30;
        spec.n_target = 30;
        spec.instances_per_scene = 6;
        Dataset ds = generate(spec);
        ModelSizes sizes;
        ParamVector params = init_params(sizes, opts_.seed + 23);
        auto local_s = collect_local_features(params, sizes, ds.source);
        auto local_t = collect_local_features(params, sizes, ds.target);
        ProxyADistanceResult pad = proxy_a_distance(local_s, local_t, opts_.seed + 24);

        std::vector<Scene> target_labeled;
        for (std::size_t s = 0; s < ds.target.size(); ++s) {
            Scene sc;
            sc.scene_id = ds.target[s].scene_id;
            sc.instances = ds.target[s].instances;
            sc.labels = ds.hidden.labels[s];
            target_labeled.push_back(std::move(sc));
        }
        JointErrorResult joint = ideal_joint_error(ds.source, target_labeled, sizes, opts_.seed + 25);

        report_.sample_divergence.proxy_a_distance = pad.value;
        report_.sample_divergence.domain_classifier_test_error = pad.test_error;
        report_.sample_divergence.ideal_joint_error = joint.total;
        report_.sample_divergence.source_error = joint.source_error;
        report_.sample_divergence.target_error = joint.target_error;
    }

    VerifyOptions opts_;
    VerifyReport report_;
};

} // namespace

VerifyReport run_verification(const VerifyOptions& opts) {
    return Suite(opts).run();
}

std::string verify_report_to_json(const VerifyReport& report) {
    ordered_json j;
    j["all_passed"] = report.all_passed;
    j["checks"] = ordered_json::array();
    for (const CheckResult& c : report.checks) {
        ordered_json cj;
        cj["name"] = c.name;
        cj["passed"] = c.passed;
        cj["measured"] = c.measured;
        cj["tolerance"] = c.bound;
        if (!c.details.empty()) cj["details"] = c.details;
        j["checks"].push_back(cj);
    }
    ordered_json gr;
    gr["g_bar_S"] = report.sample_gradient.g_bar_s.values;
    gr["g_bar_T"] = report.sample_gradient.g_bar_t.values;
    gr["g_e"] = report.sample_gradient.g_e.values;
    gr["hvp_term"] = report.sample_gradient.hvp_term.values;
    gr["residual_norm"] = report.sample_gradient.residual_norm;
    gr["inner_product"] = report.sample_gradient.inner_product;
    j["gradient_report"] = gr;
    ordered_json dr;
    dr["proxy_a_distance"] = report.sample_divergence.proxy_a_distance;
    dr["domain_classifier_test_error"] = report.sample_divergence.domain_classifier_test_error;
    dr["ideal_joint_error"] = report.sample_divergence.ideal_joint_error;
    dr["source_error"] = report.sample_divergence.source_error;
    dr["target_error"] = report.sample_divergence.target_error;
    j["divergence_report"] = dr;
    return j.dump(2) + "\n";
}

} // namespace fbc
