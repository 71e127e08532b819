#include <doctest.h>

#include <cmath>

#include "fbc/analysis.hpp"
#include "fbc/errors.hpp"
#include "fbc/trainer.hpp"

using namespace fbc;

namespace {

struct Fixture {
    ModelSizes sizes;
    ParamVector params;
    std::vector<Scene> source;
    std::vector<TargetScene> target;
    PseudoLabels pseudo;

    explicit Fixture(std::uint64_t seed, std::size_t n_scenes = 2, std::size_t k = 4) {
        sizes.d_in = 4;
        sizes.d_low = 6;
        sizes.d_high = 6;
        sizes.num_classes = 2;
        sizes.dc_hidden = 3;
        Rng rng(seed);
        params = ParamVector::random_normal(model_layout(sizes), 0.5, rng);
        for (std::size_t s = 0; s < n_scenes; ++s) {
            Scene sc;
            sc.scene_id = static_cast<int>(s);
            TargetScene tc;
            tc.scene_id = static_cast<int>(s);
            for (std::size_t i = 0; i < k; ++i) {
                std::vector<double> xs(sizes.d_in), xt(sizes.d_in);
                for (auto& v : xs) v = rng.normal();
                for (auto& v : xt) v = rng.normal();
                sc.instances.push_back(std::move(xs));
                sc.labels.push_back(static_cast<int>(rng.uniform_int(sizes.num_categories())));
                tc.instances.push_back(std::move(xt));
            }
            source.push_back(std::move(sc));
            target.push_back(std::move(tc));
        }
        pseudo = generate_pseudo_labels(params, target, sizes, 0.0);
    }
};

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

LossFn quadratic_loss(std::vector<double> a, std::size_t n) {
    return [a = std::move(a), n](Tape& tape) {
        NodeId theta = tape.param_all();
        NodeId atheta =
            tape.affine(tape.constant(a), n, n, theta, tape.constant(std::vector<double>(n, 0.0)));
        return tape.axpb(tape.dot(theta, atheta), 0.5, 0.0);
    };
}

std::vector<double> matvec(const std::vector<double>& a, std::size_t n,
                           const std::vector<double>& x) {
    std::vector<double> y(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) y[i] += a[i * n + j] * x[j];
    }
    return y;
}

} // namespace

TEST_CASE("grad_inner_product matches the dot of two independent gradients") {
    Fixture f(61);
    const double got = grad_inner_product(f.params, f.source, f.target, f.pseudo, f.sizes);
    Gradient gs = value_and_grad(source_domain_loss_fn(f.sizes, f.source), f.params).grad;
    Gradient gt =
        value_and_grad(target_domain_loss_fn(f.sizes, f.target, f.pseudo), f.params).grad;
    CHECK(got == dot(gs, gt));
}

TEST_CASE("grad_inner_product of a domain with itself is a squared norm") {
    Fixture f(62);
    std::vector<TargetScene> mirrored;
    PseudoLabels mirrored_pseudo;
    for (const Scene& s : f.source) {
        TargetScene t;
        t.scene_id = s.scene_id;
        t.instances = s.instances;
        mirrored.push_back(std::move(t));
        ScenePseudoLabels sp;
        sp.scene_id = s.scene_id;
        for (int label : s.labels) sp.instances.push_back({label, 1.0, true});
        mirrored_pseudo.push_back(std::move(sp));
    }
    const double self = grad_inner_product(f.params, f.source, mirrored, mirrored_pseudo, f.sizes);
    Gradient gs = value_and_grad(source_domain_loss_fn(f.sizes, f.source), f.params).grad;
    CHECK(self >= 0.0);
    CHECK(self == doctest::Approx(dot(gs, gs)).epsilon(1e-12));
}

TEST_CASE("losses on disjoint parameter segments have orthogonal gradients") {
    ParamVector theta(std::vector<Segment>{{"a", 3, 1}, {"b", 3, 1}});
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = 0.5 + static_cast<double>(i);
    LossFn la = [](Tape& tape) { return tape.sum(tape.square(tape.param("a"))); };
    LossFn lb = [](Tape& tape) { return tape.sum(tape.square(tape.param("b"))); };
    Gradient ga = value_and_grad(la, theta).grad;
    Gradient gb = value_and_grad(lb, theta).grad;
    CHECK(dot(ga, gb) == 0.0);
}

TEST_CASE("taylor residual is exact on quadratic losses") {
    for (std::uint64_t seed : {71u, 72u, 73u}) {
        Rng rng(seed);
        const std::size_t n = 10;
        auto a = spd_matrix(n, rng);
        auto b = spd_matrix(n, rng);
        ParamVector theta(std::vector<Segment>{{"theta", n, 1}});
        for (std::size_t i = 0; i < n; ++i) theta[i] = rng.normal();
        GradientReport r = taylor_residual(quadratic_loss(a, n), quadratic_loss(b, n), theta, 0.05);
        CHECK(r.residual_norm <= 1e-8);
    }
}

TEST_CASE("halving alpha shrinks the residual by roughly four") {
    double ratio_sum = 0.0;
    const int n_seeds = 10;
    for (int c = 0; c < n_seeds; ++c) {
        Fixture f(80 + static_cast<std::uint64_t>(c), 1, 4);
        GradientReport big =
            taylor_residual(f.params, f.source, f.target, f.pseudo, f.sizes, 2e-2);
        GradientReport small =
            taylor_residual(f.params, f.source, f.target, f.pseudo, f.sizes, 1e-2);
        ratio_sum += small.residual_norm / big.residual_norm;
    }
    const double mean_ratio = ratio_sum / n_seeds;
    CHECK(mean_ratio >= 0.15);
    CHECK(mean_ratio <= 0.35);
}

TEST_CASE("relative residual at alpha 1e-2 stays under 1e-2") {
    for (int c = 0; c < 5; ++c) {
        Fixture f(90 + static_cast<std::uint64_t>(c), 1, 4);
        GradientReport r = taylor_residual(f.params, f.source, f.target, f.pseudo, f.sizes, 1e-2);
        CHECK(r.residual_norm / norm(r.g_e) <= 1e-2);
    }
}

TEST_CASE("scene-form taylor residual uses the real phase updates") {
    // g_e must equal the gradient sum realized by backward_hop + forward_pass.
    Fixture f(95, 2, 3);
    const double alpha = 1e-2;
    GradientReport r = taylor_residual(f.params, f.source, f.target, f.pseudo, f.sizes, alpha);
    CHECK(norm(r.g_e) > 0.0);
    CHECK(r.inner_product == dot(r.g_bar_s, r.g_bar_t));
    // The expansion should already be decent at this step size.
    CHECK(r.residual_norm / norm(r.g_e) < 0.05);
}

TEST_CASE("product rule identity on quadratics against the explicit oracle") {
    Rng rng(101);
    const std::size_t n = 8;
    auto a = spd_matrix(n, rng);
    auto b = spd_matrix(n, rng);
    ParamVector theta(std::vector<Segment>{{"theta", n, 1}});
    for (std::size_t i = 0; i < n; ++i) theta[i] = rng.normal();
    LossFn loss_s = quadratic_loss(a, n);
    LossFn loss_t = quadratic_loss(b, n);

    std::vector<double> th(theta.values().begin(), theta.values().end());
    auto oracle_v = matvec(b, n, matvec(a, n, th));
    auto ab = matvec(a, n, matvec(b, n, th));
    for (std::size_t i = 0; i < n; ++i) oracle_v[i] += ab[i];
    Gradient oracle;
    oracle.values = oracle_v;

    Gradient gs = value_and_grad(loss_s, theta).grad;
    Gradient gt = value_and_grad(loss_t, theta).grad;
    Gradient lhs = hessian_vector_product(loss_t, theta, gs) +
                   hessian_vector_product(loss_s, theta, gt);
    CHECK(norm(lhs - oracle) / norm(oracle) <= 1e-6);
    CHECK(product_rule_check(loss_s, loss_t, theta) <= 1e-6);
}

TEST_CASE("product rule with a constant second loss is exactly zero") {
    Rng rng(102);
    const std::size_t n = 6;
    auto a = spd_matrix(n, rng);
    ParamVector theta(std::vector<Segment>{{"theta", n, 1}});
    for (std::size_t i = 0; i < n; ++i) theta[i] = rng.normal();
    LossFn constant = [](Tape& tape) { return tape.constant(3.0); };
    CHECK(product_rule_check(quadratic_loss(a, n), constant, theta) == 0.0);
}

TEST_CASE("product rule identity on seeded network pairs") {
    for (int c = 0; c < 4; ++c) {
        Fixture f(110 + static_cast<std::uint64_t>(c), 1, 3);
        CHECK(product_rule_check(f.params, f.source, f.target, f.pseudo, f.sizes) <= 1e-4);
    }
}

TEST_CASE("proxy A-distance on identical feature sets is near zero") {
    Rng rng(121);
    std::vector<std::vector<double>> features(60, std::vector<double>(8));
    for (auto& row : features) {
        for (auto& v : row) v = rng.normal();
    }
    double sum = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ProxyADistanceResult r = proxy_a_distance(features, features, seed);
        CHECK(r.value >= 0.0);
        CHECK(r.value <= 2.0);
        sum += r.value;
    }
    CHECK(sum / 5.0 <= 0.3);
}

TEST_CASE("proxy A-distance on disjoint feature ranges saturates") {
    Rng rng(122);
    std::vector<std::vector<double>> fs(50, std::vector<double>(6));
    std::vector<std::vector<double>> ft(50, std::vector<double>(6));
    for (auto& row : fs) {
        for (auto& v : row) v = -2.0 + rng.uniform(); // [-2, -1]
    }
    for (auto& row : ft) {
        for (auto& v : row) v = 1.0 + rng.uniform(); // [1, 2]
    }
    ProxyADistanceResult r = proxy_a_distance(fs, ft, 3);
    CHECK(r.value >= 1.8);
    CHECK(r.value <= 2.0);
}

TEST_CASE("proxy A-distance needs at least 20 instances per domain") {
    std::vector<std::vector<double>> few(10, std::vector<double>(4, 0.0));
    std::vector<std::vector<double>> enough(25, std::vector<double>(4, 0.0));
    CHECK_THROWS_AS(proxy_a_distance(few, enough, 1), DataError);
    CHECK_THROWS_AS(proxy_a_distance(enough, few, 1), DataError);
}

TEST_CASE("ideal joint error is near zero for identical separable domains") {
    ScenarioSpec spec;
    spec.seed = 131;
    spec.name = "shift-gauss";
    spec.rotation_deg = 0.0;
    spec.scale = 1.0;
    spec.translation = 0.0;
    spec.background_fraction = 0.0; // foreground classes only: well separated
    spec.n_source = 40;
    spec.n_target = 40;
    spec.instances_per_scene = 6;
    Dataset ds = generate(spec);
    std::vector<Scene> target_labeled;
    for (std::size_t s = 0; s < ds.target.size(); ++s) {
        Scene sc;
        sc.scene_id = ds.target[s].scene_id;
        sc.instances = ds.target[s].instances;
        sc.labels = ds.hidden.labels[s];
        target_labeled.push_back(std::move(sc));
    }
    ModelSizes sizes;
    JointErrorResult r = ideal_joint_error(ds.source, target_labeled, sizes, 5);
    CHECK(r.total >= 0.0);
    CHECK(r.total <= 0.05);
}

TEST_CASE("ideal joint error under uniformly random labels is chance level") {
    Rng rng(132);
    ModelSizes sizes;
    auto make_domain = [&](int n_scenes) {
        std::vector<Scene> scenes;
        for (int s = 0; s < n_scenes; ++s) {
            Scene sc;
            sc.scene_id = s;
            for (int k = 0; k < 8; ++k) {
                std::vector<double> x(sizes.d_in);
                for (auto& v : x) v = rng.normal();
                sc.instances.push_back(std::move(x));
                sc.labels.push_back(static_cast<int>(rng.uniform_int(4)));
            }
            scenes.push_back(std::move(sc));
        }
        return scenes;
    };
    auto source = make_domain(200);
    auto target = make_domain(200);
    JointErrorResult r = ideal_joint_error(source, target, sizes, 7);
    // Labels independent of features: expected error 3/4 per domain.
    CHECK(r.total >= 1.4);
    CHECK(r.total <= 1.6);
    CHECK(r.total <= 2.0);
}

TEST_CASE("ideal joint error rejects tiny datasets") {
    ModelSizes sizes;
    std::vector<Scene> few(2);
    CHECK_THROWS_AS(ideal_joint_error(few, few, sizes, 1), DataError);
}
