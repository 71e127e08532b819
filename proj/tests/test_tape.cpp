#include <doctest.h>

#include <cmath>

#include "fbc/errors.hpp"
#include "fbc/rng.hpp"
#include "fbc/tape.hpp"

using namespace fbc;

namespace {

ParamVector make_theta(std::vector<double> values) {
    ParamVector theta(std::vector<Segment>{{"theta", values.size(), 1}});
    for (std::size_t i = 0; i < values.size(); ++i) theta[i] = values[i];
    return theta;
}

// Small seeded two-layer perceptron loss built from the supported primitives.
LossFn mlp_loss(std::size_t d_in, std::size_t d_hidden, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> x(d_in);
    for (auto& v : x) v = rng.normal();
    return [x, d_in, d_hidden](Tape& tape) {
        NodeId input = tape.constant(x);
        NodeId h = tape.tanh(tape.affine(tape.param("W1"), d_hidden, d_in, input, tape.param("b1")));
        NodeId out = tape.affine(tape.param("W2"), d_hidden, d_hidden, h, tape.param("b2"));
        NodeId probs = tape.softmax(out);
        NodeId picked = tape.log_floor(tape.pick(probs, 0));
        return tape.add(tape.axpb(picked, -1.0, 0.0), tape.mean(tape.square(out)));
    };
}

ParamVector mlp_params(std::size_t d_in, std::size_t d_hidden, std::uint64_t seed) {
    Rng rng(seed);
    return ParamVector::random_normal(
        {{"W1", d_hidden, d_in}, {"b1", d_hidden, 1}, {"W2", d_hidden, d_hidden}, {"b2", d_hidden, 1}},
        0.5, rng);
}

double max_rel_error(const Gradient& a, const Gradient& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        worst = std::max(worst, std::fabs(a[i] - b[i]) / (1.0 + std::fabs(a[i])));
    }
    return worst;
}

} // namespace

TEST_CASE("value_and_grad on 0.5*|theta|^2") {
    ParamVector theta = make_theta({1.0, 2.0});
    LossFn loss = [](Tape& tape) {
        return tape.axpb(tape.sum(tape.square(tape.param_all())), 0.5, 0.0);
    };
    ValueGrad vg = value_and_grad(loss, theta);
    CHECK(vg.value == doctest::Approx(2.5).epsilon(1e-14));
    CHECK(vg.grad[0] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(vg.grad[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("value_and_grad on sum(theta) gives ones") {
    ParamVector theta = make_theta({0.3, -1.5, 2.0, 7.0});
    LossFn loss = [](Tape& tape) { return tape.sum(tape.param_all()); };
    ValueGrad vg = value_and_grad(loss, theta);
    for (std::size_t i = 0; i < theta.size(); ++i) CHECK(vg.grad[i] == 1.0);
}

TEST_CASE("perceptron gradient agrees with central differences both ways") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        ParamVector params = mlp_params(3, 5, seed);
        LossFn loss = mlp_loss(3, 5, seed + 100);
        Gradient ad = value_and_grad(loss, params).grad;
        Gradient fd = finite_diff_grad(loss, params, 1e-5);
        CHECK(max_rel_error(ad, fd) <= 1e-6);
        CHECK(max_rel_error(fd, ad) <= 1e-6);
    }
}

TEST_CASE("finite_diff_grad is exact on quadratics and zero on constants") {
    ParamVector theta = make_theta({1.0, 2.0});
    LossFn quad = [](Tape& tape) {
        return tape.axpb(tape.sum(tape.square(tape.param_all())), 0.5, 0.0);
    };
    Gradient fd = finite_diff_grad(quad, theta, 1e-5);
    CHECK(fd[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(fd[1] == doctest::Approx(2.0).epsilon(1e-9));

    LossFn constant = [](Tape& tape) { return tape.constant(4.2); };
    Gradient zero = finite_diff_grad(constant, theta, 1e-5);
    CHECK(zero[0] == 0.0);
    CHECK(zero[1] == 0.0);
}

TEST_CASE("non-finite loss raises NonFiniteLoss naming the node") {
    ParamVector theta = make_theta({1.0});
    LossFn bad = [](Tape& tape) {
        return tape.log_floor(tape.constant(-1.0)); // log of a negative number
    };
    CHECK_THROWS_WITH_AS(value_and_grad(bad, theta), doctest::Contains("node"), NonFiniteLoss);
    CHECK_THROWS_AS(finite_diff_grad(bad, theta, 1e-5), NonFiniteLoss);
}

TEST_CASE("hessian_vector_product on identity Hessian returns the direction") {
    ParamVector theta = make_theta({0.5, -0.25});
    LossFn loss = [](Tape& tape) {
        return tape.axpb(tape.sum(tape.square(tape.param_all())), 0.5, 0.0);
    };
    Gradient v;
    v.values = {3.0, 4.0};
    Gradient hv = hessian_vector_product(loss, theta, v);
    CHECK(hv[0] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(hv[1] == doctest::Approx(4.0).epsilon(1e-8));
}

TEST_CASE("hessian_vector_product of a linear loss is zero") {
    ParamVector theta = make_theta({1.0, -2.0, 0.5});
    LossFn loss = [](Tape& tape) { return tape.sum(tape.param_all()); };
    Gradient v;
    v.values = {1.0, 1.0, 1.0};
    Gradient hv = hessian_vector_product(loss, theta, v);
    for (std::size_t i = 0; i < 3; ++i) CHECK(std::fabs(hv[i]) <= 1e-9);
}

TEST_CASE("hessian_vector_product matches the explicit matrix product") {
    Rng rng(99);
    const std::size_t n = 7;
    // Symmetric A = 0.5*(M + M^T)
    std::vector<double> m(n * n);
    for (auto& x : m) x = rng.normal();
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) a[i * n + j] = 0.5 * (m[i * n + j] + m[j * n + i]);
    }
    ParamVector theta = make_theta(std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) theta[i] = rng.normal();

    LossFn loss = [a, n](Tape& tape) {
        NodeId th = tape.param_all();
        NodeId ath =
            tape.affine(tape.constant(a), n, n, th, tape.constant(std::vector<double>(n, 0.0)));
        return tape.axpb(tape.dot(th, ath), 0.5, 0.0);
    };
    Gradient v;
    v.values.resize(n);
    for (auto& x : v.values) x = rng.normal();

    Gradient hv = hessian_vector_product(loss, theta, v);
    for (std::size_t i = 0; i < n; ++i) {
        double expect = 0.0;
        for (std::size_t j = 0; j < n; ++j) expect += a[i * n + j] * v[j];
        CHECK(hv[i] == doctest::Approx(expect).epsilon(1e-6));
    }
}

TEST_CASE("hessian_vector_product rejects a zero direction") {
    ParamVector theta = make_theta({1.0, 2.0});
    LossFn loss = [](Tape& tape) { return tape.sum(tape.square(tape.param_all())); };
    Gradient v;
    v.values = {0.0, 0.0};
    CHECK_THROWS_AS(hessian_vector_product(loss, theta, v), DegenerateDirection);
}

TEST_CASE("difference oracles reject non-positive steps") {
    ParamVector theta = make_theta({1.0, 2.0});
    LossFn loss = [](Tape& tape) { return tape.sum(tape.square(tape.param_all())); };
    Gradient v;
    v.values = {1.0, 0.0};
    CHECK_THROWS_AS(finite_diff_grad(loss, theta, 0.0), ConfigError);
    CHECK_THROWS_AS(finite_diff_grad(loss, theta, -1e-5), ConfigError);
    CHECK_THROWS_AS(hessian_vector_product(loss, theta, v, 0.0), ConfigError);
}

TEST_CASE("gradient of a sum equals the sum of gradients") {
    ParamVector params = mlp_params(4, 6, 21);
    LossFn l1 = mlp_loss(4, 6, 22);
    LossFn l2 = mlp_loss(4, 6, 23);
    LossFn combined = [&](Tape& tape) { return tape.add(l1(tape), l2(tape)); };
    Gradient sum = value_and_grad(l1, params).grad + value_and_grad(l2, params).grad;
    Gradient both = value_and_grad(combined, params).grad;
    CHECK(max_rel_error(both, sum) <= 1e-12);
}

TEST_CASE("relu forward and backward") {
    ParamVector theta = make_theta({-2.0, 3.0, 0.5});
    LossFn loss = [](Tape& tape) { return tape.sum(tape.relu(tape.param_all())); };
    ValueGrad vg = value_and_grad(loss, theta);
    CHECK(vg.value == 3.5);
    CHECK(vg.grad[0] == 0.0);
    CHECK(vg.grad[1] == 1.0);
    CHECK(vg.grad[2] == 1.0);
}

TEST_CASE("grl is the identity forward and negation backward") {
    ParamVector theta = make_theta({0.7, -1.2});
    LossFn with = [](Tape& tape) { return tape.sum(tape.square(tape.grl(tape.param_all()))); };
    LossFn without = [](Tape& tape) { return tape.sum(tape.square(tape.param_all())); };
    ValueGrad a = value_and_grad(with, theta);
    ValueGrad b = value_and_grad(without, theta);
    CHECK(a.value == b.value); // identity forward
    CHECK(a.grad[0] == -b.grad[0]);
    CHECK(a.grad[1] == -b.grad[1]);
}

TEST_CASE("softmax output sums to one and matches logit argmax") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> logits(6);
        for (auto& v : logits) v = rng.normal(0.0, 3.0);
        ParamVector theta = make_theta(logits);
        Tape tape(theta);
        NodeId probs = tape.softmax(tape.param_all());
        auto p = tape.value(probs);
        double sum = 0.0;
        std::size_t pmax = 0, lmax = 0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            sum += p[i];
            if (p[i] > p[pmax]) pmax = i;
            if (logits[i] > logits[lmax]) lmax = i;
        }
        CHECK(std::fabs(sum - 1.0) <= 1e-12);
        CHECK(pmax == lmax);
    }
}

TEST_CASE("tape shape checks") {
    ParamVector theta = make_theta({1.0, 2.0, 3.0});
    Tape tape(theta);
    NodeId th = tape.param_all();
    CHECK_THROWS_AS(tape.affine(th, 2, 2, th, th), ShapeError);
    CHECK_THROWS_AS(tape.add(th, tape.constant(1.0)), ShapeError);
    CHECK_THROWS_AS(tape.pick(th, 5), ShapeError);
    CHECK_THROWS_AS(tape.backward(th), ShapeError); // non-scalar root
}
