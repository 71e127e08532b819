#include "fbc/model.hpp"

#include <cmath>

#include "fbc/errors.hpp"

namespace fbc {
namespace {

void affine_tanh(std::span<const double> w, std::span<const double> b, std::size_t rows,
                 std::size_t cols, std::span<const double> x, std::vector<double>& out) {
    if (x.size() != cols) {
        throw ShapeError("layer input has size " + std::to_string(x.size()) + ", expected " +
                         std::to_string(cols));
    }
    out.assign(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = b[i];
        const double* wrow = w.data() + i * cols;
        for (std::size_t j = 0; j < cols; ++j) acc += wrow[j] * x[j];
        out[i] = std::tanh(acc);
    }
}

} // namespace

std::vector<Segment> detector_layout(const ModelSizes& s) {
    return {
        {"low.W", s.d_low, s.d_in},
        {"low.b", s.d_low, 1},
        {"high.W", s.d_high, s.d_low},
        {"high.b", s.d_high, 1},
        {"head.W", s.num_categories(), s.d_high},
        {"head.b", s.num_categories(), 1},
    };
}

std::vector<Segment> domain_classifier_layout(const ModelSizes& s) {
    return {
        {"dc1.W", s.dc_hidden, s.d_low},
        {"dc1.b", s.dc_hidden, 1},
        {"dc2.W", s.dc_hidden, s.dc_hidden},
        {"dc2.b", s.dc_hidden, 1},
        {"dc3.W", 1, s.dc_hidden},
        {"dc3.b", 1, 1},
    };
}

std::vector<Segment> model_layout(const ModelSizes& s) {
    auto layout = detector_layout(s);
    auto dc = domain_classifier_layout(s);
    layout.insert(layout.end(), dc.begin(), dc.end());
    return layout;
}

FeatureSplit extract_features(const ParamVector& params, const ModelSizes& sizes,
                              const std::vector<std::vector<double>>& instances) {
    FeatureSplit out;
    out.local.reserve(instances.size());
    out.high.reserve(instances.size());
    auto w1 = params.segment_values("low.W");
    auto b1 = params.segment_values("low.b");
    auto w2 = params.segment_values("high.W");
    auto b2 = params.segment_values("high.b");
    for (const auto& x : instances) {
        std::vector<double> local, high;
        affine_tanh(w1, b1, sizes.d_low, sizes.d_in, x, local);
        affine_tanh(w2, b2, sizes.d_high, sizes.d_low, local, high);
        out.local.push_back(std::move(local));
        out.high.push_back(std::move(high));
    }
    return out;
}

std::vector<std::vector<double>> classify(const ParamVector& params, const ModelSizes& sizes,
                                          const FeatureSplit& features) {
    auto w = params.segment_values("head.W");
    auto b = params.segment_values("head.b");
    const std::size_t n_cat = sizes.num_categories();
    std::vector<std::vector<double>> probs;
    probs.reserve(features.high.size());
    for (const auto& h : features.high) {
        if (h.size() != sizes.d_high) throw ShapeError("classify: feature width mismatch");
        std::vector<double> logits(n_cat, 0.0);
        for (std::size_t i = 0; i < n_cat; ++i) {
            double acc = b[i];
            const double* wrow = w.data() + i * sizes.d_high;
            for (std::size_t j = 0; j < sizes.d_high; ++j) acc += wrow[j] * h[j];
            logits[i] = acc;
        }
        double mx = logits[0];
        for (double v : logits) mx = std::max(mx, v);
        double z = 0.0;
        for (auto& v : logits) {
            v = std::exp(v - mx);
            z += v;
        }
        for (auto& v : logits) v /= z;
        probs.push_back(std::move(logits));
    }
    return probs;
}

std::vector<double> domain_discriminate(const ParamVector& params, const ModelSizes& sizes,
                                        const std::vector<std::vector<double>>& local) {
    auto w1 = params.segment_values("dc1.W");
    auto b1 = params.segment_values("dc1.b");
    auto w2 = params.segment_values("dc2.W");
    auto b2 = params.segment_values("dc2.b");
    auto w3 = params.segment_values("dc3.W");
    auto b3 = params.segment_values("dc3.b");
    std::vector<double> scores;
    scores.reserve(local.size());
    for (const auto& f : local) {
        std::vector<double> h1, h2;
        affine_tanh(w1, b1, sizes.dc_hidden, sizes.d_low, f, h1);
        affine_tanh(w2, b2, sizes.dc_hidden, sizes.dc_hidden, h1, h2);
        double acc = b3[0];
        for (std::size_t j = 0; j < sizes.dc_hidden; ++j) acc += w3[j] * h2[j];
        scores.push_back(1.0 / (1.0 + std::exp(-acc)));
    }
    return scores;
}

std::vector<std::vector<double>> scene_probs(const ParamVector& params, const ModelSizes& sizes,
                                             const std::vector<std::vector<double>>& instances) {
    return classify(params, sizes, extract_features(params, sizes, instances));
}

InstanceNodes detector_instance(Tape& tape, const ModelSizes& sizes, std::span<const double> x) {
    if (x.size() != sizes.d_in) {
        throw ShapeError("instance has " + std::to_string(x.size()) + " features, expected " +
                         std::to_string(sizes.d_in));
    }
    NodeId input = tape.constant(std::vector<double>(x.begin(), x.end()));
    NodeId pre1 = tape.affine(tape.param("low.W"), sizes.d_low, sizes.d_in, input,
                              tape.param("low.b"));
    NodeId local = tape.tanh(pre1);
    NodeId pre2 = tape.affine(tape.param("high.W"), sizes.d_high, sizes.d_low, local,
                              tape.param("high.b"));
    return {local, tape.tanh(pre2)};
}

NodeId head_probs(Tape& tape, const ModelSizes& sizes, NodeId high) {
    NodeId logits = tape.affine(tape.param("head.W"), sizes.num_categories(), sizes.d_high, high,
                                tape.param("head.b"));
    return tape.softmax(logits);
}

NodeId domain_score(Tape& tape, const ModelSizes& sizes, NodeId local, bool through_grl) {
    NodeId input = through_grl ? tape.grl(local) : local;
    NodeId h1 = tape.tanh(tape.affine(tape.param("dc1.W"), sizes.dc_hidden, sizes.d_low, input,
                                      tape.param("dc1.b")));
    NodeId h2 = tape.tanh(tape.affine(tape.param("dc2.W"), sizes.dc_hidden, sizes.dc_hidden, h1,
                                      tape.param("dc2.b")));
    NodeId logit = tape.affine(tape.param("dc3.W"), 1, sizes.dc_hidden, h2, tape.param("dc3.b"));
    return tape.sigmoid(logit);
}

} // namespace fbc
