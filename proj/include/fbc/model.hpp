#pragma once

#include <span>
#include <vector>

#include "fbc/param_vector.hpp"
#include "fbc/synthdata.hpp"
#include "fbc/tape.hpp"

namespace fbc {

/// Architecture sizes for the detector and the per-instance domain classifier.
struct ModelSizes {
    std::size_t d_in = 6;
    std::size_t d_low = 16;
    std::size_t d_high = 16;
    std::size_t num_classes = 3; // foreground categories
    std::size_t dc_hidden = 16;  // domain-classifier hidden width

    // Logit/probability width: foreground categories plus background.
    std::size_t num_categories() const { return num_classes + 1; }
};

// Segment names inside the shared ParamVector.
//   detector: low.W low.b high.W high.b head.W head.b
//   domain classifier: dc1.W dc1.b dc2.W dc2.b dc3.W dc3.b
std::vector<Segment> detector_layout(const ModelSizes& sizes);
std::vector<Segment> domain_classifier_layout(const ModelSizes& sizes);
// Detector followed by domain classifier; the layout used for training.
std::vector<Segment> model_layout(const ModelSizes& sizes);

/// Per-instance features from the two extractor stages.
struct FeatureSplit {
    std::vector<std::vector<double>> local; // K x d_low, low-level stage
    std::vector<std::vector<double>> high;  // K x d_high
};

// Plain (non-differentiated) forward passes. Deterministic and pure.
FeatureSplit extract_features(const ParamVector& params, const ModelSizes& sizes,
                              const std::vector<std::vector<double>>& instances);
std::vector<std::vector<double>> classify(const ParamVector& params, const ModelSizes& sizes,
                                          const FeatureSplit& features);
std::vector<double> domain_discriminate(const ParamVector& params, const ModelSizes& sizes,
                                        const std::vector<std::vector<double>>& local);
// Full detector pipeline: per-instance probability rows over C+1 categories.
std::vector<std::vector<double>> scene_probs(const ParamVector& params, const ModelSizes& sizes,
                                             const std::vector<std::vector<double>>& instances);

// Tape builders for the differentiable paths. Each returns node ids on the
// caller's tape; `detector_instance` runs both extractor stages for one
// instance feature vector.
struct InstanceNodes {
    NodeId local;
    NodeId high;
};
InstanceNodes detector_instance(Tape& tape, const ModelSizes& sizes, std::span<const double> x);
NodeId head_probs(Tape& tape, const ModelSizes& sizes, NodeId high); // softmax over C+1 logits
// Scalar domain score for one instance's local features; when through_grl is
// set the features pass the gradient reversal op before the classifier.
NodeId domain_score(Tape& tape, const ModelSizes& sizes, NodeId local, bool through_grl);

} // namespace fbc
