#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbc/param_vector.hpp"

namespace fbc {

/// One labeled "image": a bag of per-instance feature vectors. Foreground
/// categories are 0..C-1; the background category is C.
struct Scene {
    int scene_id = 0;
    std::vector<std::vector<double>> instances; // K x d_in
    std::vector<int> labels;                    // one per instance
};

/// Trainer-facing target scene: features only. The ground-truth categories
/// live in a separate hidden-label table that only the evaluation harness
/// reads.
struct TargetScene {
    int scene_id = 0;
    std::vector<std::vector<double>> instances; // K x d_in
};

struct HiddenLabels {
    // labels[s][k] is the category of instance k in target scene s,
    // in the order of the generated/loaded target scenes.
    std::vector<std::vector<int>> labels;
};

/// Parameters of one synthetic domain-shift scenario.
///
/// shift-gauss moves the class conditionals by a rotation/scale/translation
/// of the informative channels (a high-level shift); fog leaves them alone
/// and corrupts the texture channels with a bias plus extra noise (a
/// low-level shift).
struct ScenarioSpec {
    std::string name = "shift-gauss"; // "shift-gauss" or "fog"
    std::uint64_t seed = 0;
    int n_source = 60;
    int n_target = 60;
    int instances_per_scene = 8;
    double background_fraction = 0.5; // rho in [0, 1)
    int num_classes = 3;              // foreground categories
    int d_in = 6;                     // 4 informative + 2 texture channels

    // shift-gauss parameters
    double rotation_deg = 50.0;
    double scale = 1.15;
    double translation = 0.4;

    // fog parameters
    double noise = 0.8;
    double channel_bias = 1.8;

    void validate() const; // throws ConfigError naming the offending field
};

struct Dataset {
    std::vector<Scene> source;
    std::vector<TargetScene> target;
    HiddenLabels hidden;
};

/// Draw a full dataset for the scenario; deterministic given the seed.
Dataset generate(const ScenarioSpec& spec);

/// Analytic mean of one category's feature distribution (after the domain
/// transform when target_domain is set).
std::vector<double> analytic_class_mean(const ScenarioSpec& spec, int category, bool target_domain);

// CSV persistence. Header: domain,scene_id,instance_id,label,f0..f{d-1};
// label is -1 on target rows. Values round-trip bit-exactly.
void save_source_dataset(const std::vector<Scene>& scenes, const std::string& path);
void save_target_dataset(const std::vector<TargetScene>& scenes, const std::string& path);
// Hidden labels: scene_id,instance_id,label.
void save_hidden_labels(const std::vector<TargetScene>& scenes, const HiddenLabels& hidden,
                        const std::string& path);

std::vector<Scene> load_source_dataset(const std::string& path);
std::vector<TargetScene> load_target_dataset(const std::string& path);
HiddenLabels load_hidden_labels(const std::vector<TargetScene>& scenes, const std::string& path);

// In-memory forms of the same encodings.
std::string source_dataset_to_csv(const std::vector<Scene>& scenes);
std::string target_dataset_to_csv(const std::vector<TargetScene>& scenes);
std::string hidden_labels_to_csv(const std::vector<TargetScene>& scenes, const HiddenLabels& hidden);

} // namespace fbc
