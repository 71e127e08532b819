#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fbc/trainer.hpp"

namespace fbc {

// JSON-lines metrics encoding, one record per episode. The adaptation schema
// has a fixed key set mirroring EpisodeMetrics; the source-only schema drops
// the adaptation-specific keys (target_loss, grad_inner_product,
// pseudo_label_count, proxy_a_distance).
std::string metrics_to_jsonl(const std::vector<EpisodeMetrics>& metrics, bool source_only);

// Flat CSV of final parameters: segment,index,value.
std::string params_to_csv(const ParamVector& params);

/// One row of the aggregate comparison table.
struct RunSummary {
    std::string run;
    int episodes = 0;
    std::optional<double> final_target_accuracy;
    std::optional<double> mean_grad_inner_product;
    double final_source_entropy = 0.0;
    double final_target_entropy = 0.0;
    std::optional<double> proxy_a_distance; // last reported value, if any
};

/// Parse one metrics file into a summary row. Throws ParseError naming the
/// file on empty input or schema mismatch.
RunSummary summarize_metrics_file(const std::string& path);

std::string summaries_to_csv(const std::vector<RunSummary>& rows);
std::string summaries_to_text(const std::vector<RunSummary>& rows);

} // namespace fbc
