#include "fbc/report_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fbc/errors.hpp"

namespace fbc {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string format_cell(const std::optional<double>& v) {
    if (!v) return "n/a";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return buf;
}

std::string format_cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

ordered_json json_or_null(const std::optional<double>& v) {
    if (!v) return nullptr;
    return *v;
}

} // namespace

std::string metrics_to_jsonl(const std::vector<EpisodeMetrics>& metrics, bool source_only) {
    std::string out;
    for (const EpisodeMetrics& m : metrics) {
        ordered_json j;
        j["episode"] = m.episode;
        j["source_loss"] = m.source_loss;
        if (!source_only) {
            j["target_loss"] = m.target_loss;
            j["grad_inner_product"] = m.grad_inner_product;
        }
        j["source_entropy"] = m.source_entropy;
        j["target_entropy"] = m.target_entropy;
        j["target_accuracy"] = json_or_null(m.target_accuracy);
        if (!source_only) {
            j["pseudo_label_count"] = m.pseudo_label_count;
            j["proxy_a_distance"] = json_or_null(m.proxy_a_distance);
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::string params_to_csv(const ParamVector& params) {
    std::string out = "segment,index,value\n";
    for (const Segment& seg : params.layout()) {
        for (std::size_t i = 0; i < seg.size(); ++i) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.17g", params[seg.offset + i]);
            out += seg.name;
            out += ',';
            out += std::to_string(i);
            out += ',';
            out += buf;
            out += '\n';
        }
    }
    return out;
}

RunSummary summarize_metrics_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");

    RunSummary row;
    row.run = path;
    std::string line;
    std::size_t lineno = 0;
    double gip_sum = 0.0;
    int gip_count = 0;
    ordered_json last;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("episode") || !j.contains("source_loss") ||
            !j.contains("source_entropy") || !j.contains("target_entropy")) {
            throw ParseError(path + ":" + std::to_string(lineno) + ": missing metrics keys");
        }
        if (j.contains("grad_inner_product") && j["grad_inner_product"].is_number()) {
            gip_sum += j["grad_inner_product"].get<double>();
            ++gip_count;
        }
        if (j.contains("proxy_a_distance") && j["proxy_a_distance"].is_number()) {
            row.proxy_a_distance = j["proxy_a_distance"].get<double>();
        }
        last = j;
        ++row.episodes;
    }
    if (row.episodes == 0) throw ParseError(path + ": empty metrics file");
    if (gip_count > 0) row.mean_grad_inner_product = gip_sum / gip_count;
    row.final_source_entropy = last["source_entropy"].get<double>();
    row.final_target_entropy = last["target_entropy"].get<double>();
    if (last.contains("target_accuracy") && last["target_accuracy"].is_number()) {
        row.final_target_accuracy = last["target_accuracy"].get<double>();
    }
    return row;
}

std::string summaries_to_csv(const std::vector<RunSummary>& rows) {
    std::string out =
        "run,episodes,final_target_accuracy,mean_grad_inner_product,"
        "final_source_entropy,final_target_entropy,proxy_a_distance\n";
    for (const RunSummary& r : rows) {
        out += r.run;
        out += ',';
        out += std::to_string(r.episodes);
        out += ',';
        out += format_cell(r.final_target_accuracy);
        out += ',';
        out += format_cell(r.mean_grad_inner_product);
        out += ',';
        out += format_cell(r.final_source_entropy);
        out += ',';
        out += format_cell(r.final_target_entropy);
        out += ',';
        out += format_cell(r.proxy_a_distance);
        out += '\n';
    }
    return out;
}

std::string summaries_to_text(const std::vector<RunSummary>& rows) {
    std::ostringstream out;
    out << "run                                      episodes  tgt_acc  mean_gip  src_ent  tgt_ent  proxy_a\n";
    for (const RunSummary& r : rows) {
        std::string name = r.run;
        if (name.size() > 40) name = "..." + name.substr(name.size() - 37);
        out << name;
        for (std::size_t i = name.size(); i < 41; ++i) out << ' ';
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%8d  %7s  %8s  %7s  %7s  %7s\n", r.episodes,
                      format_cell(r.final_target_accuracy).c_str(),
                      format_cell(r.mean_grad_inner_product).c_str(),
                      format_cell(r.final_source_entropy).c_str(),
                      format_cell(r.final_target_entropy).c_str(),
                      format_cell(r.proxy_a_distance).c_str());
        out << buf;
    }
    return out.str();
}

} // namespace fbc
