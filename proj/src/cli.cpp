#include "fbc/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fbc/analysis.hpp"
#include "fbc/errors.hpp"
#include "fbc/report_io.hpp"
#include "fbc/trainer.hpp"
#include "fbc/verify.hpp"

namespace fbc {
namespace {

struct GenConfig {
    ScenarioSpec spec;
    std::string out_dir = ".";
};

struct TrainConfig {
    std::string source_path;
    std::string target_path;
    std::string hidden_labels_path;
    std::string metrics_path = "metrics.jsonl";
    std::string params_path = "params.csv";
    Hyperparams hp;
    std::uint64_t seed = 0;
    std::size_t d_low = 16;
    std::size_t d_high = 16;
    std::size_t dc_hidden = 16;
    std::size_t num_classes = 3;
    bool source_only = false;
    bool no_adv = false;
    bool no_diversity = false;
    bool no_gradient_alignment = false;
    int pad_every = 0;
    bool dump_config = false;
};

struct VerifyConfig {
    std::string report_path = "verify_report.json";
    std::uint64_t seed = 7;
    bool perturb_grl = false;
};

struct ReportConfig {
    std::string out_path;
    std::vector<std::string> inputs;
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path + ": cannot open for writing");
    out << content;
}

void require_distinct_paths(const std::vector<std::string>& paths) {
    std::set<std::string> seen;
    for (const std::string& p : paths) {
        if (p.empty()) continue;
        if (!seen.insert(p).second) throw ConfigError("path used twice: " + p);
    }
}

int cmd_gen_data(const GenConfig& cfg) {
    cfg.spec.validate();
    Dataset ds = generate(cfg.spec);
    std::filesystem::create_directories(cfg.out_dir);
    const std::string base = cfg.out_dir + "/";
    save_source_dataset(ds.source, base + "source.csv");
    save_target_dataset(ds.target, base + "target.csv");
    save_hidden_labels(ds.target, ds.hidden, base + "target_labels.csv");
    std::cout << "wrote " << base << "source.csv, target.csv, target_labels.csv\n";
    return 0;
}

int cmd_train(const TrainConfig& cfg) {
    if (cfg.dump_config) {
        nlohmann::ordered_json j;
        j["source"] = cfg.source_path;
        j["target"] = cfg.target_path;
        j["hidden_labels"] = cfg.hidden_labels_path;
        j["metrics"] = cfg.metrics_path;
        j["params"] = cfg.params_path;
        j["seed"] = cfg.seed;
        j["alpha"] = cfg.hp.alpha;
        j["beta"] = cfg.hp.beta;
        j["gamma"] = cfg.hp.gamma;
        j["lambda_adv"] = cfg.hp.lambda_adv;
        j["n_itr"] = cfg.hp.n_itr;
        j["tau"] = cfg.hp.tau;
        j["d_low"] = cfg.d_low;
        j["d_high"] = cfg.d_high;
        j["dc_hidden"] = cfg.dc_hidden;
        j["num_classes"] = cfg.num_classes;
        j["source_only"] = cfg.source_only;
        j["no_adv"] = cfg.no_adv;
        j["no_diversity"] = cfg.no_diversity;
        j["no_gradient_alignment"] = cfg.no_gradient_alignment;
        j["pad_every"] = cfg.pad_every;
        std::cout << j.dump(2) << "\n";
        return 0;
    }
    require_distinct_paths({cfg.source_path, cfg.target_path, cfg.hidden_labels_path,
                            cfg.metrics_path, cfg.params_path});
    cfg.hp.validate();
    if (!std::filesystem::exists(cfg.source_path))
        throw ConfigError("dataset file not found: " + cfg.source_path);
    if (!std::filesystem::exists(cfg.target_path))
        throw ConfigError("dataset file not found: " + cfg.target_path);

    std::vector<Scene> source = load_source_dataset(cfg.source_path);
    std::vector<TargetScene> target = load_target_dataset(cfg.target_path);

    ModelSizes sizes;
    sizes.d_in = source.front().instances.front().size();
    sizes.d_low = cfg.d_low;
    sizes.d_high = cfg.d_high;
    sizes.dc_hidden = cfg.dc_hidden;
    sizes.num_classes = cfg.num_classes;
    for (const TargetScene& s : target) {
        for (const auto& x : s.instances) {
            if (x.size() != sizes.d_in)
                throw ConfigError("target feature width differs from source");
        }
    }
    for (const Scene& s : source) {
        for (int label : s.labels) {
            if (label < 0 || static_cast<std::size_t>(label) >= sizes.num_categories())
                throw ConfigError("source label " + std::to_string(label) +
                                  " outside 0.." + std::to_string(sizes.num_classes));
        }
    }

    std::optional<TargetEvaluator> evaluator;
    if (!cfg.hidden_labels_path.empty()) {
        HiddenLabels hidden = load_hidden_labels(target, cfg.hidden_labels_path);
        evaluator.emplace(target, std::move(hidden));
    }

    TrainOptions opts;
    opts.seed = cfg.seed;
    opts.enable_adv = !cfg.no_adv;
    opts.enable_diversity = !cfg.no_diversity;
    opts.enable_gradient_alignment = !cfg.no_gradient_alignment;
    opts.pad_every = cfg.pad_every;
    if (cfg.pad_every > 0) {
        const std::uint64_t pad_seed = cfg.seed + 0x9e37;
        opts.pad_probe = [source, target, sizes, pad_seed](const ParamVector& params) {
            auto fs = collect_local_features(params, sizes, source);
            auto ft = collect_local_features(params, sizes, target);
            return proxy_a_distance(fs, ft, pad_seed).value;
        };
    }

    TrainResult result;
    if (cfg.source_only) {
        result = train_source_only(source, target, sizes, cfg.hp, opts,
                                   evaluator ? &*evaluator : nullptr);
    } else {
        result = train(source, target, sizes, cfg.hp, opts, evaluator ? &*evaluator : nullptr);
    }

    write_file(cfg.metrics_path, metrics_to_jsonl(result.metrics, cfg.source_only));
    write_file(cfg.params_path, params_to_csv(result.params));
    if (result.aborted) {
        std::cerr << "training aborted: " << result.abort_reason << "\n";
        return 3;
    }
    std::cout << "wrote " << cfg.metrics_path << " (" << result.metrics.size() << " episodes), "
              << cfg.params_path << "\n";
    return 0;
}

int cmd_verify(const VerifyConfig& cfg) {
    VerifyOptions opts;
    opts.seed = cfg.seed;
    opts.perturb_grl = cfg.perturb_grl;
    VerifyReport report = run_verification(opts);
    write_file(cfg.report_path, verify_report_to_json(report));
    for (const CheckResult& c : report.checks) {
        std::cout << (c.passed ? "PASS" : "FAIL") << "  " << c.name << "  measured=" << c.measured
                  << "  tolerance=" << c.bound << "\n";
    }
    std::cout << (report.all_passed ? "all checks passed" : "CHECKS FAILED") << " ("
              << report.checks.size() << " checks, report: " << cfg.report_path << ")\n";
    return report.all_passed ? 0 : 1;
}

int cmd_report(const ReportConfig& cfg) {
    std::vector<RunSummary> rows;
    rows.reserve(cfg.inputs.size());
    for (const std::string& path : cfg.inputs) rows.push_back(summarize_metrics_file(path));
    const std::string csv = summaries_to_csv(rows);
    if (!cfg.out_path.empty()) write_file(cfg.out_path, csv);
    std::cout << summaries_to_text(rows);
    return 0;
}

// Flat `key = value` config-file support with explicit precedence:
// command-line flag > config-file key > built-in default. Keys are the long
// option names without the leading dashes; '#' starts a comment.
class ConfigBinder {
public:
    CLI::Option* bind(CLI::Option* opt, std::function<void(const std::string&)> apply) {
        std::string key = opt->get_name(false, false);
        if (key.rfind("--", 0) == 0) key = key.substr(2);
        bindings_[key] = {opt, std::move(apply)};
        return opt;
    }

    void apply_file(const std::string& path) const {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(path + ":" + std::to_string(lineno) +
                                  ": expected key = value, got '" + trimmed + "'");
            }
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            auto it = bindings_.find(key);
            if (it == bindings_.end()) {
                throw ConfigError(path + ":" + std::to_string(lineno) + ": unknown key '" + key +
                                  "'");
            }
            if (it->second.opt->count() > 0) continue; // command line wins
            try {
                it->second.apply(value);
            } catch (const ConfigError&) {
                throw;
            } catch (const std::exception&) {
                throw ConfigError(path + ":" + std::to_string(lineno) + ": bad value for '" + key +
                                  "': '" + value + "'");
            }
        }
    }

    template <typename T>
    static std::function<void(const std::string&)> into(T* field) {
        return [field](const std::string& text) { *field = parse_value<T>(text); };
    }

private:
    struct Binding {
        CLI::Option* opt;
        std::function<void(const std::string&)> apply;
    };

    static std::string trim(const std::string& s) {
        const auto begin = s.find_first_not_of(" \t\r");
        if (begin == std::string::npos) return "";
        const auto end = s.find_last_not_of(" \t\r");
        return s.substr(begin, end - begin + 1);
    }

    template <typename T>
    static T parse_value(const std::string& text) {
        if constexpr (std::is_same_v<T, std::string>) {
            return text;
        } else if constexpr (std::is_same_v<T, bool>) {
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            throw ConfigError("expected true/false");
        } else if constexpr (std::is_floating_point_v<T>) {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) throw ConfigError("trailing characters");
            return static_cast<T>(v);
        } else {
            std::size_t used = 0;
            const long long v = std::stoll(text, &used);
            if (used != text.size()) throw ConfigError("trailing characters");
            return static_cast<T>(v);
        }
    }

    std::map<std::string, Binding> bindings_;
};

void add_scenario_options(CLI::App* cmd, ScenarioSpec& spec, ConfigBinder& binder) {
    binder.bind(cmd->add_option("--scenario", spec.name, "Scenario name: shift-gauss or fog"),
                ConfigBinder::into(&spec.name));
    binder.bind(cmd->add_option("--seed", spec.seed, "Generation seed"),
                ConfigBinder::into(&spec.seed));
    binder.bind(cmd->add_option("--n-source", spec.n_source, "Number of source scenes"),
                ConfigBinder::into(&spec.n_source));
    binder.bind(cmd->add_option("--n-target", spec.n_target, "Number of target scenes"),
                ConfigBinder::into(&spec.n_target));
    binder.bind(cmd->add_option("--instances", spec.instances_per_scene, "Instances per scene"),
                ConfigBinder::into(&spec.instances_per_scene));
    binder.bind(cmd->add_option("--bg-fraction", spec.background_fraction,
                                "Background fraction rho"),
                ConfigBinder::into(&spec.background_fraction));
    binder.bind(cmd->add_option("--num-classes", spec.num_classes, "Foreground category count"),
                ConfigBinder::into(&spec.num_classes));
    binder.bind(cmd->add_option("--d-in", spec.d_in, "Feature channels per instance"),
                ConfigBinder::into(&spec.d_in));
    binder.bind(cmd->add_option("--rotation", spec.rotation_deg, "shift-gauss rotation (degrees)"),
                ConfigBinder::into(&spec.rotation_deg));
    binder.bind(cmd->add_option("--scale", spec.scale, "shift-gauss scale factor"),
                ConfigBinder::into(&spec.scale));
    binder.bind(cmd->add_option("--translation", spec.translation, "shift-gauss translation"),
                ConfigBinder::into(&spec.translation));
    binder.bind(cmd->add_option("--noise", spec.noise, "fog texture noise amplitude"),
                ConfigBinder::into(&spec.noise));
    binder.bind(cmd->add_option("--bias", spec.channel_bias, "fog texture channel bias"),
                ConfigBinder::into(&spec.channel_bias));
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Forward-backward cyclic domain adaptation on synthetic bag-of-instances scenes"};
    app.require_subcommand(1);

    GenConfig gen_cfg;
    std::string gen_config_path;
    ConfigBinder gen_binder;
    auto* gen = app.add_subcommand("gen-data", "Generate a source/target dataset pair");
    gen->add_option("--config", gen_config_path, "Flat key = value config file");
    add_scenario_options(gen, gen_cfg.spec, gen_binder);
    gen_binder.bind(gen->add_option("--out", gen_cfg.out_dir, "Output directory"),
                    ConfigBinder::into(&gen_cfg.out_dir));

    TrainConfig train_cfg;
    std::string train_config_path;
    ConfigBinder train_binder;
    auto* tr = app.add_subcommand("train", "Train the adaptive detector");
    tr->add_option("--config", train_config_path, "Flat key = value config file");
    train_binder.bind(tr->add_option("--source", train_cfg.source_path, "Source dataset CSV"),
                      ConfigBinder::into(&train_cfg.source_path));
    train_binder.bind(tr->add_option("--target", train_cfg.target_path, "Target dataset CSV"),
                      ConfigBinder::into(&train_cfg.target_path));
    train_binder.bind(
        tr->add_option("--hidden-labels", train_cfg.hidden_labels_path,
                       "Evaluation-only target label CSV (enables target_accuracy)"),
        ConfigBinder::into(&train_cfg.hidden_labels_path));
    train_binder.bind(
        tr->add_option("--metrics", train_cfg.metrics_path, "Output metrics JSON-lines path"),
        ConfigBinder::into(&train_cfg.metrics_path));
    train_binder.bind(
        tr->add_option("--params", train_cfg.params_path, "Output parameter CSV path"),
        ConfigBinder::into(&train_cfg.params_path));
    train_binder.bind(tr->add_option("--seed", train_cfg.seed, "Training seed"),
                      ConfigBinder::into(&train_cfg.seed));
    train_binder.bind(tr->add_option("--alpha", train_cfg.hp.alpha, "Inner SGD learning rate"),
                      ConfigBinder::into(&train_cfg.hp.alpha));
    train_binder.bind(tr->add_option("--beta", train_cfg.hp.beta, "Meta-update rate"),
                      ConfigBinder::into(&train_cfg.hp.beta));
    train_binder.bind(tr->add_option("--gamma", train_cfg.hp.gamma, "Diversity weight"),
                      ConfigBinder::into(&train_cfg.hp.gamma));
    train_binder.bind(
        tr->add_option("--lambda-adv", train_cfg.hp.lambda_adv, "Adversarial weight"),
        ConfigBinder::into(&train_cfg.hp.lambda_adv));
    train_binder.bind(tr->add_option("--n-itr", train_cfg.hp.n_itr, "Episode count"),
                      ConfigBinder::into(&train_cfg.hp.n_itr));
    train_binder.bind(
        tr->add_option("--tau", train_cfg.hp.tau, "Pseudo-label confidence threshold"),
        ConfigBinder::into(&train_cfg.hp.tau));
    train_binder.bind(tr->add_option("--d-low", train_cfg.d_low, "Low-level feature width"),
                      ConfigBinder::into(&train_cfg.d_low));
    train_binder.bind(tr->add_option("--d-high", train_cfg.d_high, "High-level feature width"),
                      ConfigBinder::into(&train_cfg.d_high));
    train_binder.bind(
        tr->add_option("--dc-hidden", train_cfg.dc_hidden, "Domain classifier hidden width"),
        ConfigBinder::into(&train_cfg.dc_hidden));
    train_binder.bind(
        tr->add_option("--num-classes", train_cfg.num_classes, "Foreground category count"),
        ConfigBinder::into(&train_cfg.num_classes));
    train_binder.bind(
        tr->add_flag("--source-only", train_cfg.source_only, "Plain supervised source baseline"),
        ConfigBinder::into(&train_cfg.source_only));
    train_binder.bind(
        tr->add_flag("--no-adv", train_cfg.no_adv, "Disable local adversarial alignment"),
        ConfigBinder::into(&train_cfg.no_adv));
    train_binder.bind(
        tr->add_flag("--no-diversity", train_cfg.no_diversity, "Disable entropy diversity terms"),
        ConfigBinder::into(&train_cfg.no_diversity));
    train_binder.bind(tr->add_flag("--no-gradient-alignment", train_cfg.no_gradient_alignment,
                                   "Replace the cyclic phases with joint SGD"),
                      ConfigBinder::into(&train_cfg.no_gradient_alignment));
    train_binder.bind(tr->add_option("--pad-every", train_cfg.pad_every,
                                     "Probe proxy A-distance every N episodes (0 = never)"),
                      ConfigBinder::into(&train_cfg.pad_every));
    tr->add_flag("--dump-config", train_cfg.dump_config,
                 "Print the effective configuration as JSON and exit");

    VerifyConfig verify_cfg;
    auto* vf = app.add_subcommand("verify", "Run the numerical verification suite");
    vf->add_option("--report", verify_cfg.report_path, "Output JSON report path");
    vf->add_option("--seed", verify_cfg.seed, "Suite seed");
    vf->add_flag("--perturb-grl", verify_cfg.perturb_grl,
                 "Inject a reversal fault (the suite must flag it)");

    ReportConfig report_cfg;
    auto* rp = app.add_subcommand("report", "Aggregate metrics files into a comparison table");
    rp->add_option("--out", report_cfg.out_path, "Output CSV path");
    rp->add_option("inputs", report_cfg.inputs, "Metrics JSON-lines files")->required();

    try {
        app.parse(argc, argv);
        if (gen->parsed()) {
            if (!gen_config_path.empty()) gen_binder.apply_file(gen_config_path);
            return cmd_gen_data(gen_cfg);
        }
        if (tr->parsed()) {
            if (!train_config_path.empty()) train_binder.apply_file(train_config_path);
            return cmd_train(train_cfg);
        }
        if (vf->parsed()) return cmd_verify(verify_cfg);
        if (rp->parsed()) return cmd_report(report_cfg);
        return 2;
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const NonFiniteLoss& e) {
        std::cerr << "numeric failure: " << e.what() << "\n";
        return 3;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}

} // namespace fbc
