#include "fbc/synthdata.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include "fbc/errors.hpp"

namespace fbc {
namespace {

constexpr int kTextureChannels = 2;
constexpr double kPi = 3.141592653589793;

// Class-conditional layout in feature space. Foreground classes sit on a
// ring in the first two informative channels, spread further by a second
// harmonic in the next two; the background class is a broader blob at the
// origin. Texture channels carry a weak class-dependent signal in the
// source domain (this is what the fog scenario corrupts).
struct Conditionals {
    int d_in;
    int d_informative;
    int num_classes;

    std::vector<double> mean(int category) const {
        std::vector<double> mu(static_cast<std::size_t>(d_in), 0.0);
        if (category < num_classes) {
            const double angle = 2.0 * kPi * category / num_classes;
            if (d_informative > 0) mu[0] = 2.2 * std::cos(angle);
            if (d_informative > 1) mu[1] = 2.2 * std::sin(angle);
            if (d_informative > 2) mu[2] = 1.2 * std::cos(2.0 * angle);
            if (d_informative > 3) mu[3] = 1.2 * std::sin(2.0 * angle);
            mu[d_informative + 0] = 0.9 * std::cos(angle + 0.7);
            mu[d_informative + 1] = 0.9 * std::sin(angle + 0.7);
        }
        return mu;
    }

    double stddev(int category, int dim) const {
        if (dim >= d_informative) return 0.45;
        return category < num_classes ? 0.45 : 0.7;
    }
};

struct ShiftGaussTransform {
    double c, s;      // cos/sin of the rotation angle
    double scale;
    double translation;
    int d_informative;

    void apply(std::vector<double>& x) const {
        for (int p = 0; p + 1 < d_informative; p += 2) {
            const double a = x[p];
            const double b = x[p + 1];
            x[p] = c * a - s * b;
            x[p + 1] = s * a + c * b;
        }
        for (int i = 0; i < d_informative; ++i) x[i] = scale * x[i] + translation;
    }
};

int draw_category(const ScenarioSpec& spec, Rng& rng) {
    if (rng.uniform() < spec.background_fraction) return spec.num_classes;
    return static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(spec.num_classes)));
}

std::vector<double> draw_instance(const Conditionals& cond, int category, Rng& rng) {
    std::vector<double> x = cond.mean(category);
    for (int i = 0; i < cond.d_in; ++i) x[i] += cond.stddev(category, i) * rng.normal();
    return x;
}

void format_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

struct CsvRow {
    std::vector<std::string> fields;
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t lineno, const std::string& what) {
    throw ParseError(path + ":" + std::to_string(lineno) + ": " + what);
}

double parse_double(const std::string& s, const std::string& path, std::size_t lineno) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') parse_fail(path, lineno, "bad number '" + s + "'");
    return v;
}

long parse_int(const std::string& s, const std::string& path, std::size_t lineno) {
    char* end = nullptr;
    const long v = std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') parse_fail(path, lineno, "bad integer '" + s + "'");
    return v;
}

std::string dataset_header(int d_in) {
    std::string h = "domain,scene_id,instance_id,label";
    for (int i = 0; i < d_in; ++i) h += ",f" + std::to_string(i);
    return h;
}

void write_rows(std::ostream& out, const std::string& domain, int scene_id,
                const std::vector<std::vector<double>>& instances,
                const std::vector<int>* labels) {
    for (std::size_t k = 0; k < instances.size(); ++k) {
        std::string row = domain;
        row += ',';
        row += std::to_string(scene_id);
        row += ',';
        row += std::to_string(k);
        row += ',';
        row += std::to_string(labels ? (*labels)[k] : -1);
        for (double v : instances[k]) {
            row += ',';
            format_double(row, v);
        }
        row += '\n';
        out << row;
    }
}

struct LoadedRow {
    std::string domain;
    int scene_id;
    int instance_id;
    int label;
    std::vector<double> features;
};

std::vector<LoadedRow> load_rows(const std::string& path, const std::string& expected_domain) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) parse_fail(path, 1, "missing header");
    ++lineno;
    auto header = split_csv_line(line);
    if (header.size() < 5 || header[0] != "domain" || header[1] != "scene_id" ||
        header[2] != "instance_id" || header[3] != "label") {
        parse_fail(path, lineno, "unexpected header '" + line + "'");
    }
    const std::size_t columns = header.size();

    std::vector<LoadedRow> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != columns) {
            parse_fail(path, lineno, "expected " + std::to_string(columns) + " columns, got " +
                                         std::to_string(fields.size()));
        }
        LoadedRow row;
        row.domain = fields[0];
        if (row.domain != expected_domain) {
            parse_fail(path, lineno, "expected domain '" + expected_domain + "', got '" +
                                         row.domain + "'");
        }
        row.scene_id = static_cast<int>(parse_int(fields[1], path, lineno));
        row.instance_id = static_cast<int>(parse_int(fields[2], path, lineno));
        row.label = static_cast<int>(parse_int(fields[3], path, lineno));
        row.features.reserve(columns - 4);
        for (std::size_t i = 4; i < columns; ++i) {
            row.features.push_back(parse_double(fields[i], path, lineno));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path + ": no data rows");
    return rows;
}

} // namespace

void ScenarioSpec::validate() const {
    if (name != "shift-gauss" && name != "fog")
        throw ConfigError("scenario: unknown name '" + name + "'");
    if (n_source < 1) throw ConfigError("n_source: must be >= 1");
    if (n_target < 1) throw ConfigError("n_target: must be >= 1");
    if (instances_per_scene < 1) throw ConfigError("instances: must be >= 1");
    if (!(background_fraction >= 0.0 && background_fraction < 1.0))
        throw ConfigError("bg_fraction: must be in [0, 1)");
    if (num_classes < 1) throw ConfigError("num_classes: must be >= 1");
    if (d_in < kTextureChannels + 1) throw ConfigError("d_in: must be >= 3");
    if (!(scale > 0.0)) throw ConfigError("scale: must be > 0");
    if (noise < 0.0) throw ConfigError("noise: must be >= 0");
}

Dataset generate(const ScenarioSpec& spec) {
    spec.validate();
    const Conditionals cond{spec.d_in, spec.d_in - kTextureChannels, spec.num_classes};
    const double angle = spec.rotation_deg * kPi / 180.0;
    const ShiftGaussTransform shift{std::cos(angle), std::sin(angle), spec.scale,
                                    spec.translation, cond.d_informative};
    Rng rng(spec.seed);

    Dataset ds;
    ds.source.reserve(static_cast<std::size_t>(spec.n_source));
    for (int s = 0; s < spec.n_source; ++s) {
        Scene scene;
        scene.scene_id = s;
        for (int k = 0; k < spec.instances_per_scene; ++k) {
            const int cat = draw_category(spec, rng);
            scene.labels.push_back(cat);
            scene.instances.push_back(draw_instance(cond, cat, rng));
        }
        ds.source.push_back(std::move(scene));
    }

    ds.target.reserve(static_cast<std::size_t>(spec.n_target));
    ds.hidden.labels.reserve(static_cast<std::size_t>(spec.n_target));
    for (int s = 0; s < spec.n_target; ++s) {
        TargetScene scene;
        scene.scene_id = s;
        std::vector<int> hidden;
        for (int k = 0; k < spec.instances_per_scene; ++k) {
            const int cat = draw_category(spec, rng);
            hidden.push_back(cat);
            auto x = draw_instance(cond, cat, rng);
            if (spec.name == "shift-gauss") {
                shift.apply(x);
            } else { // fog corrupts the texture channels only
                for (int i = cond.d_informative; i < spec.d_in; ++i) {
                    x[i] += spec.channel_bias + spec.noise * rng.normal();
                }
            }
            scene.instances.push_back(std::move(x));
        }
        ds.target.push_back(std::move(scene));
        ds.hidden.labels.push_back(std::move(hidden));
    }
    return ds;
}

std::vector<double> analytic_class_mean(const ScenarioSpec& spec, int category, bool target_domain) {
    spec.validate();
    const Conditionals cond{spec.d_in, spec.d_in - kTextureChannels, spec.num_classes};
    std::vector<double> mu = cond.mean(category);
    if (target_domain) {
        if (spec.name == "shift-gauss") {
            const double angle = spec.rotation_deg * kPi / 180.0;
            const ShiftGaussTransform shift{std::cos(angle), std::sin(angle), spec.scale,
                                            spec.translation, cond.d_informative};
            shift.apply(mu);
        } else {
            for (int i = cond.d_informative; i < spec.d_in; ++i) mu[i] += spec.channel_bias;
        }
    }
    return mu;
}

namespace {

void write_source_csv(std::ostream& out, const std::vector<Scene>& scenes,
                      const std::string& name) {
    if (scenes.empty()) throw ParseError(name + ": refusing to write empty dataset");
    for (const Scene& s : scenes) {
        if (s.instances.empty())
            throw ParseError(name + ": scene " + std::to_string(s.scene_id) + " has no instances");
    }
    out << dataset_header(static_cast<int>(scenes.front().instances.front().size())) << '\n';
    for (const Scene& s : scenes) {
        write_rows(out, "source", s.scene_id, s.instances, &s.labels);
    }
}

void write_target_csv(std::ostream& out, const std::vector<TargetScene>& scenes,
                      const std::string& name) {
    if (scenes.empty()) throw ParseError(name + ": refusing to write empty dataset");
    for (const TargetScene& s : scenes) {
        if (s.instances.empty())
            throw ParseError(name + ": scene " + std::to_string(s.scene_id) + " has no instances");
    }
    out << dataset_header(static_cast<int>(scenes.front().instances.front().size())) << '\n';
    for (const TargetScene& s : scenes) {
        write_rows(out, "target", s.scene_id, s.instances, nullptr);
    }
}

void write_hidden_csv(std::ostream& out, const std::vector<TargetScene>& scenes,
                      const HiddenLabels& hidden) {
    if (hidden.labels.size() != scenes.size())
        throw DataError("hidden labels cover " + std::to_string(hidden.labels.size()) +
                        " scenes, dataset has " + std::to_string(scenes.size()));
    out << "scene_id,instance_id,label\n";
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        for (std::size_t k = 0; k < scenes[s].instances.size(); ++k) {
            out << scenes[s].scene_id << ',' << k << ',' << hidden.labels[s][k] << '\n';
        }
    }
}

std::ofstream open_for_write(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError(path + ": cannot open for writing");
    return out;
}

} // namespace

void save_source_dataset(const std::vector<Scene>& scenes, const std::string& path) {
    auto out = open_for_write(path);
    write_source_csv(out, scenes, path);
}

void save_target_dataset(const std::vector<TargetScene>& scenes, const std::string& path) {
    auto out = open_for_write(path);
    write_target_csv(out, scenes, path);
}

void save_hidden_labels(const std::vector<TargetScene>& scenes, const HiddenLabels& hidden,
                        const std::string& path) {
    auto out = open_for_write(path);
    write_hidden_csv(out, scenes, hidden);
}

std::string source_dataset_to_csv(const std::vector<Scene>& scenes) {
    std::ostringstream out;
    write_source_csv(out, scenes, "<memory>");
    return out.str();
}

std::string target_dataset_to_csv(const std::vector<TargetScene>& scenes) {
    std::ostringstream out;
    write_target_csv(out, scenes, "<memory>");
    return out.str();
}

std::string hidden_labels_to_csv(const std::vector<TargetScene>& scenes,
                                 const HiddenLabels& hidden) {
    std::ostringstream out;
    write_hidden_csv(out, scenes, hidden);
    return out.str();
}

std::vector<Scene> load_source_dataset(const std::string& path) {
    auto rows = load_rows(path, "source");
    std::vector<Scene> scenes;
    for (const auto& row : rows) {
        if (row.label < 0) {
            throw ParseError(path + ": source row in scene " + std::to_string(row.scene_id) +
                             " has no label");
        }
        if (scenes.empty() || scenes.back().scene_id != row.scene_id) {
            Scene s;
            s.scene_id = row.scene_id;
            scenes.push_back(std::move(s));
        }
        scenes.back().instances.push_back(row.features);
        scenes.back().labels.push_back(row.label);
    }
    return scenes;
}

std::vector<TargetScene> load_target_dataset(const std::string& path) {
    auto rows = load_rows(path, "target");
    std::vector<TargetScene> scenes;
    for (const auto& row : rows) {
        if (scenes.empty() || scenes.back().scene_id != row.scene_id) {
            TargetScene s;
            s.scene_id = row.scene_id;
            scenes.push_back(std::move(s));
        }
        scenes.back().instances.push_back(row.features);
    }
    return scenes;
}

HiddenLabels load_hidden_labels(const std::vector<TargetScene>& scenes, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open file");
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) parse_fail(path, 1, "missing header");
    ++lineno;
    if (split_csv_line(line) != std::vector<std::string>{"scene_id", "instance_id", "label"})
        parse_fail(path, lineno, "unexpected header '" + line + "'");

    std::map<int, std::size_t> index;
    for (std::size_t s = 0; s < scenes.size(); ++s) index[scenes[s].scene_id] = s;

    HiddenLabels hidden;
    hidden.labels.resize(scenes.size());
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        hidden.labels[s].assign(scenes[s].instances.size(), -1);
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        if (fields.size() != 3) {
            parse_fail(path, lineno, "expected 3 columns, got " + std::to_string(fields.size()));
        }
        const int scene_id = static_cast<int>(parse_int(fields[0], path, lineno));
        const int instance_id = static_cast<int>(parse_int(fields[1], path, lineno));
        const int label = static_cast<int>(parse_int(fields[2], path, lineno));
        auto it = index.find(scene_id);
        if (it == index.end()) parse_fail(path, lineno, "unknown scene_id " + fields[0]);
        auto& slot = hidden.labels[it->second];
        if (instance_id < 0 || static_cast<std::size_t>(instance_id) >= slot.size())
            parse_fail(path, lineno, "instance_id " + fields[1] + " out of range");
        slot[static_cast<std::size_t>(instance_id)] = label;
    }
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        for (std::size_t k = 0; k < hidden.labels[s].size(); ++k) {
            if (hidden.labels[s][k] < 0) {
                throw ParseError(path + ": missing label for scene " +
                                 std::to_string(scenes[s].scene_id) + " instance " +
                                 std::to_string(k));
            }
        }
    }
    return hidden;
}

} // namespace fbc
