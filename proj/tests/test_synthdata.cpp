#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "fbc/errors.hpp"
#include "fbc/synthdata.hpp"

using namespace fbc;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/fbc_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

ScenarioSpec small_spec(const std::string& name, std::uint64_t seed) {
    ScenarioSpec spec;
    spec.name = name;
    spec.seed = seed;
    spec.n_source = 20;
    spec.n_target = 20;
    spec.instances_per_scene = 6;
    return spec;
}

} // namespace

TEST_CASE("identity shift draws source and target from the same distribution") {
    ScenarioSpec spec = small_spec("shift-gauss", 42);
    spec.rotation_deg = 0.0;
    spec.scale = 1.0;
    spec.translation = 0.0;
    spec.n_source = 400;
    spec.n_target = 400;
    Dataset ds = generate(spec);

    // Compare per-dimension means over all instances; identical conditionals
    // and matched class frequencies keep them equal up to sampling noise.
    std::vector<double> mean_s(6, 0.0), mean_t(6, 0.0);
    std::size_t ns = 0, nt = 0;
    for (const auto& s : ds.source) {
        for (const auto& x : s.instances) {
            for (int i = 0; i < 6; ++i) mean_s[i] += x[i];
            ++ns;
        }
    }
    for (const auto& t : ds.target) {
        for (const auto& x : t.instances) {
            for (int i = 0; i < 6; ++i) mean_t[i] += x[i];
            ++nt;
        }
    }
    for (int i = 0; i < 6; ++i) {
        CHECK(std::fabs(mean_s[i] / ns - mean_t[i] / nt) < 0.12); // ~3 sigma at n = 2400
    }
}

TEST_CASE("generation is deterministic per seed") {
    ScenarioSpec spec = small_spec("fog", 9);
    Dataset a = generate(spec);
    Dataset b = generate(spec);
    CHECK(source_dataset_to_csv(a.source) == source_dataset_to_csv(b.source));
    CHECK(target_dataset_to_csv(a.target) == target_dataset_to_csv(b.target));
    CHECK(hidden_labels_to_csv(a.target, a.hidden) == hidden_labels_to_csv(b.target, b.hidden));

    ScenarioSpec other = spec;
    other.seed = 10;
    Dataset c = generate(other);
    CHECK(source_dataset_to_csv(a.source) != source_dataset_to_csv(c.source));
}

TEST_CASE("background fraction concentrates near rho") {
    ScenarioSpec spec = small_spec("shift-gauss", 3);
    spec.background_fraction = 0.7;
    spec.instances_per_scene = 10;
    spec.n_source = 200;
    spec.n_target = 1;
    Dataset ds = generate(spec);
    std::size_t bg = 0, total = 0;
    for (const auto& s : ds.source) {
        for (int label : s.labels) {
            if (label == spec.num_classes) ++bg;
            ++total;
        }
    }
    const double fraction = static_cast<double>(bg) / static_cast<double>(total);
    CHECK(fraction >= 0.65);
    CHECK(fraction <= 0.75);
}

TEST_CASE("per-class empirical means match the analytic means") {
    ScenarioSpec spec = small_spec("shift-gauss", 17);
    spec.n_source = 500;
    spec.n_target = 500;
    spec.background_fraction = 0.4;
    Dataset ds = generate(spec);

    for (int domain = 0; domain < 2; ++domain) {
        for (int cat = 0; cat <= spec.num_classes; ++cat) {
            std::vector<double> mean(6, 0.0);
            std::size_t n = 0;
            if (domain == 0) {
                for (const auto& s : ds.source) {
                    for (std::size_t k = 0; k < s.instances.size(); ++k) {
                        if (s.labels[k] != cat) continue;
                        for (int i = 0; i < 6; ++i) mean[i] += s.instances[k][i];
                        ++n;
                    }
                }
            } else {
                for (std::size_t si = 0; si < ds.target.size(); ++si) {
                    for (std::size_t k = 0; k < ds.target[si].instances.size(); ++k) {
                        if (ds.hidden.labels[si][k] != cat) continue;
                        for (int i = 0; i < 6; ++i) mean[i] += ds.target[si].instances[k][i];
                        ++n;
                    }
                }
            }
            REQUIRE(n > 100);
            auto expected = analytic_class_mean(spec, cat, domain == 1);
            // Widest per-dim sigma is ~1.2 (background, scaled); 3 sigma/sqrt(n)
            const double bound = 3.0 * 1.3 / std::sqrt(static_cast<double>(n));
            for (int i = 0; i < 6; ++i) {
                CHECK(std::fabs(mean[i] / n - expected[i]) <= doctest::Approx(bound).epsilon(0.5));
            }
        }
    }
}

TEST_CASE("fog corrupts only the texture channels") {
    ScenarioSpec spec = small_spec("fog", 23);
    for (int cat = 0; cat <= spec.num_classes; ++cat) {
        auto src = analytic_class_mean(spec, cat, false);
        auto tgt = analytic_class_mean(spec, cat, true);
        for (int i = 0; i < 4; ++i) CHECK(src[i] == tgt[i]);
        for (int i = 4; i < 6; ++i) CHECK(tgt[i] == doctest::Approx(src[i] + spec.channel_bias));
    }
}

TEST_CASE("dataset round-trip is bit exact") {
    ScenarioSpec spec = small_spec("shift-gauss", 77);
    Dataset ds = generate(spec);
    TempFile src("roundtrip_source.csv"), tgt("roundtrip_target.csv"), hid("roundtrip_hidden.csv");

    save_source_dataset(ds.source, src.path);
    save_target_dataset(ds.target, tgt.path);
    save_hidden_labels(ds.target, ds.hidden, hid.path);

    auto source2 = load_source_dataset(src.path);
    auto target2 = load_target_dataset(tgt.path);
    auto hidden2 = load_hidden_labels(target2, hid.path);

    REQUIRE(source2.size() == ds.source.size());
    for (std::size_t s = 0; s < source2.size(); ++s) {
        CHECK(source2[s].scene_id == ds.source[s].scene_id);
        CHECK(source2[s].labels == ds.source[s].labels);
        CHECK(source2[s].instances == ds.source[s].instances); // bit-exact doubles
    }
    REQUIRE(target2.size() == ds.target.size());
    for (std::size_t s = 0; s < target2.size(); ++s) {
        CHECK(target2[s].instances == ds.target[s].instances);
    }
    CHECK(hidden2.labels == ds.hidden.labels);

    // Second save produces identical bytes.
    TempFile src2("roundtrip_source2.csv");
    save_source_dataset(source2, src2.path);
    std::ifstream a(src.path), b(src2.path);
    std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
    std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
    CHECK(sa == sb);
}

TEST_CASE("malformed files raise ParseError naming the line") {
    TempFile bad("bad.csv");
    {
        std::ofstream out(bad.path);
        out << "domain,scene_id,instance_id,label,f0,f1\n";
        out << "source,0,0,1,0.5,0.25\n";
        out << "source,0,1,1,0.5\n"; // wrong column count
    }
    CHECK_THROWS_WITH_AS(load_source_dataset(bad.path), doctest::Contains(":3"), ParseError);

    TempFile wrong_domain("wrong_domain.csv");
    {
        std::ofstream out(wrong_domain.path);
        out << "domain,scene_id,instance_id,label,f0,f1\n";
        out << "target,0,0,-1,0.5,0.25\n";
    }
    CHECK_THROWS_AS(load_source_dataset(wrong_domain.path), ParseError);

    TempFile empty("empty.csv");
    {
        std::ofstream out(empty.path);
        out << "domain,scene_id,instance_id,label,f0,f1\n";
    }
    CHECK_THROWS_AS(load_source_dataset(empty.path), ParseError);

    CHECK_THROWS_AS(load_source_dataset("/tmp/fbc_does_not_exist.csv"), ParseError);
}

TEST_CASE("saving a scene with no instances is refused") {
    Scene s;
    s.scene_id = 0;
    TempFile out("empty_scene.csv");
    std::vector<Scene> scenes = {s};
    CHECK_THROWS_AS(save_source_dataset(scenes, out.path), ParseError);
}

TEST_CASE("invalid scenario fields raise ConfigError") {
    ScenarioSpec spec = small_spec("nope", 1);
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = small_spec("fog", 1);
    spec.background_fraction = 1.0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = small_spec("fog", 1);
    spec.n_source = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}
