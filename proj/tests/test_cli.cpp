#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>

#include "fbsdelab/cli.hpp"

using namespace fbsde;
namespace fs = std::filesystem;

namespace {

json base_config(const std::string& dir) {
    return json{{"experiment", "simulate-pointproc"},
                {"seed", 99},
                {"horizon", 1.0},
                {"grid_steps", 10},
                {"paths", 200},
                {"output_dir", dir}};
}

struct TempDir {
    fs::path root;
    explicit TempDir(const std::string& tag) {
        root = fs::temp_directory_path() / ("fbsde-cli-test-" + tag);
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~TempDir() { fs::remove_all(root); }
    std::string sub(const std::string& name) const { return (root / name).string(); }
};

}  // namespace

TEST_CASE("config rejects missing or unknown fields") {
    json j = base_config("/tmp/unused");
    j.erase("experiment");
    REQUIRE_THROWS_WITH(RunConfig::from_json(j), Catch::Matchers::ContainsSubstring("experiment"));

    j = base_config("/tmp/unused");
    j["experiment"] = "solve-everything";
    REQUIRE_THROWS_WITH(RunConfig::from_json(j),
                        Catch::Matchers::ContainsSubstring("unknown experiment"));

    j = base_config("/tmp/unused");
    j.erase("seed");
    REQUIRE_THROWS_WITH(RunConfig::from_json(j),
                        Catch::Matchers::ContainsSubstring("no entropy defaults"));

    j = base_config("/tmp/unused");
    j.erase("output_dir");
    REQUIRE_THROWS_WITH(RunConfig::from_json(j), Catch::Matchers::ContainsSubstring("output_dir"));
}

TEST_CASE("config validates numeric ranges") {
    json j = base_config("/tmp/unused");
    j["grid_steps"] = 1;
    REQUIRE_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);

    j = base_config("/tmp/unused");
    j["horizon"] = 0.0;
    REQUIRE_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);

    j = base_config("/tmp/unused");
    j["basis_degree"] = 3;
    REQUIRE_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);

    // a degree-2 basis needs at least 3 paths to regress on
    j = base_config("/tmp/unused");
    j["paths"] = 2;
    j["basis_degree"] = 2;
    REQUIRE_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);

    j = base_config("/tmp/unused");
    j["threads"] = 0;
    REQUIRE_THROWS_AS(RunConfig::from_json(j), std::invalid_argument);
}

TEST_CASE("manifest materializes every default") {
    RunConfig c = RunConfig::from_json(base_config("/tmp/unused"));
    const json out = c.to_json();
    for (const char* key : {"experiment", "seed", "horizon", "grid_steps", "paths",
                            "basis_degree", "eps_init", "eps_min", "picard_tol", "threads",
                            "output_dir", "model"})
        REQUIRE(out.contains(key));
    REQUIRE(out["picard_tol"].get<double>() == 1e-6);
    // a round trip through the manifest reproduces the same config
    RunConfig c2 = RunConfig::from_json(out);
    REQUIRE(c2.to_json() == out);
}

TEST_CASE("run refuses an existing output directory") {
    TempDir tmp("exists");
    fs::create_directories(tmp.sub("out"));
    RunConfig c = RunConfig::from_json(base_config(tmp.sub("out")));
    REQUIRE_THROWS_WITH(run(c), Catch::Matchers::ContainsSubstring("already exists"));
}

TEST_CASE("replay of a recorded run is byte-identical") {
    TempDir tmp("replay");
    RunConfig c = RunConfig::from_json(base_config(tmp.sub("a")));
    RunManifest m = run(c);
    REQUIRE(!m.files.empty());
    REQUIRE(fs::exists(fs::path(tmp.sub("a")) / "manifest.json"));

    ReplayVerdict v = replay(fs::path(tmp.sub("a")) / "manifest.json");
    REQUIRE(v.identical);
    REQUIRE(v.first_diff.empty());
}

TEST_CASE("changing the seed changes the results") {
    TempDir tmp("seed");
    json j = base_config(tmp.sub("a"));
    RunManifest ma = run(RunConfig::from_json(j));
    j["seed"] = 100;
    j["output_dir"] = tmp.sub("b");
    RunManifest mb = run(RunConfig::from_json(j));
    REQUIRE(ma.files.size() == mb.files.size());
    bool differs = false;
    for (const auto& [name, digest] : ma.files) {
        REQUIRE(mb.files.count(name) == 1);
        differs = differs || mb.files.at(name) != digest;
    }
    REQUIRE(differs);
}

TEST_CASE("a corrupted artifact fails replay") {
    TempDir tmp("corrupt");
    RunConfig c = RunConfig::from_json(base_config(tmp.sub("a")));
    RunManifest m = run(c);
    REQUIRE(!m.files.empty());
    // flip a byte in the first recorded result file
    const fs::path victim = fs::path(tmp.sub("a")) / m.files.begin()->first;
    const fs::path manifest = fs::path(tmp.sub("a")) / "manifest.json";
    {
        std::ifstream is(manifest);
        json mj = json::parse(is);
        mj["files"][m.files.begin()->first] = "0000000000000000";
        std::ofstream os(manifest);
        os << mj.dump(2) << '\n';
    }
    ReplayVerdict v = replay(manifest);
    REQUIRE_FALSE(v.identical);
    REQUIRE(v.first_diff == m.files.begin()->first);
}
