#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const std::string kCli = AFN_CLI_PATH;
const std::string kSpecDir = AFN_SPEC_DIR;

int run_cli(const std::string& args) {
    const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "afn_cli_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("allocate subcommand round-trips") {
    const auto dir = fresh_dir("allocate");
    REQUIRE(run_cli("allocate --spec " + kSpecDir + "/two_route.json --state 1,2 --out " +
                    dir.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "result.json"));
    REQUIRE(j["rates"].size() == 2);
    REQUIRE(std::abs(j["rates"][0].get<double>() - 1.0 / 3.0) < 1e-9);
    REQUIRE(std::abs(j["rates"][1].get<double>() - 2.0 / 3.0) < 1e-9);
    REQUIRE(j["kkt_residual"].get<double>() < 1e-9);

    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    REQUIRE(m["command"] == "allocate");
    REQUIRE(m["spec_hash"].get<std::string>().size() == 16);
    REQUIRE(m.contains("wall_clock_ms"));
}

TEST_CASE("missing spec file exits with code 2") {
    const auto dir = fresh_dir("missing");
    REQUIRE(run_cli("allocate --spec /no/such/spec.json --state 1 --out " + dir.string()) == 2);
}

TEST_CASE("randomized subcommands demand a seed") {
    const auto dir = fresh_dir("seedless");
    REQUIRE(run_cli("simulate --spec " + kSpecDir + "/single_route.json --horizon 5 --out " +
                    dir.string()) != 0);
}

TEST_CASE("simulate is byte-deterministic given the seed") {
    const auto a = fresh_dir("sim_a");
    const auto b = fresh_dir("sim_b");
    const std::string base =
        "simulate --spec " + kSpecDir + "/single_route.json --horizon 50 --seed 42 --out ";
    REQUIRE(run_cli(base + a.string()) == 0);
    REQUIRE(run_cli(base + b.string()) == 0);
    REQUIRE(slurp(a / "trace.csv") == slurp(b / "trace.csv"));
    REQUIRE(slurp(a / "result.json") == slurp(b / "result.json"));

    // Trace CSV re-parses under the documented schema.
    std::istringstream csv(slurp(a / "trace.csv"));
    std::string header;
    std::getline(csv, header);
    REQUIRE(header == "t,i_changed,delta,n_1");
}

TEST_CASE("tail-check is byte-identical across worker counts") {
    const auto w1 = fresh_dir("tail_w1");
    const auto w8 = fresh_dir("tail_w8");
    const std::string base = "tail-check --spec " + kSpecDir +
                             "/single_route.json --cap 60 --lmax 4 --workers ";
    REQUIRE(run_cli(base + "1 --out " + w1.string()) == 0);
    REQUIRE(run_cli(base + "8 --out " + w8.string()) == 0);
    REQUIRE(slurp(w1 / "tail_check.csv") == slurp(w8 / "tail_check.csv"));
    REQUIRE(slurp(w1 / "result.json") == slurp(w8 / "result.json"));

    const auto j = nlohmann::json::parse(slurp(w1 / "result.json"));
    REQUIRE(j["all_dominated"].get<bool>());
    REQUIRE(j["rows"].size() == 5);
}

TEST_CASE("heavy-traffic is byte-identical across worker counts") {
    const auto w1 = fresh_dir("ht_w1");
    const auto w8 = fresh_dir("ht_w8");
    const std::string base = "heavy-traffic --spec " + kSpecDir +
                             "/critical_two_route.json --theta 1 --direction 0.5,0.5 "
                             "--r-list 5,8 --budget 20000 --seed 7 --ssc-replicas 2 --workers ";
    REQUIRE(run_cli(base + "1 --out " + w1.string()) == 0);
    REQUIRE(run_cli(base + "8 --out " + w8.string()) == 0);
    REQUIRE(slurp(w1 / "heavy_traffic.json") == slurp(w8 / "heavy_traffic.json"));
    REQUIRE(slurp(w1 / "heavy_traffic.csv") == slurp(w8 / "heavy_traffic.csv"));

    const auto j = nlohmann::json::parse(slurp(w1 / "heavy_traffic.json"));
    REQUIRE(j["per_r"].size() == 2);
    REQUIRE(j["srbm"]["Gamma"][0][0].get<double>() == 2.0);
    REQUIRE(std::abs(std::abs(j["srbm"]["v"][0].get<double>()) - 1.0) < 1e-9);
}

TEST_CASE("constants subcommand emits the pinned schema") {
    const auto dir = fresh_dir("constants");
    REQUIRE(run_cli("constants --spec " + kSpecDir + "/single_route.json --out " +
                    dir.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "constants.json"));
    for (const char* key : {"eps", "Xi", "w", "K", "xi", "B", "m", "M", "Ktilde",
                            "probe_set_hash"})
        REQUIRE(j.contains(key));
    REQUIRE(std::abs(j["eps"].get<double>() - 0.25) < 1e-12);
    REQUIRE(std::abs(j["Xi"].get<double>() - 1.8) < 1e-12);
}

TEST_CASE("fluid subcommand writes the trajectory schema") {
    const auto dir = fresh_dir("fluid");
    REQUIRE(run_cli("fluid --spec " + kSpecDir + "/critical_two_route.json --n0 2,0.5 "
                    "--horizon 1 --dt 0.01 --out " + dir.string()) == 0);
    std::istringstream csv(slurp(dir / "fluid.csv"));
    std::string header;
    std::getline(csv, header);
    REQUIRE(header == "t,n_1,n_2,F,manifold_distance");
    int rows = 0;
    std::string line;
    while (std::getline(csv, line)) ++rows;
    REQUIRE(rows == 101);
}

TEST_CASE("lift subcommand") {
    const auto dir = fresh_dir("lift");
    REQUIRE(run_cli("lift --spec " + kSpecDir + "/critical_two_route.json --workload 1 --out " +
                    dir.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "result.json"));
    REQUIRE(std::abs(j["n"][0].get<double>() - 0.5) < 1e-9);
    REQUIRE(std::abs(j["n"][1].get<double>() - 0.5) < 1e-9);
}

TEST_CASE("stationary monte carlo path") {
    const auto dir = fresh_dir("stationary_mc");
    REQUIRE(run_cli("stationary --spec " + kSpecDir + "/single_route.json --steps 20000 "
                    "--burn-in 1000 --seed 5 --out " + dir.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "result.json"));
    REQUIRE(j["method"] == "monte-carlo");
    std::istringstream csv(slurp(dir / "stationary.csv"));
    std::string header;
    std::getline(csv, header);
    REQUIRE(header == "n_1,prob");
}

TEST_CASE("excursion-check dominates on the single route") {
    const auto dir = fresh_dir("excursion");
    REQUIRE(run_cli("excursion-check --spec " + kSpecDir + "/single_route.json --horizon 20 "
                    "--b-grid 8,12 --replicas 300 --seed 3 --out " + dir.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "result.json"));
    REQUIRE(j["all_dominated"].get<bool>());
}

TEST_CASE("drift-scan subcommand round-trips") {
    const auto dir = fresh_dir("drift_scan");
    REQUIRE(run_cli("drift-scan --spec " + kSpecDir + "/two_route.json --workers 4 --out " +
                    dir.string()) == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "result.json"));
    REQUIRE(j["all_below"].get<bool>());
    REQUIRE(j["num_probes"].get<int>() > 0);
    REQUIRE(j["probe_set_hash"].get<std::string>().size() == 16);
    std::istringstream csv(slurp(dir / "drift_scan.csv"));
    std::string header;
    std::getline(csv, header);
    REQUIRE(header == "n_1,n_2,L,drift,target");
}
