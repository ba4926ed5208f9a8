// Command-line front end: loads network specs, dispatches experiments, and
// writes machine-readable results plus a run manifest.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "afn/fluid.hpp"
#include "afn/heavy_traffic.hpp"
#include "afn/io.hpp"
#include "afn/lyapunov.hpp"
#include "afn/network.hpp"
#include "afn/simulator.hpp"

namespace fs = std::filesystem;
using namespace afn;

namespace {

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(std::strtod(item.c_str(), nullptr));
    }
    return out;
}

Vec parse_vec(const std::string& csv) {
    const auto list = parse_list(csv);
    Vec v(static_cast<Eigen::Index>(list.size()));
    for (std::size_t k = 0; k < list.size(); ++k) v[static_cast<Eigen::Index>(k)] = list[k];
    return v;
}

IVec parse_ivec(const std::string& csv) {
    const auto list = parse_list(csv);
    IVec v(static_cast<Eigen::Index>(list.size()));
    for (std::size_t k = 0; k < list.size(); ++k)
        v[static_cast<Eigen::Index>(k)] = static_cast<std::int64_t>(std::llround(list[k]));
    return v;
}

int resolve_workers(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("AFN_WORKERS")) {
        const int w = std::atoi(env);
        if (w > 0) return w;
    }
    return 1;
}

class Run {
public:
    Run(std::string command, std::string out_dir)
        : command_(std::move(command)),
          out_dir_(std::move(out_dir)),
          start_(std::chrono::steady_clock::now()) {
        fs::create_directories(out_dir_);
    }

    void set_config(Json config) { config_ = std::move(config); }
    void set_spec_hash(std::string hash) { spec_hash_ = std::move(hash); }
    void set_seed(std::uint64_t seed) { seed_ = seed; }

    std::string path(const std::string& name) const {
        return (fs::path(out_dir_) / name).string();
    }

    void write_text(const std::string& name, const std::string& content) {
        std::ofstream out(path(name), std::ios::binary);
        out << content;
        outputs_.push_back(name);
    }

    void write_json(const std::string& name, const Json& j) { write_text(name, j.dump(2) + "\n"); }

    /// Every run emits exactly one manifest; the wall clock is the only
    /// nondeterministic field.
    void finish() {
        Json m;
        m["command"] = command_;
        m["version"] = kVersion;
        m["config"] = config_;
        m["spec_hash"] = spec_hash_;
        if (seed_) m["seed"] = *seed_;
        m["outputs"] = outputs_;
        const auto elapsed = std::chrono::steady_clock::now() - start_;
        m["wall_clock_ms"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
        std::ofstream out(path("manifest.json"), std::ios::binary);
        out << m.dump(2) << "\n";
    }

private:
    std::string command_;
    std::string out_dir_;
    Json config_ = Json::object();
    std::string spec_hash_;
    std::optional<std::uint64_t> seed_;
    std::vector<std::string> outputs_;
    std::chrono::steady_clock::time_point start_;
};

Json constants_json(const BoundConstants& c) {
    Json j;
    j["eps"] = jnum(c.eps);
    j["Xi"] = jnum(c.Xi);
    j["w"] = jvec(c.w);
    j["K"] = jnum(c.K);
    j["xi"] = jnum(c.xi);
    j["B"] = jnum(c.B);
    j["m"] = jnum(c.m);
    j["M"] = jnum(c.M);
    j["Ktilde"] = jnum(c.Ktilde);
    j["probe_set_hash"] = to_hex(c.probe_set_hash);
    return j;
}

Json srbm_json(const SrbmData& s) {
    Json j;
    j["Gamma"] = jmat(s.Gamma);
    j["v"] = jvec(s.v);
    j["cone_generators"] = jmat(s.cone_generators);
    j["drift_sign_flipped"] = s.drift_sign_flipped;
    j["normalization"] = jnum(s.normalization);
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"alpha-fair bandwidth-sharing network laboratory"};
    app.require_subcommand(1);

    std::string spec_path, out_dir = ".", state_csv, n0_csv, theta_csv, direction_csv,
                workload_csv, b_grid_csv = "10,20,50", r_list_csv = "5,10,20,50",
                quantiles_csv = "0.5,0.9,0.99";
    std::uint64_t seed = 0;
    double horizon = 100.0, dt = 0.0, ssc_horizon = 1.0;
    int cap = -1, lmax = 10, workers_flag = 0, ssc_replicas = 4;
    std::int64_t steps = 0, burn_in = 0, replicas = 10000, budget = 1000000;
    std::int64_t state_cap = 1000000;

    auto add_common = [&](CLI::App* sub, bool needs_seed) {
        sub->add_option("--spec", spec_path, "network spec JSON file")->required();
        sub->add_option("--out", out_dir, "output directory (default: .)");
        sub->add_option("--workers", workers_flag,
                        "worker threads (default: AFN_WORKERS or 1)");
        if (needs_seed) sub->add_option("--seed", seed, "RNG seed")->required();
    };

    auto* cmd_allocate = app.add_subcommand("allocate", "solve the allocation at one state");
    add_common(cmd_allocate, false);
    cmd_allocate->add_option("--state", state_csv, "flow counts, comma separated")->required();

    auto* cmd_simulate = app.add_subcommand("simulate", "simulate the flow CTMC");
    add_common(cmd_simulate, true);
    cmd_simulate->add_option("--horizon", horizon, "time horizon")->required();
    cmd_simulate->add_option("--initial", state_csv, "initial state (default: 0)");
    cmd_simulate->add_option("--state-cap", state_cap, "per-coordinate runaway guard");

    auto* cmd_stationary =
        app.add_subcommand("stationary", "stationary law (exact truncated or Monte Carlo)");
    cmd_stationary->add_option("--spec", spec_path, "network spec JSON file")->required();
    cmd_stationary->add_option("--out", out_dir, "output directory (default: .)");
    cmd_stationary->add_option("--workers", workers_flag,
                               "worker threads (default: AFN_WORKERS or 1)");
    cmd_stationary->add_option("--cap", cap, "box truncation for the exact solve");
    cmd_stationary->add_option("--steps", steps, "uniformized steps for the Monte Carlo path");
    cmd_stationary->add_option("--burn-in", burn_in, "steps discarded before counting");
    cmd_stationary->add_option("--seed", seed, "RNG seed (required with --steps)");

    auto* cmd_constants = app.add_subcommand("constants", "bound constants report");
    add_common(cmd_constants, false);

    auto* cmd_drift = app.add_subcommand("drift-scan", "drift at the certified probe shells");
    add_common(cmd_drift, false);

    auto* cmd_tail = app.add_subcommand("tail-check", "tail bound vs exact stationary tail");
    add_common(cmd_tail, false);
    cmd_tail->add_option("--cap", cap, "box truncation for the oracle")->required();
    cmd_tail->add_option("--lmax", lmax, "largest tail level");

    auto* cmd_excursion =
        app.add_subcommand("excursion-check", "maximal-excursion bound vs Monte Carlo");
    add_common(cmd_excursion, true);
    cmd_excursion->add_option("--horizon", horizon, "time horizon")->required();
    cmd_excursion->add_option("--b-grid", b_grid_csv, "excursion levels, comma separated");
    cmd_excursion->add_option("--replicas", replicas, "Monte Carlo replicas");

    auto* cmd_fluid = app.add_subcommand("fluid", "integrate the fluid model");
    add_common(cmd_fluid, false);
    cmd_fluid->add_option("--n0", n0_csv, "initial fluid state")->required();
    cmd_fluid->add_option("--horizon", horizon, "integration horizon")->required();
    cmd_fluid->add_option("--dt", dt, "Euler step (default: spec-derived)");

    auto* cmd_lift = app.add_subcommand("lift", "lifting map of a workload vector");
    add_common(cmd_lift, false);
    cmd_lift->add_option("--workload", workload_csv, "workload vector")->required();

    auto* cmd_ht =
        app.add_subcommand("heavy-traffic", "interchange, SSC, and tightness experiment");
    add_common(cmd_ht, true);
    cmd_ht->add_option("--theta", theta_csv, "heavy-traffic drift vector")->required();
    cmd_ht->add_option("--direction", direction_csv, "direction d with A d = theta");
    cmd_ht->add_option("--r-list", r_list_csv, "member indices, comma separated");
    cmd_ht->add_option("--budget", budget, "Monte Carlo steps per member");
    cmd_ht->add_option("--quantiles", quantiles_csv, "tightness quantiles");
    cmd_ht->add_option("--ssc-replicas", ssc_replicas, "replicas per SSC point");
    cmd_ht->add_option("--ssc-horizon", ssc_horizon, "scaled SSC horizon");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    const int workers = resolve_workers(workers_flag);
    try {
        if (cmd_allocate->parsed()) {
            Run run("allocate", out_dir);
            auto loaded = load_spec_file(spec_path);
            run.set_spec_hash(loaded.hash);
            run.set_config({{"spec", spec_path}, {"state", state_csv}, {"workers", workers}});
            const Vec n = parse_vec(state_csv);
            const Allocation alloc = allocate(loaded.spec, n);
            Json j;
            j["rates"] = jvec(alloc.rates);
            j["dual_prices"] = jvec(alloc.dual_prices);
            j["kkt_residual"] = jnum(alloc.kkt_residual);
            run.write_json("result.json", j);
            std::cout << j.dump(2) << "\n";
            run.finish();
        } else if (cmd_simulate->parsed()) {
            Run run("simulate", out_dir);
            auto loaded = load_spec_file(spec_path);
            run.set_spec_hash(loaded.hash);
            run.set_seed(seed);
            run.set_config({{"spec", spec_path},
                            {"horizon", horizon},
                            {"initial", state_csv},
                            {"state_cap", state_cap},
                            {"seed", seed},
                            {"workers", workers}});
            IVec initial = state_csv.empty() ? IVec::Zero(loaded.spec.num_routes()).eval()
                                             : parse_ivec(state_csv);
            SimOptions opt;
            opt.state_cap = state_cap;
            const Trace tr = simulate_ctmc(loaded.spec, FlowState{initial}, horizon, seed, opt);
            std::ostringstream csv;
            write_trace_csv(csv, tr);
            run.write_text("trace.csv", csv.str());
            Json j;
            j["events"] = tr.times.size() - 1;
            j["max_excursion"] = jnum(max_excursion(tr));
            run.write_json("result.json", j);
            std::cout << j.dump(2) << "\n";
            run.finish();
        } else if (cmd_stationary->parsed()) {
            Run run("stationary", out_dir);
            auto loaded = load_spec_file(spec_path);
            run.set_spec_hash(loaded.hash);
            StationaryEstimate est;
            if (cap >= 0) {
                run.set_config({{"spec", spec_path}, {"cap", cap}, {"workers", workers}});
                est = exact_stationary(loaded.spec, cap);
            } else {
                if (steps <= 0)
                    throw PreconditionViolation("stationary needs --cap or --steps");
                run.set_seed(seed);
                run.set_config({{"spec", spec_path},
                                {"steps", steps},
                                {"burn_in", burn_in},
                                {"seed", seed},
                                {"workers", workers}});
                est = estimate_stationary(loaded.spec, burn_in, steps, seed);
            }
            std::ostringstream csv;
            write_stationary_csv(csv, est);
            run.write_text("stationary.csv", csv.str());
            Json j;
            j["method"] = est.method == StationaryEstimate::Method::kExactTruncated
                              ? "exact-truncated"
                              : "monte-carlo";
            j["truncation_or_samples"] = est.truncation_or_samples;
            j["support_size"] = est.support.size();
            run.write_json("result.json", j);
            std::cout << j.dump(2) << "\n";
            run.finish();
        } else if (cmd_constants->parsed()) {
            Run run("constants", out_dir);
            auto loaded = load_spec_file(spec_path);
            run.set_spec_hash(loaded.hash);
            run.set_config({{"spec", spec_path}, {"workers", workers}});
            const BoundConstants c = compute_constants(loaded.spec, workers);
            run.write_json("constants.json", constants_json(c));
            std::cout << constants_json(c).dump(2) << "\n";
            run.finish();
        } else if (cmd_drift->parsed()) {
            Run run("drift-scan", out_dir);
            auto loaded = load_spec_file(spec_path);
            run.set_spec_hash(loaded.hash);
            run.set_config({{"spec", spec_path}, {"workers", workers}});
            const BoundConstants c = compute_constants(loaded.spec, workers);
            const double target = -c.eps * c.K / 2.0;
            std::vector<double> drifts(c.probe_set.size());
            detail::parallel_for(workers, static_cast<std::int64_t>(c.probe_set.size()),
                                 [&](std::int64_t k) {
                                     drifts[static_cast<std::size_t>(k)] = expected_drift_L(
                                         loaded.spec,
                                         c.probe_set[static_cast<std::size_t>(k)].cast<double>());
                                 });
            std::ostringstream csv;
            for (Eigen::Index i = 0; i < loaded.spec.num_routes(); ++i)
                csv << "n_" << (i + 1) << ',';
            csv << "L,drift,target\n";
            bool all_below = true;
            for (std::size_t k = 0; k < c.probe_set.size(); ++k) {
                for (Eigen::Index i = 0; i < loaded.spec.num_routes(); ++i)
                    csv << c.probe_set[k][i] << ',';
                csv << format12(L_alpha(loaded.spec, c.probe_set[k].cast<double>())) << ','
                    << format12(drifts[k]) << ',' << format12(target) << "\n";
                all_below = all_below && drifts[k] <= target;
            }
            run.write_text("drift_scan.csv", csv.str());
            Json j;
            j["B"] = jnum(c.B);
            j["target"] = jnum(target);
            j["num_probes"] = c.probe_set.size();
            j["probe_set_hash"] = to_hex(c.probe_set_hash);
            j["all_below"] = all_below;
            run.write_json("result.json", j);
            std::cout << j.dump(2) << "\n";
            run.finish();
        } else if (cmd_tail->parsed()) {
            Run run("tail-check", out_dir);
            auto loaded = load_spec_file(spec_path);
            run.set_spec_hash(loaded.hash);
            run.set_config({{"spec", spec_path},
                            {"cap", cap},
                            {"lmax", lmax},
                            {"workers", workers}});
            const BoundConstants c = compute_constants(loaded.spec, workers);
            const StationaryEstimate pi = exact_stationary(loaded.spec, cap);
            std::ostringstream csv;
            csv << "level,threshold,bound,exact_tail,dominated\n";
            Json rows = Json::array();
            bool all = true;
            for (int level = 0; level <= lmax; ++level) {
                const TailBound tb = tail_bound(c, level);
                double tail = 0.0;
                for (std::size_t k = 0; k < pi.support.size(); ++k)
                    if (static_cast<double>(pi.support[k].maxCoeff()) >= tb.threshold)
                        tail += pi.probabilities[k];
                const bool dominated = tail <= tb.bound;
                all = all && dominated;
                csv << level << ',' << format12(tb.threshold) << ',' << format12(tb.bound)
                    << ',' << format12(tail) << ',' << (dominated ? "true" : "false") << "\n";
                rows.push_back({{"level", level},
                                {"threshold", jnum(tb.threshold)},
                                {"bound", jnum(tb.bound)},
                                {"exact_tail", jnum(tail)},
                                {"dominated", dominated}});
            }
            run.write_text("tail_check.csv", csv.str());
            Json j;
            j["constants"] = constants_json(c);
            j["rows"] = rows;
            j["all_dominated"] = all;
            run.write_json("result.json", j);
            std::cout << j.dump(2) << "\n";
            run.finish();
        } else if (cmd_excursion->parsed()) {
            Run run("excursion-check", out_dir);
            auto loaded = load_spec_file(spec_path);
            run.set_spec_hash(loaded.hash);
            run.set_seed(seed);
            run.set_config({{"spec", spec_path},
                            {"horizon", horizon},
                            {"b_grid", b_grid_csv},
                            {"replicas", replicas},
                            {"seed", seed},
                            {"workers", workers}});
            const BoundConstants c = compute_constants(loaded.spec, workers);
            const auto b_grid = parse_list(b_grid_csv);
            const Vec empirical =
                excursion_probabilities(loaded.spec, horizon, b_grid, replicas, seed, workers);
            std::ostringstream csv;
            csv << "b,empirical,bound,dominated\n";
            Json rows = Json::array();
            bool all = true;
            for (std::size_t k = 0; k < b_grid.size(); ++k) {
                const double bound = maximal_bound(loaded.spec, c, horizon, b_grid[k]);
                const double emp = empirical[static_cast<Eigen::Index>(k)];
                const bool dominated = emp <= bound;
                all = all && dominated;
                csv << format12(b_grid[k]) << ',' << format12(emp) << ',' << format12(bound)
                    << ',' << (dominated ? "true" : "false") << "\n";
                rows.push_back({{"b", jnum(b_grid[k])},
                                {"empirical", jnum(emp)},
                                {"bound", jnum(bound)},
                                {"dominated", dominated}});
            }
            run.write_text("excursion.csv", csv.str());
            Json j;
            j["rows"] = rows;
            j["all_dominated"] = all;
            run.write_json("result.json", j);
            std::cout << j.dump(2) << "\n";
            run.finish();
        } else if (cmd_fluid->parsed()) {
            Run run("fluid", out_dir);
            auto loaded = load_spec_file(spec_path);
            run.set_spec_hash(loaded.hash);
            run.set_config({{"spec", spec_path},
                            {"n0", n0_csv},
                            {"horizon", horizon},
                            {"dt", dt},
                            {"workers", workers}});
            const FluidTrajectory traj =
                fms_integrate(loaded.spec, parse_vec(n0_csv), horizon, dt);
            std::vector<double> dist(traj.states.size());
            Vec warm;
            LiftOptions opt;
            for (std::size_t k = 0; k < traj.states.size(); ++k) {
                if (warm.size() == loaded.spec.num_resources()) opt.warm_prices = &warm;
                const Vec w = loaded.spec.incidence() *
                              traj.states[k].cwiseQuotient(loaded.spec.mu());
                const LiftResult lifted = lift(loaded.spec, w, opt);
                warm = lifted.dual_prices;
                dist[k] = (traj.states[k] - lifted.n).cwiseAbs().maxCoeff();
            }
            std::ostringstream csv;
            write_fluid_csv(csv, traj, dist);
            run.write_text("fluid.csv", csv.str());
            Json j;
            j["samples"] = traj.times.size();
            j["step_warning"] = traj.step_warning;
            j["max_richardson_dev"] = jnum(traj.max_richardson_dev);
            j["final_state"] = jvec(traj.states.back());
            j["final_manifold_distance"] = jnum(dist.back());
            run.write_json("result.json", j);
            std::cout << j.dump(2) << "\n";
            run.finish();
        } else if (cmd_lift->parsed()) {
            Run run("lift", out_dir);
            auto loaded = load_spec_file(spec_path);
            run.set_spec_hash(loaded.hash);
            run.set_config(
                {{"spec", spec_path}, {"workload", workload_csv}, {"workers", workers}});
            const LiftResult lifted = lift(loaded.spec, parse_vec(workload_csv));
            Json j;
            j["n"] = jvec(lifted.n);
            j["dual_prices"] = jvec(lifted.dual_prices);
            j["kkt_residual"] = jnum(lifted.kkt_residual);
            run.write_json("result.json", j);
            std::cout << j.dump(2) << "\n";
            run.finish();
        } else if (cmd_ht->parsed()) {
            Run run("heavy-traffic", out_dir);
            auto loaded = load_spec_file(spec_path);
            run.set_spec_hash(loaded.hash);
            run.set_seed(seed);
            run.set_config({{"spec", spec_path},
                            {"theta", theta_csv},
                            {"direction", direction_csv},
                            {"r_list", r_list_csv},
                            {"budget", budget},
                            {"quantiles", quantiles_csv},
                            {"ssc_replicas", ssc_replicas},
                            {"ssc_horizon", ssc_horizon},
                            {"seed", seed},
                            {"workers", workers}});
            std::optional<Vec> direction;
            if (!direction_csv.empty()) direction = parse_vec(direction_csv);
            auto family = HeavyTrafficFamily::make(loaded.spec, parse_vec(theta_csv), direction);
            HeavyTrafficOptions opt;
            opt.per_r_budget = budget;
            opt.seed = seed;
            opt.quantiles = parse_list(quantiles_csv);
            opt.ssc_replicas = ssc_replicas;
            opt.ssc_horizon = ssc_horizon;
            opt.workers = workers;
            const auto r_list = parse_list(r_list_csv);
            const HeavyTrafficReport report = heavy_traffic_report(family, r_list, opt);

            Json j;
            j["srbm"] = srbm_json(report.srbm);
            Json rows = Json::array();
            for (const auto& row : report.rows) {
                Json rj;
                rj["r"] = jnum(row.r);
                rj["gap"] = jnum(row.gap);
                rj["method"] = row.method;
                rj["ks_per_link"] = jvec(row.ks_per_link);
                rj["flow_ks"] = jvec(row.flow_ks);
                rj["ssc_abs"] = jnum(row.ssc_abs);
                rj["ssc_mult"] = jnum(row.ssc_mult);
                rj["quantiles"] = jvec(row.quantiles);
                rows.push_back(rj);
            }
            j["per_r"] = rows;
            run.write_json("heavy_traffic.json", j);

            std::ostringstream csv;
            const Eigen::Index links = report.rows.empty() ? 0 : report.rows[0].ks_per_link.size();
            const Eigen::Index routes = report.rows.empty() ? 0 : report.rows[0].flow_ks.size();
            const Eigen::Index nq = report.rows.empty() ? 0 : report.rows[0].quantiles.size();
            csv << "r,gap,method";
            for (Eigen::Index l = 0; l < links; ++l) csv << ",ks_link_" << (l + 1);
            for (Eigen::Index i = 0; i < routes; ++i) csv << ",flow_ks_" << (i + 1);
            csv << ",ssc_abs,ssc_mult";
            for (Eigen::Index q = 0; q < nq; ++q) csv << ",q_" << (q + 1);
            csv << "\n";
            for (const auto& row : report.rows) {
                csv << format12(row.r) << ',' << format12(row.gap) << ',' << row.method;
                for (Eigen::Index l = 0; l < links; ++l)
                    csv << ',' << format12(row.ks_per_link[l]);
                for (Eigen::Index i = 0; i < routes; ++i) csv << ',' << format12(row.flow_ks[i]);
                csv << ',' << format12(row.ssc_abs) << ',' << format12(row.ssc_mult);
                for (Eigen::Index q = 0; q < nq; ++q) csv << ',' << format12(row.quantiles[q]);
                csv << "\n";
            }
            run.write_text("heavy_traffic.csv", csv.str());
            std::cout << j["srbm"].dump(2) << "\n";
            run.finish();
        }
    } catch (const InvalidSpec& e) {
        std::cerr << "error: " << e.what() << "\n";
        const std::string msg = e.what();
        return msg.find("cannot open spec file") != std::string::npos ? 2 : 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
