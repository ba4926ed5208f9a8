#pragma once

#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "afn/common.hpp"
#include "afn/fluid.hpp"
#include "afn/network.hpp"
#include "afn/simulator.hpp"

namespace afn {

using Json = nlohmann::json;

/// Number for JSON/CSV output: rounded through 12 significant digits so that
/// reruns produce stable bytes.
inline Json jnum(double x) { return round12(x); }

inline Json jvec(const Vec& v) {
    Json arr = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(jnum(v[i]));
    return arr;
}

inline Json jmat(const Mat& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(jnum(m(r, c)));
        rows.push_back(row);
    }
    return rows;
}

/// Parses the network spec object: keys `incidence`, `capacity`, `kappa`,
/// `alpha`, `nu`, `mu`. Validation happens in NetworkSpec::validate.
inline NetworkSpec parse_spec_json(const Json& j) {
    auto get_vec = [&](const char* key) {
        if (!j.contains(key) || !j[key].is_array())
            throw InvalidSpec(std::string("spec is missing array field '") + key + "'");
        Vec v(static_cast<Eigen::Index>(j[key].size()));
        Eigen::Index k = 0;
        for (const auto& x : j[key]) v[k++] = x.get<double>();
        return v;
    };
    if (!j.contains("incidence") || !j["incidence"].is_array() || j["incidence"].empty())
        throw InvalidSpec("spec is missing the incidence matrix");
    const auto& rows = j["incidence"];
    Mat a(static_cast<Eigen::Index>(rows.size()),
          static_cast<Eigen::Index>(rows[0].size()));
    for (Eigen::Index r = 0; r < a.rows(); ++r) {
        if (static_cast<Eigen::Index>(rows[r].size()) != a.cols())
            throw InvalidSpec("incidence rows have inconsistent lengths");
        for (Eigen::Index c = 0; c < a.cols(); ++c) a(r, c) = rows[r][c].get<double>();
    }
    if (!j.contains("alpha")) throw InvalidSpec("spec is missing 'alpha'");
    return NetworkSpec::validate(a, get_vec("capacity"), get_vec("kappa"),
                                 j["alpha"].get<double>(), get_vec("nu"), get_vec("mu"));
}

struct LoadedSpec {
    NetworkSpec spec;
    std::string hash;  // FNV-1a of the file bytes
};

inline LoadedSpec load_spec_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidSpec("cannot open spec file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string bytes = buf.str();
    Json j;
    try {
        j = Json::parse(bytes);
    } catch (const Json::parse_error& e) {
        throw InvalidSpec("spec file " + path + " is not valid JSON: " + e.what());
    }
    return LoadedSpec{parse_spec_json(j), to_hex(fnv1a64(bytes))};
}

inline Json spec_to_json(const NetworkSpec& spec) {
    Json j;
    j["incidence"] = jmat(spec.incidence());
    j["capacity"] = jvec(spec.capacity());
    j["kappa"] = jvec(spec.kappa());
    j["alpha"] = jnum(spec.alpha());
    j["nu"] = jvec(spec.nu());
    j["mu"] = jvec(spec.mu());
    return j;
}

/// Trace CSV: t, index of the changed coordinate (-1 for the initial row and
/// recorded self-loops), the +-1 increment, then the state vector.
inline void write_trace_csv(std::ostream& os, const Trace& tr) {
    const Eigen::Index dims = tr.states.empty() ? 0 : tr.states[0].size();
    os << "t,i_changed,delta";
    for (Eigen::Index i = 0; i < dims; ++i) os << ",n_" << (i + 1);
    os << "\n";
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
        int changed = -1;
        double delta = 0.0;
        if (k > 0) {
            const Vec diff = tr.states[k] - tr.states[k - 1];
            for (Eigen::Index i = 0; i < dims; ++i)
                if (diff[i] != 0.0) {
                    changed = static_cast<int>(i);
                    delta = diff[i];
                }
        }
        os << format12(tr.times[k]) << ',' << changed << ',' << format12(delta);
        for (Eigen::Index i = 0; i < dims; ++i) os << ',' << format12(tr.states[k][i]);
        os << "\n";
    }
}

/// Stationary law CSV: state coordinates then the probability.
inline void write_stationary_csv(std::ostream& os, const StationaryEstimate& est) {
    const Eigen::Index dims = est.support.empty() ? 0 : est.support[0].size();
    for (Eigen::Index i = 0; i < dims; ++i) os << "n_" << (i + 1) << ',';
    os << "prob\n";
    for (std::size_t k = 0; k < est.support.size(); ++k) {
        for (Eigen::Index i = 0; i < dims; ++i) os << est.support[k][i] << ',';
        os << format12(est.probabilities[k]) << "\n";
    }
}

/// Fluid trajectory CSV with the per-sample manifold distance supplied by the
/// caller (it requires lift solves).
inline void write_fluid_csv(std::ostream& os, const FluidTrajectory& traj,
                            const std::vector<double>& manifold_dist) {
    const Eigen::Index dims = traj.states.empty() ? 0 : traj.states[0].size();
    os << "t";
    for (Eigen::Index i = 0; i < dims; ++i) os << ",n_" << (i + 1);
    os << ",F,manifold_distance\n";
    for (std::size_t k = 0; k < traj.times.size(); ++k) {
        os << format12(traj.times[k]);
        for (Eigen::Index i = 0; i < dims; ++i) os << ',' << format12(traj.states[k][i]);
        os << ',' << format12(traj.lyapunov_values[k]) << ','
           << format12(manifold_dist[k]) << "\n";
    }
}

}  // namespace afn
