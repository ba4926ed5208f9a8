#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "afn/common.hpp"

namespace afn {

/// A validated network instance: incidence matrix A (|J| x |I|, 0/1 with
/// A(j,i)=1 iff resource j is on route i), capacities C, route weights kappa,
/// fairness parameter alpha, and traffic rates nu (arrivals) and mu (service).
///
/// Instances are immutable after construction and only constructed through
/// validate(), which enforces: every route uses at least one resource, A has
/// full row rank, and all parameter vectors are strictly positive.
class NetworkSpec {
public:
    static NetworkSpec validate(Mat incidence, Vec capacity, Vec kappa, double alpha,
                                Vec nu, Vec mu) {
        const auto J = incidence.rows();
        const auto I = incidence.cols();
        if (J == 0 || I == 0) throw InvalidSpec("incidence matrix must be nonempty");
        if (capacity.size() != J) throw InvalidSpec("capacity length must equal |J|");
        if (kappa.size() != I || nu.size() != I || mu.size() != I)
            throw InvalidSpec("kappa, nu, mu must have length |I|");
        for (Eigen::Index j = 0; j < J; ++j)
            for (Eigen::Index i = 0; i < I; ++i) {
                const double a = incidence(j, i);
                if (a != 0.0 && a != 1.0) throw InvalidSpec("incidence entries must be 0 or 1");
            }
        for (Eigen::Index i = 0; i < I; ++i)
            if (incidence.col(i).sum() < 1.0)
                throw InvalidSpec("route " + std::to_string(i) + " uses no resource");
        if (!(alpha > 0.0)) throw InvalidSpec("alpha must be positive");
        auto check_positive = [](const Vec& v, const char* name) {
            for (Eigen::Index k = 0; k < v.size(); ++k)
                if (!(v[k] > 0.0) || !std::isfinite(v[k]))
                    throw InvalidSpec(std::string(name) + " must be strictly positive");
        };
        check_positive(capacity, "capacity");
        check_positive(kappa, "kappa");
        check_positive(nu, "nu");
        check_positive(mu, "mu");
        if (row_rank(incidence) != J)
            throw InvalidSpec("incidence matrix must have full row rank");
        return NetworkSpec(std::move(incidence), std::move(capacity), std::move(kappa),
                           alpha, std::move(nu), std::move(mu));
    }

    const Mat& incidence() const { return incidence_; }
    const Vec& capacity() const { return capacity_; }
    const Vec& kappa() const { return kappa_; }
    double alpha() const { return alpha_; }
    const Vec& nu() const { return nu_; }
    const Vec& mu() const { return mu_; }

    Eigen::Index num_resources() const { return incidence_.rows(); }
    Eigen::Index num_routes() const { return incidence_.cols(); }

private:
    NetworkSpec(Mat incidence, Vec capacity, Vec kappa, double alpha, Vec nu, Vec mu)
        : incidence_(std::move(incidence)),
          capacity_(std::move(capacity)),
          kappa_(std::move(kappa)),
          alpha_(alpha),
          nu_(std::move(nu)),
          mu_(std::move(mu)) {}

    // Pivoted elimination; tolerance relative to the largest pivot. A is a
    // small 0/1 matrix, so this is exact at desk scale.
    static Eigen::Index row_rank(const Mat& a) {
        Eigen::FullPivLU<Mat> lu(a);
        lu.setThreshold(1e-10);
        return lu.rank();
    }

    Mat incidence_;
    Vec capacity_;
    Vec kappa_;
    double alpha_;
    Vec nu_;
    Vec mu_;
};

/// Per-route work rates rho = nu/mu, link loads A*rho, and the gap.
struct LoadProfile {
    Vec rho;
    Vec link_load;
    double gap = 0.0;
};

/// Computes rho, A*rho and the gap min_j C_j/(A rho)_j - 1, which realizes
/// sup{e > 0 : (1+e) A rho <= C}. Throws NotUnderloaded when some link load
/// reaches capacity.
inline LoadProfile load_profile(const NetworkSpec& spec) {
    LoadProfile lp;
    lp.rho = spec.nu().cwiseQuotient(spec.mu());
    lp.link_load = spec.incidence() * lp.rho;
    double gap = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < spec.num_resources(); ++j) {
        if (lp.link_load[j] >= spec.capacity()[j])
            throw NotUnderloaded("link " + std::to_string(j) + " load " +
                                 format12(lp.link_load[j]) + " >= capacity " +
                                 format12(spec.capacity()[j]));
        gap = std::min(gap, spec.capacity()[j] / lp.link_load[j] - 1.0);
    }
    lp.gap = gap;
    return lp;
}

/// State-independent event-rate bound Xi = sum_i (nu_i + mu_i max_j C_j).
inline double uniformization_rate(const NetworkSpec& spec) {
    const double cmax = spec.capacity().maxCoeff();
    return spec.nu().sum() + cmax * spec.mu().sum();
}

/// True iff every resource carries at least one route that uses it alone.
inline bool local_traffic_holds(const NetworkSpec& spec) {
    for (Eigen::Index j = 0; j < spec.num_resources(); ++j) {
        bool has_local = false;
        for (Eigen::Index i = 0; i < spec.num_routes() && !has_local; ++i)
            has_local = spec.incidence()(j, i) == 1.0 && spec.incidence().col(i).sum() == 1.0;
        if (!has_local) return false;
    }
    return true;
}

}  // namespace afn
