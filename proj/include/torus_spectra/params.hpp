#pragma once

#include "errors.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace torus_spectra {

// Resonance parameters. C[s], D[s] for s = 0..d with C[0] = D[0] = 1.
struct Params {
    double eps = 0.05;
    double delta = 0.5;
    double tau = 1.1;
    std::vector<double> C;
    std::vector<double> D;

    static Params defaults(int d, double eps = 0.05, double delta = 0.5, double tau = 1.1) {
        Params p;
        p.eps = eps;
        p.delta = delta;
        p.tau = tau;
        p.set_geometric_schedule(d, 2.0);
        return p;
    }

    void set_geometric_schedule(int d, double base) {
        C.assign(static_cast<std::size_t>(d) + 1, 1.0);
        D.assign(static_cast<std::size_t>(d) + 1, 1.0);
        for (int s = 1; s <= d; ++s) C[s] = D[s] = std::pow(base, s);
    }

    // delta_{s+1} = delta_s + (d + tau + 1) eps
    double delta_s(int s, int d) const { return delta + s * (d + tau + 1.0) * eps; }

    double Cs(int s) const { return C.at(static_cast<std::size_t>(s)); }
    double Ds(int s) const { return D.at(static_cast<std::size_t>(s)); }

    Params escalated() const {
        Params p = *this;
        for (std::size_t s = 1; s < p.C.size(); ++s) {
            p.C[s] *= 2.0;
            p.D[s] *= 2.0;
        }
        return p;
    }
};

inline void validate(const Params& p, int d) {
    std::ostringstream why;
    if (!(p.eps > 0 && p.delta > 0 && p.tau > 0)) why << "eps, delta, tau must be positive; ";
    if (!(p.tau > d - 1)) why << "tau must exceed d-1; ";
    const double budget = p.delta + d * (d + p.tau + 1.0) * p.eps;
    if (!(budget < 1.0)) why << "delta + d(d+tau+1)eps = " << budget << " must be < 1; ";
    if (!(p.eps * (p.tau + 1.0) <= p.delta)) why << "eps(tau+1) must not exceed delta; ";
    if (p.C.size() != static_cast<std::size_t>(d) + 1 || p.D.size() != static_cast<std::size_t>(d) + 1) {
        why << "C and D schedules need d+1 entries; ";
    } else {
        if (p.C[0] != 1.0 || p.D[0] != 1.0) why << "C_0 and D_0 must be 1; ";
        for (int s = 1; s <= d; ++s)
            if (p.C[s] < p.C[s - 1] || p.D[s] < p.D[s - 1]) why << "C and D schedules must be nondecreasing; ";
    }
    const std::string msg = why.str();
    if (!msg.empty()) throw InvalidParams(msg.substr(0, msg.size() - 2));
}

}  // namespace torus_spectra
