#pragma once

#include "errors.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "params.hpp"
#include "submodules.hpp"
#include "types.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_set>

namespace torus_spectra {

namespace detail {

// rank over Q of a few small integer vectors (fraction-free elimination)
inline int small_rank(std::vector<IntVec> rows) {
    if (rows.empty()) return 0;
    const std::size_t n = rows.size(), d = rows[0].size();
    std::vector<std::vector<__int128>> a(n, std::vector<__int128>(d));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) a[i][j] = rows[i][j];
    std::size_t r = 0;
    for (std::size_t c = 0; c < d && r < n; ++c) {
        std::size_t p = r;
        while (p < n && a[p][c] == 0) ++p;
        if (p == n) continue;
        std::swap(a[p], a[r]);
        for (std::size_t i = r + 1; i < n; ++i) {
            if (a[i][c] == 0) continue;
            const __int128 f = a[i][c], g = a[r][c];
            __int128 common = 0;
            for (std::size_t j = c; j < d; ++j) {
                a[i][j] = a[i][j] * g - a[r][j] * f;
                __int128 v = a[i][j] < 0 ? -a[i][j] : a[i][j];
                while (v) {
                    __int128 t = common % v;
                    common = v;
                    v = t;
                }
            }
            if (common > 1)
                for (std::size_t j = c; j < d; ++j) a[i][j] /= common;
        }
        ++r;
    }
    return static_cast<int>(r);
}

}  // namespace detail

// Zone memberships of one point: in_z0, and for each level s the modules M with xi in Z^(s)_M.
struct ZoneInfo {
    bool in_z0 = true;
    std::vector<IntVec> resonant;                // k with a level-0 resonance
    std::vector<std::vector<Submodule>> levels;  // levels[s], s = 0..d (levels[0] unused)

    int top_level() const {
        for (int s = static_cast<int>(levels.size()) - 1; s >= 1; --s)
            if (!levels[s].empty()) return s;
        return 0;
    }
    bool in_zone(int s, const Submodule& M) const {
        if (s <= 0 || s >= static_cast<int>(levels.size())) return false;
        return std::find(levels[s].begin(), levels[s].end(), M) != levels[s].end();
    }
    // xi in B^(s)_M
    bool in_block(int s, const Submodule& M) const {
        if (!in_zone(s, M)) return false;
        return s + 1 >= static_cast<int>(levels.size()) || levels[s + 1].empty();
    }
};

// Evaluates zone memberships; thread-compatible (const methods are safe to share).
class ZoneOracle {
public:
    ZoneOracle(const Lattice& L, const Params& p, double bracket_cap) : L_(L), p_(p), cap_(bracket_cap),
        sv_(L, needed_radius(L, p, bracket_cap)) {}

    const Lattice& lattice() const { return L_; }
    const Params& params() const { return p_; }
    double bracket_cap() const { return cap_; }

    // saturate() memoized on the sorted generator tuple
    Submodule saturated(std::vector<IntVec> gens) const {
        std::sort(gens.begin(), gens.end());
        {
            std::lock_guard<std::mutex> lock(cache_->mu);
            auto it = cache_->modules.find(gens);
            if (it != cache_->modules.end()) return it->second;
        }
        Submodule M = saturate(gens, L_.d);
        std::lock_guard<std::mutex> lock(cache_->mu);
        return cache_->modules.emplace(std::move(gens), std::move(M)).first->second;
    }

    static double needed_radius(const Lattice& L, const Params& p, double cap) {
        const double r1 = 2.0 * std::pow(cap, p.eps) + 2.0;
        double r = r1;
        for (int j = 2; j <= L.d; ++j) r = std::max(r, p.Ds(j - 1) * std::pow(cap + r1, p.eps));
        return r;
    }

    std::vector<IntVec> resonant_vectors(const IntVec& xi) const {
        const Eigen::VectorXd x = L_.shifted(xi);
        check_cap(x);
        // |k| <= <xi_k>^eps forces |k| <= 2<xi+kappa>^eps + 2
        const double r1 = 2.0 * std::pow(L_.bracket(x), p_.eps) + 2.0;
        std::vector<IntVec> out;
        sv_.for_each_within(r1, [&](const IntVec& k, double nk) {
            const Eigen::VectorXd y = x + 0.5 * to_real(k);
            const double Y = L_.bracket(y);
            if (nk > std::pow(Y, p_.eps)) return;
            if (std::abs(L_.dot(y, to_real(k))) <= std::pow(Y, p_.delta) * std::pow(nk, -p_.tau)) out.push_back(k);
        });
        return out;
    }

    ZoneInfo zones(const IntVec& xi) const {
        const int d = L_.d;
        ZoneInfo z;
        z.levels.assign(static_cast<std::size_t>(d) + 1, {});
        z.resonant = resonant_vectors(xi);
        z.in_z0 = z.resonant.empty();
        if (z.in_z0) return z;
        const Eigen::VectorXd x = L_.shifted(xi);
        auto add_module = [&](int s, Submodule M) {
            auto& lv = z.levels[s];
            if (std::find(lv.begin(), lv.end(), M) == lv.end()) lv.push_back(std::move(M));
        };
        for (const auto& k1 : z.resonant) add_module(1, saturated({k1}));
        if (d >= 2) {
            bool full_found = false;
            for (const auto& k1 : z.resonant) {
                const Eigen::VectorXd y1 = x + 0.5 * to_real(k1);
                const double Y1 = L_.bracket(y1);
                // candidate sets for positions j = 2..d of the tuple
                std::vector<std::vector<IntVec>> S(static_cast<std::size_t>(d) + 1);
                for (int j = 2; j <= d; ++j) {
                    const double rad = p_.Ds(j - 1) * std::pow(Y1, p_.eps);
                    const double amp = p_.Cs(j - 1) * std::pow(Y1, p_.delta_s(j - 1, d));
                    sv_.for_each_within(rad, [&](const IntVec& k, double nk) {
                        if (std::abs(L_.dot(y1, to_real(k))) <= amp * std::pow(nk, -p_.tau)) S[j].push_back(k);
                    });
                }
                std::vector<std::pair<int, Submodule>> seen;
                std::vector<IntVec> tuple{k1};
                std::function<void(int)> dfs = [&](int j) {
                    for (const auto& k : S[j]) {
                        tuple.push_back(k);
                        if (detail::small_rank(tuple) == j) {
                            if (j == d) {
                                full_found = true;
                            } else {
                                Submodule M = saturated(tuple);
                                bool dup = false;
                                for (const auto& [jj, MM] : seen)
                                    if (jj == j && MM == M) dup = true;
                                if (!dup) {
                                    seen.emplace_back(j, M);
                                    add_module(j, M);
                                    dfs(j + 1);
                                }
                            }
                        }
                        tuple.pop_back();
                        if (j == d && full_found) return;
                    }
                };
                dfs(2);
            }
            if (full_found) add_module(d, Submodule::full(d));
        }
        for (auto& lv : z.levels) std::sort(lv.begin(), lv.end());
        return z;
    }

private:
    void check_cap(const Eigen::VectorXd& x) const {
        if (L_.bracket(x) > cap_) throw std::logic_error("ZoneOracle: point beyond enumeration cap");
    }

    Lattice L_;
    Params p_;
    double cap_;
    ShortVectors sv_;
    struct ModuleCache {
        std::mutex mu;
        std::map<std::vector<IntVec>, Submodule> modules;
    };
    std::shared_ptr<ModuleCache> cache_ = std::make_shared<ModuleCache>();
};

// (s, M) per the block definition: maximal witnessed level and its unique module.
inline std::pair<int, Submodule> block_label_raw(const ZoneOracle& Z, const IntVec& xi) {
    const ZoneInfo z = Z.zones(xi);
    const int s = z.top_level();
    if (s == 0) return {0, Submodule::zero(Z.lattice().d)};
    if (z.levels[s].size() > 1)
        throw ConstantsTooSmall("point " + to_string(xi) + " lies in several top-level zones");
    return {s, z.levels[s].front()};
}

struct BlockLabel {
    int level = 0;
    Submodule M;
    IntVec beta;
    bool certain = true;
};

struct ClassKey {
    Submodule M;
    IntVec beta;
    bool operator==(const ClassKey& o) const { return M == o.M && beta == o.beta; }
    bool operator<(const ClassKey& o) const {
        if (M != o.M) return M < o.M;
        return beta < o.beta;
    }
};

struct ClassKeyHash {
    std::size_t operator()(const ClassKey& k) const noexcept { return k.M.hash() ^ (IntVecHash{}(k.beta) * 31u); }
};

struct OverlapViolation {
    IntVec xi;
    int level;
    std::vector<Submodule> claimants;
};

struct PartitionResult {
    std::shared_ptr<const Lattice> lattice;
    Params params;
    IndexSet points;
    std::vector<BlockLabel> labels;
    std::vector<ZoneInfo> zones;
    std::vector<OverlapViolation> overlaps;
    int escalations = 0;
    double walk_cap_hits = 0;

    // class -> indices into points, sorted keys for deterministic iteration
    std::map<ClassKey, std::vector<int>> classes() const {
        std::map<ClassKey, std::vector<int>> out;
        for (std::size_t i = 0; i < labels.size(); ++i)
            out[ClassKey{labels[i].M, labels[i].beta}].push_back(static_cast<int>(i));
        return out;
    }

    std::size_t count_level(int s) const {
        return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(),
                                                      [&](const BlockLabel& b) { return b.level == s; }));
    }

    // fraction of points with |xi+kappa| <= R labelled E^(0)
    double density_e0(double R) const {
        std::size_t tot = 0, zero = 0;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (lattice->free_eigenvalue(points[i]) > R * R) continue;
            ++tot;
            if (labels[i].level == 0) ++zero;
        }
        return tot ? static_cast<double>(zero) / static_cast<double>(tot) : 0.0;
    }

    // max |xi+kappa| over the top level (E^(d)); 0 when empty
    double top_block_radius() const {
        double r = 0;
        for (std::size_t i = 0; i < points.size(); ++i)
            if (labels[i].level == lattice->d) r = std::max(r, std::sqrt(lattice->free_eigenvalue(points[i])));
        return r;
    }

    bool all_certain() const {
        return std::all_of(labels.begin(), labels.end(), [](const BlockLabel& b) { return b.certain; });
    }
};

struct PartitionOptions {
    std::size_t max_walk_points = 200000;  // coset walks beyond this are truncated and flagged uncertain
};

namespace detail {

// Largest |(eta+kappa)_M| compatible with eta in Z^(s)_M, given |(eta+kappa)_{M perp}| = a.
inline double projection_margin(const Lattice& L, const Params& p, int s, double a) {
    const int d = L.d;
    const double dl = p.delta_s(s - 1, d);
    const double K0 = s * std::pow(p.Ds(s - 1), s - 1) * p.Cs(s - 1) * std::pow(L.coercivity, -p.tau / 2.0) /
                      L.min_volume_bound;
    const double pexp = (s - 1) * p.eps + dl;
    auto F = [&](double t) {
        const double X = 2.0 * std::sqrt(1.0 + a * a + t * t);
        return K0 * std::pow(X, pexp) + 0.5 * std::pow(X, p.eps);
    };
    double hi = 1.0;
    while (F(hi) >= hi) hi *= 2.0;
    double lo = 0.0;
    for (int it = 0; it < 100; ++it) {
        const double mid = 0.5 * (lo + hi);
        (F(mid) >= mid ? lo : hi) = mid;
    }
    return hi;
}

}  // namespace detail

// Walks cosets xi + M looking for points of B^(s)_M; results memoised per (M, beta).
class CosetSearcher {
public:
    CosetSearcher(const ZoneOracle& Z, const IntVecMap<const ZoneInfo*>& known, const PartitionOptions& opt)
        : Z_(Z), known_(known), opt_(opt) {}

    struct Result {
        bool found = false;
        bool truncated = false;
    };

    Result has_block_point(int s, const Submodule& M, const IntVec& xi) {
        const Lattice& L = Z_.lattice();
        if (s == L.d) return {true, false};  // B^(d) = Z^(d) and xi itself is a witness
        ClassKey key{M, M.beta(xi)};
        auto it = memo_.find(key);
        if (it != memo_.end()) return it->second;
        Result res;
        if (zone(xi).in_block(s, M)) {
            res.found = true;
        } else {
            const Projection pr = project(L, L.shifted(xi), M);
            const double a = L.norm(pr.orthogonal);
            const double tmax = detail::projection_margin(L, Z_.params(), s, a);
            const int r = M.rank();
            Eigen::MatrixXd V(r, L.d);
            for (int i = 0; i < r; ++i) V.row(i) = to_real(M.basis()[i]).transpose();
            const Eigen::MatrixXd GM = V * L.g_star * V.transpose();
            const Eigen::MatrixXd GMinv = GM.inverse();
            IntVec lo(r), hi(r);
            for (int i = 0; i < r; ++i) {
                const double w = tmax * std::sqrt(GMinv(i, i));
                lo[i] = static_cast<long>(std::ceil(-pr.coeffs[i] - w));
                hi[i] = static_cast<long>(std::floor(-pr.coeffs[i] + w));
            }
            std::vector<std::pair<double, IntVec>> cand;
            std::size_t budget = opt_.max_walk_points;
            bool over = false;
            detail::for_each_in_box(lo, hi, [&](const IntVec& n) {
                if (over) return;
                Eigen::VectorXd c = pr.coeffs + to_real(n);
                if (std::sqrt(std::max(0.0, c.dot(GM * c))) > tmax) return;
                if (cand.size() >= budget) {
                    over = true;
                    return;
                }
                Eigen::VectorXd nn = to_real(n);
                cand.emplace_back(nn.dot(GM * nn), n);
            });
            std::sort(cand.begin(), cand.end());
            for (const auto& [dist, n] : cand) {
                const IntVec eta = add(xi, M.from_module_coordinates(n));
                if (L.bracket(L.shifted(eta)) > Z_.bracket_cap()) {
                    over = true;
                    continue;
                }
                if (zone(eta).in_block(s, M)) {
                    res.found = true;
                    break;
                }
            }
            if (!res.found && over) res.truncated = true;
        }
        memo_.emplace(key, res);
        return res;
    }

    const ZoneInfo& zone(const IntVec& eta) {
        auto k = known_.find(eta);
        if (k != known_.end()) return *k->second;
        auto c = cache_.find(eta);
        if (c != cache_.end()) return c->second;
        return cache_.emplace(eta, Z_.zones(eta)).first->second;
    }

private:
    const ZoneOracle& Z_;
    const IntVecMap<const ZoneInfo*>& known_;
    PartitionOptions opt_;
    std::unordered_map<ClassKey, Result, ClassKeyHash> memo_;
    IntVecMap<ZoneInfo> cache_;
};

inline double partition_bracket_cap(const Lattice& L, const IndexSet& pts) {
    double mx = 1.0;
    for (const auto& xi : pts) mx = std::max(mx, L.bracket(L.shifted(xi)));
    return 64.0 * mx + 1000.0;
}

// Labels every point of pts by its extended block and invariant class.
inline PartitionResult extended_partition(const Lattice& L, const IndexSet& pts, const Params& params,
                                          const PartitionOptions& opt = {}) {
    validate(params, L.d);
    const int d = L.d;
    PartitionResult R;
    R.lattice = std::make_shared<const Lattice>(L);
    R.params = params;
    R.points = pts;
    const ZoneOracle Z(L, params, partition_bracket_cap(L, pts));

    const long n = static_cast<long>(pts.size());
    R.zones.resize(pts.size());
    parallel_for(n, [&](long i) { R.zones[i] = Z.zones(pts[i]); });

    IntVecMap<const ZoneInfo*> known;
    known.reserve(pts.size() * 2);
    for (long i = 0; i < n; ++i) known.emplace(pts[i], &R.zones[i]);

    R.labels.resize(pts.size());
    std::vector<std::optional<OverlapViolation>> over(pts.size());
    // one searcher per chunk keeps memo tables thread-local and results deterministic
    const long chunk = 512;
    const long nchunks = (n + chunk - 1) / chunk;
    parallel_for(nchunks, [&](long c) {
        CosetSearcher search(Z, known, opt);
        for (long i = c * chunk; i < std::min(n, (c + 1) * chunk); ++i) {
            const ZoneInfo& z = R.zones[i];
            BlockLabel lab;
            if (z.in_z0) {
                lab.level = 0;
                lab.M = Submodule::zero(d);
                lab.beta = pts[i];
                R.labels[i] = lab;
                continue;
            }
            bool done = false;
            for (int s = 1; s <= d && !done; ++s) {
                std::vector<Submodule> claims;
                bool uncertain = false;
                for (const auto& M : z.levels[s]) {
                    auto res = search.has_block_point(s, M, pts[i]);
                    if (res.found) claims.push_back(M);
                    if (res.truncated) uncertain = true;
                }
                if (claims.empty()) {
                    if (uncertain) {
                        lab.certain = false;
                    }
                    continue;
                }
                if (claims.size() > 1) over[i] = OverlapViolation{pts[i], s, claims};
                lab.level = s;
                lab.M = claims.front();
                lab.beta = lab.M.beta(pts[i]);
                done = true;
            }
            if (!done) throw std::logic_error("extended_partition: point left unlabelled");
            R.labels[i] = lab;
        }
    });
    for (auto& o : over)
        if (o) R.overlaps.push_back(*o);
    return R;
}

struct GeometryReport {
    std::size_t nesting_violations = 0;     // (a): foreign zone at a level <= label level
    std::size_t separation_violations = 0;  // (d): xi + k' in a foreign zone
    std::size_t overlap_violations = 0;
    std::vector<double> fitted_K;           // (b): per level s = 1..d-1
    std::vector<std::pair<double, double>> density;  // (c): (radius, E^(0) density)
    bool density_nondecreasing = true;
    std::vector<std::string> messages;

    bool clean() const { return nesting_violations == 0 && separation_violations == 0 && overlap_violations == 0; }
    std::string advice() const {
        return clean() ? "none" : "escalate: multiply C_s, D_s (s >= 1) by 2 and recompute";
    }
};

inline GeometryReport verify_geometry(const PartitionResult& P, std::vector<double> radii = {}) {
    const Lattice& L = *P.lattice;
    const int d = L.d;
    GeometryReport rep;
    rep.overlap_violations = P.overlaps.size();
    const ZoneOracle Z(L, P.params, partition_bracket_cap(L, P.points));
    rep.fitted_K.assign(static_cast<std::size_t>(std::max(0, d - 1)), 0.0);

    const long n = static_cast<long>(P.points.size());
    std::vector<std::size_t> nest(n, 0), sep(n, 0);
    std::vector<double> ratio(n, 0.0);
    parallel_for(n, [&](long i) {
        const BlockLabel& lab = P.labels[i];
        if (lab.level == 0 || !lab.certain) return;
        const ZoneInfo& z = P.zones[i];
        for (int s2 = 1; s2 <= lab.level; ++s2)
            for (const auto& M2 : z.levels[s2])
                if (!M2.is_subset_of(lab.M)) ++nest[i];
        if (lab.level >= d) return;
        const Eigen::VectorXd x = L.shifted(P.points[i]);
        const double expo = P.params.delta_s(lab.level - 1, d) + d * P.params.eps;
        ratio[i] = L.norm(project(L, x, lab.M).along) / std::pow(L.bracket(x), expo);
        // admissible shifts k': |k'| <= <xi_k'>^eps
        const double r1 = 2.0 * std::pow(L.bracket(x), P.params.eps) + 2.0;
        ShortVectors sv(L, r1);
        sv.for_each_within(r1, [&](const IntVec& k, double nk) {
            const Eigen::VectorXd y = x + 0.5 * to_real(k);
            if (nk > std::pow(L.bracket(y), P.params.eps)) return;
            const ZoneInfo zk = Z.zones(add(P.points[i], k));
            for (int s2 = 1; s2 <= lab.level; ++s2)
                for (const auto& M2 : zk.levels[s2])
                    if (!M2.is_subset_of(lab.M)) ++sep[i];
        });
    });
    for (long i = 0; i < n; ++i) {
        rep.nesting_violations += nest[i];
        rep.separation_violations += sep[i];
        const int s = P.labels[i].level;
        if (s >= 1 && s < d) rep.fitted_K[s - 1] = std::max(rep.fitted_K[s - 1], ratio[i]);
    }
    if (radii.empty()) {
        double rmax = 0;
        for (const auto& xi : P.points) rmax = std::max(rmax, std::sqrt(L.free_eigenvalue(xi)));
        for (double r = rmax; r >= 5.0; r /= 2.0) radii.push_back(r);
        std::reverse(radii.begin(), radii.end());
    }
    double prev = -1;
    for (double r : radii) {
        const double dens = P.density_e0(r);
        rep.density.emplace_back(r, dens);
        if (dens + 1e-15 < prev) rep.density_nondecreasing = false;
        prev = dens;
    }
    if (rep.nesting_violations) rep.messages.push_back("foreign zones inside extended blocks");
    if (rep.separation_violations) rep.messages.push_back("admissible shifts reach foreign zones");
    if (rep.overlap_violations) rep.messages.push_back("points claimed by several extended blocks");
    return rep;
}

struct EscalatedPartition {
    PartitionResult partition;
    GeometryReport report;
};

// Doubles C_s, D_s until the geometric verifier is clean (or max_rounds is reached).
inline EscalatedPartition partition_with_escalation(const Lattice& L, const IndexSet& pts, Params params,
                                                    int max_rounds = 6, const PartitionOptions& opt = {}) {
    for (int round = 0;; ++round) {
        EscalatedPartition out{extended_partition(L, pts, params, opt), {}};
        out.partition.escalations = round;
        out.report = verify_geometry(out.partition);
        if (out.report.clean()) return out;
        if (round >= max_rounds) throw ConstantsTooSmall("geometry still violated after " +
                                                         std::to_string(max_rounds) + " escalations");
        params = params.escalated();
        try {
            validate(params, L.d);
        } catch (const InvalidParams& e) {
            throw ConstantsTooSmall(std::string("escalation produced invalid params: ") + e.what());
        }
    }
}

}  // namespace torus_spectra
