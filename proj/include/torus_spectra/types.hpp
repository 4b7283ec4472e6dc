#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <unordered_map>
#include <vector>

namespace torus_spectra {

using IntVec = std::vector<long>;
using cplx = std::complex<double>;

struct IntVecHash {
    std::size_t operator()(const IntVec& v) const noexcept {
        std::uint64_t h = 1469598103934665603ull;
        for (long x : v) {
            h ^= static_cast<std::uint64_t>(x) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

template <class T>
using IntVecMap = std::unordered_map<IntVec, T, IntVecHash>;

inline IntVec add(const IntVec& a, const IntVec& b) {
    IntVec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

inline IntVec sub(const IntVec& a, const IntVec& b) {
    IntVec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
    return r;
}

inline IntVec neg(const IntVec& a) {
    IntVec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = -a[i];
    return r;
}

inline bool is_zero(const IntVec& a) {
    return std::all_of(a.begin(), a.end(), [](long x) { return x == 0; });
}

inline Eigen::VectorXd to_real(const IntVec& a) {
    Eigen::VectorXd r(static_cast<Eigen::Index>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) r[static_cast<Eigen::Index>(i)] = static_cast<double>(a[i]);
    return r;
}

inline std::string to_string(const IntVec& a) {
    std::string s = "(";
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(a[i]);
    }
    return s + ")";
}

// Ordered finite set of lattice points with O(1) lookup.
class IndexSet {
public:
    IndexSet() = default;
    IndexSet(int dim, std::vector<IntVec> pts) : dim_(dim), points_(std::move(pts)) {
        pos_.reserve(points_.size() * 2);
        for (std::size_t i = 0; i < points_.size(); ++i) pos_.emplace(points_[i], static_cast<int>(i));
    }

    int dim() const { return dim_; }
    std::size_t size() const { return points_.size(); }
    bool empty() const { return points_.empty(); }
    const IntVec& operator[](std::size_t i) const { return points_[i]; }
    const std::vector<IntVec>& points() const { return points_; }
    auto begin() const { return points_.begin(); }
    auto end() const { return points_.end(); }

    int find(const IntVec& p) const {
        auto it = pos_.find(p);
        return it == pos_.end() ? -1 : it->second;
    }
    bool contains(const IntVec& p) const { return pos_.count(p) != 0; }

private:
    int dim_ = 0;
    std::vector<IntVec> points_;
    IntVecMap<int> pos_;
};

// Axis-aligned integer rectangle lo <= xi <= hi (componentwise), lexicographic order.
inline IndexSet rectangle(const IntVec& lo, const IntVec& hi) {
    const int d = static_cast<int>(lo.size());
    std::vector<IntVec> pts;
    IntVec cur = lo;
    if (d == 0) return IndexSet(0, {IntVec{}});
    for (int i = 0; i < d; ++i)
        if (lo[i] > hi[i]) return IndexSet(d, {});
    while (true) {
        pts.push_back(cur);
        int i = d - 1;
        while (i >= 0 && cur[i] == hi[i]) {
            cur[i] = lo[i];
            --i;
        }
        if (i < 0) break;
        ++cur[i];
    }
    return IndexSet(d, std::move(pts));
}

}  // namespace torus_spectra
