#pragma once

#include <cmath>
#include <atomic>
#include <cstdlib>
#include <unistd.h>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "btsumm/common.hpp"

namespace btest {

// Unique scratch directory, removed on destruction.
struct TmpDir {
    std::string path;
    explicit TmpDir(const std::string& name) {
        static std::atomic<int> counter{0};
        path = (std::filesystem::temp_directory_path() /
                ("btsumm-" + name + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1))))
                   .string();
        std::filesystem::create_directories(path);
    }
    ~TmpDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return btsumm::path_join(path, name); }
};

struct FdResult {
    double max_rel = 0.0;
    double max_abs_smallgrad = 0.0;  // coords below the magnitude floor
    int checked = 0;
};

// Central finite differences against precomputed analytic gradients.
// Coordinates whose gradient magnitude sits under `floor` are held to an
// absolute tolerance instead (the relative measure is meaningless inside the
// finite-difference noise floor).
inline FdResult fd_check(const std::function<double()>& loss,
                         std::vector<std::pair<double*, double>> coords, double h = 1e-5,
                         double floor = 1e-5) {
    FdResult r;
    for (auto& [p, g] : coords) {
        double save = *p;
        *p = save + h;
        double lp = loss();
        *p = save - h;
        double lm = loss();
        *p = save;
        double fd = (lp - lm) / (2.0 * h);
        double mag = std::max(std::abs(fd), std::abs(g));
        if (mag < floor) {
            r.max_abs_smallgrad = std::max(r.max_abs_smallgrad, std::abs(fd - g));
        } else {
            r.max_rel = std::max(r.max_rel, std::abs(fd - g) / mag);
        }
        ++r.checked;
    }
    return r;
}

// Every k-th coordinate of a span, capped.
inline std::vector<size_t> sample_coords(size_t n, size_t max_coords) {
    std::vector<size_t> out;
    size_t stride = std::max<size_t>(1, n / std::max<size_t>(1, max_coords));
    for (size_t i = 0; i < n; i += stride) out.push_back(i);
    return out;
}

// Random orthogonal d x d matrix via Gram-Schmidt on a Gaussian matrix.
inline std::vector<double> random_rotation(int d, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> m(static_cast<size_t>(d) * d);
    for (auto& x : m) x = gauss(rng);
    // orthonormalize columns
    for (int j = 0; j < d; ++j) {
        for (int k = 0; k < j; ++k) {
            double dot = 0;
            for (int i = 0; i < d; ++i)
                dot += m[static_cast<size_t>(i) * d + j] * m[static_cast<size_t>(i) * d + k];
            for (int i = 0; i < d; ++i)
                m[static_cast<size_t>(i) * d + j] -= dot * m[static_cast<size_t>(i) * d + k];
        }
        double norm = 0;
        for (int i = 0; i < d; ++i) {
            double v = m[static_cast<size_t>(i) * d + j];
            norm += v * v;
        }
        norm = 1.0 / std::sqrt(norm);
        for (int i = 0; i < d; ++i) m[static_cast<size_t>(i) * d + j] *= norm;
    }
    return m;
}

}  // namespace btest
