#pragma once

#include <filesystem>
#include <string>

#include "wmc/random.hpp"
#include "wmc/tensor.hpp"

namespace testutil {

inline wmc::Tensor random_tensor(wmc::Shape shape, wmc::Rng& rng, double lo = -1.0, double hi = 1.0) {
    wmc::Tensor t(std::move(shape));
    for (wmc::Index k = 0; k < t.size(); ++k) t[k] = rng.uniform(lo, hi);
    return t;
}

inline wmc::Matrix random_matrix(wmc::Index rows, wmc::Index cols, wmc::Rng& rng, double lo = -1.0, double hi = 1.0) {
    wmc::Matrix m(rows, cols);
    for (wmc::Index r = 0; r < rows; ++r)
        for (wmc::Index c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
    return m;
}

inline wmc::Vector random_vector(wmc::Index n, wmc::Rng& rng, double lo = -1.0, double hi = 1.0) {
    wmc::Vector v(n);
    for (wmc::Index k = 0; k < n; ++k) v[k] = rng.uniform(lo, hi);
    return v;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("wmc_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace testutil
