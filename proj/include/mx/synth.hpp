#pragma once

#include "mx/matrix.hpp"

#include <cstdint>

namespace mx {

// Magnitudes are exp(N(mu, sigma)), signs are uniform. The same
// (rows, cols, params) always yields the same matrix.
struct SynthParams {
    double mu = 0.0;
    double sigma = 1.0;
    std::uint64_t seed = 1;
};

DenseMatrix synth_lognormal(std::size_t rows, std::size_t cols, const SynthParams& p);

} // namespace mx
