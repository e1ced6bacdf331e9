#include "mx/synth.hpp"

#include "mx/error.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/lognormal_distribution.hpp>
#include <boost/random/mersenne_twister.hpp>

namespace mx {

// Boost.Random is used instead of <random> because its distributions are
// specified algorithms, so the output does not depend on the standard library.
DenseMatrix synth_lognormal(std::size_t rows, std::size_t cols, const SynthParams& p)
{
    if (!(p.sigma > 0.0))
        throw Error(ErrorCode::config, "sigma must be positive");
    boost::random::mt19937_64 rng(p.seed);
    boost::random::lognormal_distribution<double> mag(p.mu, p.sigma);
    boost::random::bernoulli_distribution<double> neg(0.5);
    DenseMatrix m(rows, cols, FormatKind::fp32);
    for (auto& b : m.bits) {
        const double v = mag(rng);
        b = float_to_bits(static_cast<float>(neg(rng) ? -v : v));
    }
    return m;
}

} // namespace mx
