#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace waveud {

// Finite-difference verification of every autodiff kernel plus the composed
// discriminator, generator, and full generator-loss pipeline, all at float64.
// Central differences with step 1e-5; the reported error is
// |analytic - numeric| / max(|analytic|, |numeric|, 1).
struct GradCheckCase {
    std::string name;
    double max_rel_err = 0;
};

std::vector<GradCheckCase> run_gradcheck(std::uint64_t seed = 42);

double gradcheck_max_err(const std::vector<GradCheckCase>& cases);

} // namespace waveud
