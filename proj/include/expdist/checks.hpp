#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace expdist {

struct CheckResult {
    std::string name;
    bool passed = true;
    // Largest observed error (or ratio) and the limit it was held to.
    double worst = 0.0;
    double limit = 0.0;
    std::size_t samples = 0;
    std::size_t violations = 0;
};

struct CheckSuite {
    std::vector<CheckResult> results;
    double seconds = 0.0;

    [[nodiscard]] bool passed() const;
    void append(const CheckSuite& other);
};

// Inverse roundtrips of A_p, B_p, v^lambda and the uniqueness kernel, and the
// closed-form derivatives against centred differences.
[[nodiscard]] CheckSuite kernel_roundtrip_suite();

// Scalar facts: diagonal distortion, m_p, R_p(1), the
// dv/dk bound, the Lipschitz bound of the Beltrami operator, the slope bracket.
[[nodiscard]] CheckSuite scalar_fact_suite(std::uint64_t seed = 7, std::size_t lipschitz_pairs = 100000);

// a_p(exp(p K) - e^p) = exp(p K) 2p|mu|/(1 - |mu|^2) over |mu| in [0, 0.999].
[[nodiscard]] CheckSuite f_identity_suite();

// Monotonicity, convexity and the remaining sampled invariants.
[[nodiscard]] CheckSuite kernel_property_suite(std::uint64_t seed = 11);

// Everything above; what `kernels check` runs.
[[nodiscard]] CheckSuite kernel_invariant_suite(std::uint64_t seed = 7);

}  // namespace expdist
