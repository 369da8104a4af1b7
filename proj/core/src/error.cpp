/*
   Copyright 2026 The ipmscale Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

      http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include "ipm/error.hpp"

namespace ipm {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_bounds: return "invalid-bounds";
        case Errc::invalid_count: return "invalid-count";
        case Errc::invalid_argument: return "invalid-argument";
        case Errc::empty_input: return "empty-input";
        case Errc::out_of_range: return "out-of-range";
        case Errc::below_threshold: return "below-threshold";
        case Errc::negative_population: return "negative-population";
        case Errc::length_mismatch: return "length-mismatch";
        case Errc::grid_mismatch: return "grid-mismatch";
        case Errc::degenerate_range: return "degenerate-range";
        case Errc::out_of_rectangle: return "out-of-rectangle";
        case Errc::missing_climate: return "missing-climate";
        case Errc::invalid_bound: return "invalid-bound";
        case Errc::zero_population_year: return "zero-population-year";
        case Errc::over_removal: return "over-removal";
        case Errc::parse_error: return "parse-error";
        case Errc::io_failure: return "io-failure";
        case Errc::zero_intensity_with_count: return "zero-intensity-with-count";
        case Errc::not_positive_definite: return "non-positive-definite";
        case Errc::no_convergence: return "no-convergence";
        case Errc::empty_bin_year: return "empty-bin-year";
        case Errc::constraint_violation: return "constraint-violation";
        case Errc::no_live_terms: return "no-live-terms";
        case Errc::non_finite_posterior: return "non-finite-posterior";
        case Errc::insufficient_samples: return "insufficient-samples";
        case Errc::missing_chain: return "missing-chain";
    }
    return "unknown";
}

bool is_validation_error(Errc code) noexcept {
    switch (code) {
        case Errc::zero_intensity_with_count:
        case Errc::not_positive_definite:
        case Errc::no_convergence:
        case Errc::empty_bin_year:
        case Errc::constraint_violation:
        case Errc::no_live_terms:
        case Errc::non_finite_posterior:
        case Errc::insufficient_samples:
        case Errc::io_failure:
            return false;
        default:
            return true;
    }
}

}  // namespace ipm
