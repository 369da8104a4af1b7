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

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ipm {

enum class Errc {
    // input validation
    invalid_bounds,
    invalid_count,
    invalid_argument,
    empty_input,
    out_of_range,
    below_threshold,
    negative_population,
    length_mismatch,
    grid_mismatch,
    degenerate_range,
    out_of_rectangle,
    missing_climate,
    invalid_bound,
    zero_population_year,
    over_removal,
    parse_error,
    io_failure,
    // numerical / runtime
    zero_intensity_with_count,
    not_positive_definite,
    no_convergence,
    empty_bin_year,
    constraint_violation,
    no_live_terms,
    non_finite_posterior,
    insufficient_samples,
    missing_chain,
};

std::string_view to_string(Errc code) noexcept;

// True for errors caused by bad user input (CLI exit code 2); everything
// else is a runtime or numerical failure (exit code 3).
bool is_validation_error(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace ipm
