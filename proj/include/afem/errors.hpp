#pragma once

#include <stdexcept>
#include <string>

namespace afem {

/// Invalid input: malformed mesh file, bad manifest, mismatched generations,
/// out-of-range parameters. Maps to CLI exit status 2.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical breakdown: loss of positive definiteness, NaN/Inf in a solve,
/// stalled iteration. Maps to CLI exit status 3.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace afem
