#pragma once

#include <stdexcept>
#include <string>

namespace moi2d {

/// Thrown when a computed result violates an internal consistency contract
/// (e.g. image-set closure failure, survival probability far outside [0,1]).
/// Distinct from std::domain_error / std::invalid_argument, which signal bad
/// caller input.
class internal_error : public std::runtime_error {
public:
    explicit internal_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace moi2d
