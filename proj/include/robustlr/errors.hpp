#pragma once

#include <stdexcept>
#include <string>

namespace robustlr {

// Input that violates an operation contract (bad dimensions, out-of-range
// parameters, malformed subsets).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed external data: CSV rows, config files, instance files.
// Messages carry the offending line/row.
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A search or combinatorial enumeration exceeded its configured budget.
// Distinct from a negative verdict.
class BudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace robustlr
