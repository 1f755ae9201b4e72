#pragma once

#include <stdexcept>
#include <string>

namespace ctmc {

/// Base class for all errors thrown by this library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-square input, mismatched state spaces, misaligned series lengths.
class dimension_error : public error {
public:
    using error::error;
};

/// Non-finite entries, iteration failures, singular systems.
class numeric_error : public error {
public:
    using error::error;
};

/// Singular linear system (pivot below threshold).
class singular_error : public numeric_error {
public:
    using numeric_error::numeric_error;
};

/// A constructed object would violate its invariants.
class validation_error : public error {
public:
    using error::error;
};

/// Bad data: empty rows, parse failures, duplicates, insufficient length.
class data_error : public error {
public:
    using error::error;
};

/// Invalid argument combinations (diagonal rate pair, negative time, ...).
class argument_error : public error {
public:
    using error::error;
};

/// A model fit failed (rank-deficient design, no admissible parameters).
class fit_error : public error {
public:
    using error::error;
};

} // namespace ctmc
