#ifndef NLDIFF_ERRORS_HPP
#define NLDIFF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace nldiff {

/// File could not be opened, read or written.
class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

/// Input bytes do not form a valid PGM / raw-volume file.
class format_error : public std::runtime_error {
public:
    explicit format_error(const std::string& what) : std::runtime_error(what) {}
};

/// A numerical contract was violated (lost diagonal dominance, stability
/// limit exceeded, settling search exhausted, degenerate mean, ...).
class numerical_error : public std::runtime_error {
public:
    explicit numerical_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace nldiff

#endif
