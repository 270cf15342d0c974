#pragma once

#include <stdexcept>
#include <string>

namespace bsw {

/// Raised when a caller violates an operation's precondition (bad shape,
/// out-of-range index, invalid build order for a matchup, ...).
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Raised for filesystem and payload problems: unreadable paths, truncated
/// or corrupted files, schema/version mismatches.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void expect(bool cond, const std::string& what) {
    if (!cond) throw ContractError(what);
}

}  // namespace bsw
