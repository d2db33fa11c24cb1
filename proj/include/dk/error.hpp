#pragma once

#include <stdexcept>
#include <string>

namespace dk {

// Exit-code mapping used by the CLI: UsageError -> 1, DataError -> 2,
// NumericError -> 3. Anything else derived from Error also exits 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UsageError : Error {
    using Error::Error;
};

struct DataError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

} // namespace dk
