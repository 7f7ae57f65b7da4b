#include "bssgate/errors.hpp"

#include <utility>

namespace bssgate {

ValidationError::ValidationError(std::string field, const std::string& what)
    : Error(field + ": " + what), field_(std::move(field)) {}

DecodeError::DecodeError(std::string field, const std::string& what)
    : Error("decode error in '" + field + "': " + what), field_(std::move(field)) {}

NumericalError::NumericalError(const std::string& what, std::size_t bin)
    : Error(bin == kNoBin ? what : what + " (bin " + std::to_string(bin) + ")"), bin_(bin) {}

}  // namespace bssgate
