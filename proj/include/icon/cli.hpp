#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace icon::cli {

inline constexpr const char* kToolkitVersion = "1.0.0";

/// Exit codes: 0 success, 1 usage or configuration error, 2 data, format or
/// I/O error, 3 numeric failure.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace icon::cli
