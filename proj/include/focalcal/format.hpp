#pragma once

#include <string>
#include <string_view>

namespace focalcal {

/// Shortest-safe decimal text: 17 significant digits, round-trips exactly.
std::string format_double(double x);

/// Strict decimal parse of the whole field. Returns false on any trailing
/// characters or an empty field.
bool parse_double(std::string_view s, double& out);

}  // namespace focalcal
