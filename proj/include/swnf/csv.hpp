#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace swnf::csv {

// Shortest form that still round-trips a double: 17 significant digits.
std::string format_double(double v);

std::vector<std::string> split(std::string_view line, char sep = ',');

double parse_double(std::string_view field);

}  // namespace swnf::csv
