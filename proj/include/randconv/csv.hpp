#pragma once

#include <initializer_list>
#include <string>
#include <vector>

namespace randconv {

// "%.10g" when that parses back to the same double, otherwise "%.17g".
std::string format_number(double v);

// RFC-4180 field quoting.
std::string csv_escape(const std::string& field);
std::string csv_join(const std::vector<std::string>& fields);

}  // namespace randconv
