#pragma once

#include <string_view>
#include <vector>

namespace narrshift {

/// Files from resources/, compiled into the library. Names are relative
/// paths such as "prompt_template_v1.txt" or "mock/sample1.json". Throws
/// std::out_of_range for unknown names.
std::string_view resource(std::string_view name);
std::vector<std::string_view> resource_names();

}  // namespace narrshift
