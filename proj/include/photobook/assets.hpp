#pragma once

#include <string_view>

// Text assets compiled into the library from assets/.
namespace photobook::assets {

std::string_view original_prompt();
std::string_view engineered_prompt();
std::string_view refexp_rules();
std::string_view reference_anchors();

}  // namespace photobook::assets
