#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace redlab {

// RFC 4180 style CSV. Quoted fields may contain commas, doubled quotes and
// newlines; rows are terminated by \n or \r\n.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

std::string csv_escape(std::string_view field);

std::string csv_join(const std::vector<std::string>& fields);

}  // namespace redlab
