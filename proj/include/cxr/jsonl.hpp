#pragma once

#include <functional>
#include <string>

#include <json.hpp>

namespace cxr {

// Calls fn(line_number, parsed_object) for every non-blank line that parses
// as a JSON object; returns the number of lines that did not. Throws IoError
// if the file cannot be opened.
size_t for_each_jsonl(const std::string& path,
                      const std::function<bool(size_t, const nlohmann::json&)>& fn);

// Writes via a temp file in the same directory plus rename, so a failed run
// never leaves a partial output behind.
void atomic_write(const std::string& path, const std::string& content);

} // namespace cxr
