#pragma once

#include <cstdint>
#include <string>

namespace nametune {

// Write-temp-then-rename; an interrupted run never leaves a truncated file
// readable under the target name.
void atomic_write_file(const std::string& path, const std::string& bytes);

std::string read_file_bytes(const std::string& path);

std::uint64_t file_digest(const std::string& path);

}  // namespace nametune
