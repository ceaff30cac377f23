#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace higformer {

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace higformer
