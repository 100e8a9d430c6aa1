#pragma once

#include <filesystem>

#include "sgdn/image.hpp"

namespace sgdn {

// 8-bit RGB. Values are rounded to the nearest 1/255 on write.
void write_png(const std::filesystem::path& path, const Image& image);
// IOFailure when the file cannot be opened, SchemaViolation when it is not
// a complete PNG.
Image read_png(const std::filesystem::path& path);

}  // namespace sgdn
