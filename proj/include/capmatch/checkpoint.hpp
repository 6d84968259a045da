#pragma once

#include <filesystem>

#include "capmatch/models.hpp"

namespace capmatch {

// Versioned binary dump of every parameter tensor with its name and shape.
// Round-trips are exact; identical bundles produce identical bytes.
void save_checkpoint(const ModelBundle& m, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace capmatch
