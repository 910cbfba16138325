#pragma once

#include <filesystem>

#include "traitfuse/fusion.hpp"

namespace traitfuse {

/// Writes one f64 MPRT file per parameter plus manifest.json holding the
/// model config and the name -> file map. Throws IoError.
void save_checkpoint(const FusionModel& model, const std::filesystem::path& dir);

/// Rebuilds the model from the manifest config and overwrites every
/// parameter from its file. Throws DataError on missing or misshapen entries.
FusionModel load_checkpoint(const std::filesystem::path& dir);

}  // namespace traitfuse
