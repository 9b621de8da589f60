#pragma once

#include <filesystem>
#include <string>

#include "evdl/classifier.hpp"

namespace evdl {

// Layout: "EVDL" | u32 format_version | u32 header length | canonical JSON
// header | little-endian f64 tensor payload | u32 CRC32 of the payload.

std::string serialize_checkpoint(const ModelCheckpoint& model);
ModelCheckpoint deserialize_checkpoint(const std::string& bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const ModelCheckpoint& model, const std::filesystem::path& path);
ModelCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace evdl
