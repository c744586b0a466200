#pragma once

#include <filesystem>
#include <iosfwd>

#include "loant/model.hpp"

namespace loant {

inline constexpr int kCheckpointVersion = 1;

/// JSON document {format, version, config, params: {name: {group, shape, values}}}.
/// Values are written with shortest round-trip formatting, so load(save(p)) == p.
void write_checkpoint(std::ostream& os, const ModelParams& params);
ModelParams read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace loant
