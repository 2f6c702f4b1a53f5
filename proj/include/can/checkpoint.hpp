#pragma once

// Binary checkpoint layout:
//   "CANCKPT1"                     8 bytes
//   header length                  uint32, little-endian
//   header                         UTF-8 JSON: version, model, dims, vocabulary, parameters [(name, shape)]
//   payload                        every parameter row-major as little-endian float32, manifest order

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include <json.hpp>

#include "can/model.hpp"

namespace can {

inline constexpr std::string_view kCheckpointMagic = "CANCKPT1";
inline constexpr int kCheckpointVersion = 1;

nlohmann::json checkpoint_header(const QaModel& model);
std::string serialize_checkpoint(const QaModel& model);
// Throws BadMagic, VersionUnsupported or ManifestMismatch.
std::unique_ptr<QaModel> parse_checkpoint(std::string_view bytes);

// Also throws IoFailure.
void save_checkpoint(const QaModel& model, const std::filesystem::path& path);
std::unique_ptr<QaModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace can
