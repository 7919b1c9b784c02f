#pragma once

#include <filesystem>
#include <string>

#include "sftmn/featureio.hpp"
#include "sftmn/slowfast.hpp"

namespace sftmn {

inline constexpr const char* kCheckpointVersion = "sftmn-ckpt-1";

struct Checkpoint {
  SfTmnNetwork network;
  ClassMapping mapping;
};

/// Container layout:
///
///   sftmn-ckpt-1
///   [config]        key=value lines of SfTmnConfig
///   [classes]       "index name" lines
///   [stages]        "<path> <index> <kind> <layers> <maps> <classes> <input_dim>"
///   [tensors] N     then N × ("<name> <rows> <cols>\n" + rows·cols LE float64 + "\n")
///
/// Parameter values round-trip bit-exactly.
void save_checkpoint(const std::filesystem::path& path, const SfTmnNetwork& network,
                     const ClassMapping& mapping);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string serialize_checkpoint(const SfTmnNetwork& network, const ClassMapping& mapping);
Checkpoint deserialize_checkpoint(const std::string& bytes);

}  // namespace sftmn
