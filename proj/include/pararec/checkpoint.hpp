#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "pararec/config.hpp"
#include "pararec/param.hpp"

namespace pararec {

// Versioned container: a text manifest (config, alphabet, iteration count)
// followed by named little-endian parameter blobs. Blob width follows the
// config's precision flag; f64 round-trips bit-identically.
constexpr std::uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  RunConfig config;
  std::u32string alphabet;
  std::uint64_t iterations_done = 0;
  std::map<std::string, Tensor> params;
};

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg,
                     const std::u32string& alphabet,
                     std::uint64_t iterations_done, const ParamSet& params);

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Copies loaded blobs into a live parameter set; every registered parameter
// must be present with a matching shape.
void restore_params(const LoadedCheckpoint& ckpt, ParamSet& params);

}  // namespace pararec
