#pragma once

// Binary container shared by signal sets, checkpoints and latent datasets:
//
//   offset 0   magic, 4 bytes: "MFSG" signals, "MFCK" checkpoint, "MFLD" latents
//   offset 4   version, u32 little-endian (currently 1)
//   offset 8   header_len, u64 little-endian
//   offset 16  header, header_len bytes of UTF-8 JSON
//   then       payload, little-endian IEEE floats
//
// The header names the payload element type in "dtype" ("f32" or "f64") and
// its element count in "payload_values". Signal sets use f32 whenever every
// value is exactly representable in single precision and f64 otherwise;
// checkpoints and latent datasets always use f64 so reloads are exact.

#include <cstdint>
#include <filesystem>

#include "modsiren/adaptation.hpp"
#include "modsiren/meta_trainer.hpp"
#include "modsiren/signal.hpp"

namespace modsiren {

inline constexpr std::uint32_t kContainerVersion = 1;

// Loaders throw IoError when the file cannot be read and FormatError, with
// the byte offset of the problem, when its contents are malformed.

void save_signals(const SignalSet& set, const std::filesystem::path& path);
SignalSet load_signals(const std::filesystem::path& path);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

void save_latents(const LatentDataset& dataset, const std::filesystem::path& path);
LatentDataset load_latents(const std::filesystem::path& path);

}  // namespace modsiren
