#pragma once

// Little-endian checkpoint container:
//   "AIVT" | u32 version (=1)
//   config: 10 x u32 (n_c, n_layers, n_heads, kernel, stride, head_hidden,
//           det_classes, n_classes, in_rails, in_width) | u8 positional | u64 seed
//   provenance: u8 stage | u64 seed | u32 epochs | f64 beta | f64 train_pnr
//   u32 tensor count, then per tensor: u32 name length | name | u32 rank |
//           rank x u32 extents | f32 values
//   u32 CRC-32 of every preceding byte

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "aitvit/model.hpp"

namespace aitvit::checkpoint {

inline constexpr std::uint32_t kVersion = 1;

enum class Stage : std::uint8_t { initialized = 0, pretrained = 1, adversarial = 2 };

struct Provenance {
  Stage stage = Stage::initialized;
  std::uint64_t seed = 0;
  std::uint32_t epochs = 0;
  double beta = 1.0;
  double train_pnr = 0.0;  // linear

  // The detection head was trained, i.e. adversarial stage with beta < 1.
  bool detector_trained() const { return stage == Stage::adversarial && beta < 1.0; }
  bool operator==(const Provenance&) const = default;
};

struct Checkpoint {
  AiTViTConfig config;
  AiTViTParams params;
  Provenance provenance;
};

std::vector<std::uint8_t> encode(const AiTViT& model, const Provenance& provenance);
// FormatError on bad magic/version or malformed layout, IntegrityError on a
// checksum or shape mismatch, ConfigError when `expected` differs.
Checkpoint decode(std::span<const std::uint8_t> bytes,
                  const std::optional<AiTViTConfig>& expected = std::nullopt);

void save(const std::filesystem::path& path, const AiTViT& model, const Provenance& provenance);
Checkpoint load(const std::filesystem::path& path,
                const std::optional<AiTViTConfig>& expected = std::nullopt);

}  // namespace aitvit::checkpoint
