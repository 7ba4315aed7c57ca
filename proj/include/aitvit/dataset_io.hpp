#pragma once

// Little-endian dataset container:
//   "AIQD" | u32 version (=1) | u32 frame count | u8 class count (=11)
//   then per frame: u8 label | f32 snr_db | 256 x f32 iq (I rail, then Q rail)

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "aitvit/signals.hpp"

namespace aitvit::signals {

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 13;
inline constexpr std::size_t kDatasetFrameBytes = 1 + 4 + 4 * kFrameValues;

std::vector<std::uint8_t> encode_dataset(std::span<const LabeledFrame> frames);
// Throws FormatError (carrying the byte offset) on any malformed input.
std::vector<LabeledFrame> decode_dataset(std::span<const std::uint8_t> bytes);

void write_dataset(const std::filesystem::path& path, std::span<const LabeledFrame> frames);
std::vector<LabeledFrame> read_dataset(const std::filesystem::path& path);

// Appends frames one at a time; the count field is patched on close().
class DatasetWriter {
 public:
  explicit DatasetWriter(const std::filesystem::path& path);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void append(const LabeledFrame& frame);
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace aitvit::signals
