#include "aitvit/dataset_io.hpp"

#include <cmath>
#include <limits>
#include <fstream>

#include "aitvit/byte_io.hpp"
#include "aitvit/errors.hpp"

namespace aitvit::signals {

namespace {

constexpr char kMagic[4] = {'A', 'I', 'Q', 'D'};

void encode_frame(io::ByteWriter& w, const LabeledFrame& f) {
  if (f.label >= kNumSchemes)
    throw DataError("frame label " + std::to_string(f.label) + " out of range");
  w.u8(f.label);
  w.f32(static_cast<float>(f.snr_db));
  for (double v : f.iq) w.f32(static_cast<float>(v));
}

void encode_header(io::ByteWriter& w, std::uint32_t count) {
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u32(kDatasetVersion);
  w.u32(count);
  w.u8(static_cast<std::uint8_t>(kNumSchemes));
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(std::span<const LabeledFrame> frames) {
  if (frames.size() > 0xFFFFFFFFu) throw DataError("too many frames for the dataset format");
  io::ByteWriter w;
  w.bytes().reserve(kDatasetHeaderBytes + frames.size() * kDatasetFrameBytes);
  encode_header(w, static_cast<std::uint32_t>(frames.size()));
  for (const auto& f : frames) encode_frame(w, f);
  return std::move(w.bytes());
}

std::vector<LabeledFrame> decode_dataset(std::span<const std::uint8_t> bytes) {
  io::ByteReader r(bytes);
  const auto magic = r.raw(4);
  for (std::size_t i = 0; i < 4; ++i)
    if (magic[i] != static_cast<std::uint8_t>(kMagic[i]))
      throw FormatError("bad dataset magic", i);
  const auto version = r.u32();
  if (version != kDatasetVersion)
    throw FormatError("unsupported dataset version " + std::to_string(version), 4);
  const auto count = r.u32();
  const auto classes = r.u8();
  if (classes != kNumSchemes)
    throw FormatError("class count " + std::to_string(classes) + " (expected " +
                          std::to_string(kNumSchemes) + ")",
                      12);
  const std::uint64_t expected = kDatasetHeaderBytes + std::uint64_t{count} * kDatasetFrameBytes;
  if (bytes.size() != expected)
    throw FormatError("file holds " + std::to_string(bytes.size()) + " bytes but header declares " +
                          std::to_string(count) + " frames (" + std::to_string(expected) + " bytes)",
                      std::min<std::uint64_t>(bytes.size(), expected));

  std::vector<LabeledFrame> frames(count);
  for (auto& f : frames) {
    const auto at = r.pos();
    f.label = r.u8();
    if (f.label >= classes)
      throw FormatError("frame label " + std::to_string(f.label) + " out of range", at);
    f.snr_db = r.f32();
    if (std::isnan(f.snr_db) || f.snr_db == -std::numeric_limits<double>::infinity())
      throw FormatError("invalid snr", at + 1);
    for (double& v : f.iq) {
      const auto vat = r.pos();
      v = r.f32();
      if (!std::isfinite(v)) throw FormatError("non-finite IQ sample", vat);
    }
  }
  return frames;
}

void write_dataset(const std::filesystem::path& path, std::span<const LabeledFrame> frames) {
  io::write_file(path, encode_dataset(frames));
}

std::vector<LabeledFrame> read_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

struct DatasetWriter::Impl {
  std::ofstream out;
  std::uint32_t count = 0;
  bool open = true;
};

DatasetWriter::DatasetWriter(const std::filesystem::path& path) : impl_(std::make_unique<Impl>()) {
  io::ensure_parent(path);
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) throw DataError("cannot open '" + path.string() + "' for writing");
  io::ByteWriter w;
  encode_header(w, 0);
  impl_->out.write(reinterpret_cast<const char*>(w.bytes().data()),
                   static_cast<std::streamsize>(w.bytes().size()));
}

DatasetWriter::~DatasetWriter() {
  try {
    close();
  } catch (...) {
  }
}

void DatasetWriter::append(const LabeledFrame& frame) {
  if (!impl_->open) throw ContractError("DatasetWriter: append after close");
  if (impl_->count == 0xFFFFFFFFu) throw DataError("too many frames for the dataset format");
  io::ByteWriter w;
  encode_frame(w, frame);
  impl_->out.write(reinterpret_cast<const char*>(w.bytes().data()),
                   static_cast<std::streamsize>(w.bytes().size()));
  ++impl_->count;
}

void DatasetWriter::close() {
  if (!impl_ || !impl_->open) return;
  impl_->open = false;
  io::ByteWriter w;
  w.u32(impl_->count);
  impl_->out.seekp(8);
  impl_->out.write(reinterpret_cast<const char*>(w.bytes().data()), 4);
  impl_->out.close();
  if (!impl_->out) throw DataError("failed finalizing dataset file");
}

}  // namespace aitvit::signals
