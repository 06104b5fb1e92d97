// SPDX-License-Identifier: Apache-2.0
//
// "FGRN" little-endian model files: float32 training checkpoints and int8
// quantized exports. Layout:
//
//   "FGRN" u16 version u8 kind u8 arch u32 total_size
//   u16 D u16 hidden u16 L u16 T u16 rank_w u16 rank_u
//   u8 nonlin u8 gate_nonlin u8 head u8 reserved
//   u8 has_norm [f32 mean[D] f32 std[D]]
//   kind 1 only: u8 input_shift u8 mid_frac_w u8 mid_frac_u i32 g0 i32 g1
//                i32 b_out[head rows]
//   u16 block_count, blocks
//   u32 CRC-32 of every preceding byte
//
// Checkpoint block: u8 name_len, name, u16 rows, u16 cols, f32[rows*cols]
// row-major, u8 has_mask [mask bitmap]. Quantized block: u8 id, u16 rows,
// u16 cols, u8 encoding, f32 scale, payload (see SparseEncoding).
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fastgrnn/compression.hpp"
#include "fastgrnn/data.hpp"
#include "fastgrnn/quantize.hpp"

namespace fastgrnn {

inline constexpr std::uint16_t kModelFileVersion = 1;

enum class FileKind : std::uint8_t { Checkpoint = 0, Quantized = 1 };

struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  ModelD model;
  SupportMasks masks;
  std::optional<NormStats> norm;
  Index horizon = 0;
};

/// Float tensors are written as float32; load(save(m)) reproduces m bit for
/// bit once m's values are float32-representable.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Payload layouts of a quantized rows x cols int8 block, nnz nonzeros:
///   Dense:      rows*cols values, row-major.
///   RowIndexed: per-row counts (u8 when cols <= 255, else u16), then the
///               column index of every nonzero in row-major order (u8 when
///               cols <= 256, else u16), then the nonzero values.
///   Bitmap:     ceil(rows*cols / 8) bytes of row-major occupancy bits (LSB
///               first), then the nonzero values.
/// The writer picks the smallest, preferring the lower code on ties.
enum class SparseEncoding : std::uint8_t { Dense = 0, RowIndexed = 1, Bitmap = 2 };

/// Smallest considers every layout; ByteIndex restricts sparse blocks to
/// RowIndexed (Dense is still used when it is smaller).
enum class EncodingPolicy : std::uint8_t { Smallest = 0, ByteIndex = 1 };

EncodingPolicy parse_encoding_policy(const std::string& name);
const char* to_string(EncodingPolicy p);

const char* to_string(SparseEncoding e);
std::size_t payload_size(const QuantizedTensor& t, SparseEncoding e);
SparseEncoding choose_encoding(const QuantizedTensor& t, EncodingPolicy policy = EncodingPolicy::Smallest);
std::vector<std::uint8_t> encode_payload(const QuantizedTensor& t, SparseEncoding e);
/// Decodes a payload; `consumed` receives the number of bytes read.
std::vector<std::int8_t> decode_payload(std::span<const std::uint8_t> bytes, Index rows, Index cols, SparseEncoding e,
                                        std::size_t& consumed);

std::vector<std::uint8_t> encode_quantized(const QuantizedModel& qm, EncodingPolicy policy = EncodingPolicy::Smallest);
QuantizedModel decode_quantized(std::span<const std::uint8_t> bytes);

struct BlockSize {
  std::string name;
  SparseEncoding encoding = SparseEncoding::Dense;
  Index rows = 0;
  Index cols = 0;
  Index nnz = 0;
  std::size_t bytes = 0;  // block header + payload
};

struct SizeBreakdown {
  std::size_t header_bytes = 0;  // everything outside tensor blocks, CRC included
  std::vector<BlockSize> blocks;
  std::size_t total_bytes = 0;
};

/// Computed from the layout rules without serializing; equals
/// encode_quantized(qm, policy).size().
SizeBreakdown quantized_size(const QuantizedModel& qm, EncodingPolicy policy = EncodingPolicy::Smallest);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

FileKind peek_kind(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);
void save_quantized(const std::string& path, const QuantizedModel& qm,
                    EncodingPolicy policy = EncodingPolicy::Smallest);
QuantizedModel load_quantized(const std::string& path);

/// Rounds every tensor to float32 precision, as a save/load cycle would.
ModelD round_to_float32(const ModelD& m);

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes);

}  // namespace fastgrnn
