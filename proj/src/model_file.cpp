// SPDX-License-Identifier: Apache-2.0
#include "fastgrnn/model_file.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <iterator>

namespace fastgrnn {

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'G', 'R', 'N'};
constexpr std::size_t kSizeFieldOffset = 8;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
  void dim(Index v, const char* what) {
    if (v < 0 || v > 65535) throw FormatError(std::string(what) + " does not fit the u16 header field");
    u16(static_cast<std::uint16_t>(v));
  }
  void patch_u32(std::size_t at, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    const auto v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = b_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::span<const std::uint8_t> rest() const { return b_.subspan(pos_); }
  void skip(std::size_t n) { take(n); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw FormatError("model file truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

struct Header {
  FileKind kind = FileKind::Checkpoint;
  Arch arch = Arch::FastGrnn;
  Index D = 0, H = 0, L = 0, T = 0, rank_w = 0, rank_u = 0;
  Nonlin nonlin = Nonlin::Tanh;
  Nonlin gate = Nonlin::Sigmoid;
  Head head = Head::Softmax;
  std::optional<NormStats> norm;
};

void write_header(Writer& w, const Header& h) {
  for (std::uint8_t c : kMagic) w.u8(c);
  w.u16(kModelFileVersion);
  w.u8(static_cast<std::uint8_t>(h.kind));
  w.u8(static_cast<std::uint8_t>(h.arch));
  w.u32(0);  // total size, patched at the end
  w.dim(h.D, "input dimension");
  w.dim(h.H, "hidden dimension");
  w.dim(h.L, "class count");
  w.dim(h.T, "horizon");
  w.dim(h.rank_w, "rank_w");
  w.dim(h.rank_u, "rank_u");
  w.u8(static_cast<std::uint8_t>(h.nonlin));
  w.u8(static_cast<std::uint8_t>(h.gate));
  w.u8(static_cast<std::uint8_t>(h.head));
  w.u8(0);
  w.u8(h.norm ? 1 : 0);
  if (h.norm) {
    if (static_cast<Index>(h.norm->mean.size()) != h.D || static_cast<Index>(h.norm->std.size()) != h.D) {
      throw FormatError("normalization stats do not match the input dimension");
    }
    for (double v : h.norm->mean) w.f32(static_cast<float>(v));
    for (double v : h.norm->std) w.f32(static_cast<float>(v));
  }
}

template <class E>
E checked_enum(std::uint8_t v, std::uint8_t max, const char* what) {
  if (v > max) throw FormatError(std::string("bad ") + what + " tag " + std::to_string(v));
  return static_cast<E>(v);
}

/// Verifies magic, version, size field and CRC, then parses the header.
Header read_header(Reader& r, std::span<const std::uint8_t> all) {
  if (all.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), all.begin())) {
    throw FormatError("bad magic: not an FGRN model file");
  }
  r.skip(4);
  const std::uint16_t version = r.u16();
  if (version != kModelFileVersion) {
    throw FormatError("unsupported model file version " + std::to_string(version) + " (expected " +
                      std::to_string(kModelFileVersion) + ")");
  }
  Header h;
  h.kind = checked_enum<FileKind>(r.u8(), 1, "file kind");
  h.arch = checked_enum<Arch>(r.u8(), 3, "architecture");
  const std::uint32_t total = r.u32();
  if (total != all.size()) {
    throw FormatError("size field says " + std::to_string(total) + " bytes, file has " + std::to_string(all.size()));
  }
  if (all.size() < 4) throw FormatError("model file truncated");
  const std::uint32_t stored_crc = Reader(all.subspan(all.size() - 4)).u32();
  if (crc32_of(all.first(all.size() - 4)) != stored_crc) throw FormatError("checksum mismatch");
  h.D = r.u16();
  h.H = r.u16();
  h.L = r.u16();
  h.T = r.u16();
  h.rank_w = r.u16();
  h.rank_u = r.u16();
  h.nonlin = checked_enum<Nonlin>(r.u8(), 4, "nonlinearity");
  h.gate = checked_enum<Nonlin>(r.u8(), 4, "gate nonlinearity");
  h.head = checked_enum<Head>(r.u8(), 1, "head");
  r.u8();
  const std::uint8_t has_norm = r.u8();
  if (has_norm > 1) throw FormatError("bad normalization flag");
  if (has_norm) {
    NormStats s;
    for (Index i = 0; i < h.D; ++i) s.mean.push_back(r.f32());
    for (Index i = 0; i < h.D; ++i) s.std.push_back(r.f32());
    h.norm = s;
  }
  return h;
}

std::vector<std::uint8_t> finish(Writer& w) {
  auto& buf = w.buffer();
  const std::size_t total = buf.size() + 4;
  if (total > UINT32_MAX) throw FormatError("model file too large");
  w.patch_u32(kSizeFieldOffset, static_cast<std::uint32_t>(total));
  w.u32(crc32_of(buf));
  return std::move(buf);
}

std::size_t bitmap_bytes(Index n) { return static_cast<std::size_t>((n + 7) / 8); }

void write_bitmap(Writer& w, const std::vector<bool>& bits) {
  std::vector<std::uint8_t> out(bitmap_bytes(static_cast<Index>(bits.size())), 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  w.bytes(out);
}

std::vector<bool> read_bitmap(Reader& r, Index n) {
  const auto raw = r.take(bitmap_bytes(n));
  std::vector<bool> bits(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (raw[i / 8] >> (i % 8)) & 1u;
  return bits;
}

}  // namespace

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t off = 0;
  while (off < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - off, 1u << 30));
    crc = crc32(crc, bytes.data() + off, chunk);
    off += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

// -- float checkpoints ------------------------------------------------------

ModelD round_to_float32(const ModelD& m) {
  ModelD out = m;
  for_each_tensor(out, [](const std::string&, auto t) {
    for (Index i = 0; i < t.rows(); ++i)
      for (Index j = 0; j < t.cols(); ++j) t(i, j) = static_cast<double>(static_cast<float>(t(i, j)));
  });
  return out;
}

namespace {

Header header_for(const ModelD& m, Index horizon, const std::optional<NormStats>& norm, FileKind kind) {
  Header h;
  h.kind = kind;
  h.arch = m.arch();
  h.D = m.input_dim();
  h.H = m.hidden_dim();
  h.L = m.num_classes();
  h.T = horizon;
  h.head = m.classifier.head;
  h.norm = norm;
  std::visit(Overloaded{
                 [&](const RnnParams<double>& p) {
                   h.nonlin = Nonlin::Tanh;
                   h.rank_w = p.W.factored ? p.W.rank() : 0;
                   h.rank_u = p.U.factored ? p.U.rank() : 0;
                 },
                 [&](const FastGrnnParams<double>& p) {
                   h.nonlin = p.update_nonlin;
                   h.gate = p.gate_nonlin;
                   h.rank_w = p.W.factored ? p.W.rank() : 0;
                   h.rank_u = p.U.factored ? p.U.rank() : 0;
                 },
                 [&](const auto& p) {
                   h.nonlin = p.nonlin;
                   h.rank_w = p.W.factored ? p.W.rank() : 0;
                   h.rank_u = p.U.factored ? p.U.rank() : 0;
                 },
             },
             m.cell);
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  Writer w;
  write_header(w, header_for(ck.model, ck.horizon, ck.norm, FileKind::Checkpoint));
  Index count = 0;
  for_each_tensor(ck.model, [&](const std::string&, auto) { ++count; });
  w.dim(count, "tensor count");
  for (const auto& [name, mask] : ck.masks) {
    bool found = false;
    for_each_tensor(ck.model, [&](const std::string& n, auto t) {
      if (n == name) {
        found = true;
        if (t.rows() != mask.rows() || t.cols() != mask.cols()) throw FormatError("mask shape differs for " + name);
      }
    });
    if (!found) throw FormatError("mask for unknown tensor '" + name + "'");
  }
  for_each_tensor(ck.model, [&](const std::string& name, auto t) {
    if (name.size() > 255) throw FormatError("tensor name too long");
    w.u8(static_cast<std::uint8_t>(name.size()));
    w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()));
    w.dim(t.rows(), "tensor rows");
    w.dim(t.cols(), "tensor cols");
    for (Index i = 0; i < t.rows(); ++i)
      for (Index j = 0; j < t.cols(); ++j) w.f32(static_cast<float>(t(i, j)));
    const auto it = ck.masks.find(name);
    w.u8(it != ck.masks.end() ? 1 : 0);
    if (it != ck.masks.end()) {
      std::vector<bool> bits;
      for (Index i = 0; i < t.rows(); ++i)
        for (Index j = 0; j < t.cols(); ++j) bits.push_back(it->second(i, j));
      write_bitmap(w, bits);
    }
  });
  return finish(w);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const Header h = read_header(r, bytes);
  if (h.kind != FileKind::Checkpoint) throw FormatError("file is a quantized model, not a checkpoint");
  ModelShape shape;
  shape.arch = h.arch;
  shape.input_dim = h.D;
  shape.hidden_dim = h.H;
  shape.num_classes = h.L;
  shape.rank_w = h.rank_w;
  shape.rank_u = h.rank_u;
  shape.horizon = std::max<Index>(h.T, 2);
  shape.nonlin = h.nonlin;
  shape.gate_nonlin = h.gate;
  shape.head = h.head;
  Checkpoint ck;
  Rng skeleton_rng(0);
  try {
    ck.model = init_model<double>(shape, skeleton_rng);
  } catch (const std::exception& e) {
    throw FormatError(std::string("inconsistent header: ") + e.what());
  }
  ck.norm = h.norm;
  ck.horizon = h.T;
  const Index count = r.u16();
  Index seen = 0;
  for_each_tensor(ck.model, [&](const std::string& name, auto t) {
    if (seen++ >= count) throw FormatError("file has fewer tensors than the architecture needs");
    const std::uint8_t len = r.u8();
    const auto nb = r.take(len);
    const std::string stored(nb.begin(), nb.end());
    if (stored != name) throw FormatError("expected tensor '" + name + "', found '" + stored + "'");
    const Index rows = r.u16();
    const Index cols = r.u16();
    if (rows != t.rows() || cols != t.cols()) {
      throw FormatError("tensor '" + name + "' is " + shape_string(rows, cols) + ", expected " +
                        shape_string(t.rows(), t.cols()));
    }
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) t(i, j) = static_cast<double>(r.f32());
    const std::uint8_t has_mask = r.u8();
    if (has_mask > 1) throw FormatError("bad mask flag for '" + name + "'");
    if (has_mask) {
      const std::vector<bool> bits = read_bitmap(r, rows * cols);
      MaskArray m(rows, cols);
      for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = bits[static_cast<std::size_t>(i * cols + j)];
      ck.masks.emplace(name, std::move(m));
    }
  });
  if (seen != count) throw FormatError("file has more tensors than the architecture needs");
  if (r.rest().size() != 4) throw FormatError("trailing bytes after the tensor blocks");
  return ck;
}

// -- quantized exports ------------------------------------------------------

const char* to_string(SparseEncoding e) {
  switch (e) {
    case SparseEncoding::Dense: return "dense";
    case SparseEncoding::RowIndexed: return "row-indexed";
    case SparseEncoding::Bitmap: return "bitmap";
  }
  return "?";
}

std::size_t payload_size(const QuantizedTensor& t, SparseEncoding e) {
  const auto n = static_cast<std::size_t>(t.rows * t.cols);
  const auto nnz = static_cast<std::size_t>(t.nnz());
  switch (e) {
    case SparseEncoding::Dense: return n;
    case SparseEncoding::RowIndexed: {
      const std::size_t count_bytes = t.cols <= 255 ? 1 : 2;
      const std::size_t index_bytes = t.cols <= 256 ? 1 : 2;
      return static_cast<std::size_t>(t.rows) * count_bytes + nnz * (index_bytes + 1);
    }
    case SparseEncoding::Bitmap: return bitmap_bytes(t.rows * t.cols) + nnz;
  }
  return n;
}

EncodingPolicy parse_encoding_policy(const std::string& name) {
  if (name == "smallest") return EncodingPolicy::Smallest;
  if (name == "byte-index") return EncodingPolicy::ByteIndex;
  throw std::invalid_argument("unknown encoding policy '" + name + "' (expected smallest or byte-index)");
}

const char* to_string(EncodingPolicy p) { return p == EncodingPolicy::ByteIndex ? "byte-index" : "smallest"; }

SparseEncoding choose_encoding(const QuantizedTensor& t, EncodingPolicy policy) {
  SparseEncoding best = SparseEncoding::Dense;
  for (SparseEncoding e : {SparseEncoding::RowIndexed, SparseEncoding::Bitmap}) {
    if (e == SparseEncoding::Bitmap && policy == EncodingPolicy::ByteIndex) continue;
    if (payload_size(t, e) < payload_size(t, best)) best = e;
  }
  return best;
}

std::vector<std::uint8_t> encode_payload(const QuantizedTensor& t, SparseEncoding e) {
  Writer w;
  const auto at = [&](Index i, Index j) { return t.values[static_cast<std::size_t>(i * t.cols + j)]; };
  switch (e) {
    case SparseEncoding::Dense:
      for (std::int8_t v : t.values) w.u8(static_cast<std::uint8_t>(v));
      break;
    case SparseEncoding::RowIndexed: {
      for (Index i = 0; i < t.rows; ++i) {
        std::uint16_t c = 0;
        for (Index j = 0; j < t.cols; ++j) c += at(i, j) != 0;
        if (t.cols <= 255) w.u8(static_cast<std::uint8_t>(c));
        else w.u16(c);
      }
      for (Index i = 0; i < t.rows; ++i)
        for (Index j = 0; j < t.cols; ++j)
          if (at(i, j) != 0) {
            if (t.cols <= 256) w.u8(static_cast<std::uint8_t>(j));
            else w.u16(static_cast<std::uint16_t>(j));
          }
      for (std::int8_t v : t.values)
        if (v != 0) w.u8(static_cast<std::uint8_t>(v));
      break;
    }
    case SparseEncoding::Bitmap: {
      std::vector<bool> bits;
      for (std::int8_t v : t.values) bits.push_back(v != 0);
      write_bitmap(w, bits);
      for (std::int8_t v : t.values)
        if (v != 0) w.u8(static_cast<std::uint8_t>(v));
      break;
    }
  }
  return std::move(w.buffer());
}

std::vector<std::int8_t> decode_payload(std::span<const std::uint8_t> bytes, Index rows, Index cols, SparseEncoding e,
                                        std::size_t& consumed) {
  Reader r(bytes);
  const auto n = static_cast<std::size_t>(rows * cols);
  std::vector<std::int8_t> out(n, 0);
  switch (e) {
    case SparseEncoding::Dense:
      for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::int8_t>(r.u8());
      break;
    case SparseEncoding::RowIndexed: {
      std::vector<std::size_t> counts(static_cast<std::size_t>(rows));
      std::size_t nnz = 0;
      for (auto& c : counts) {
        c = cols <= 255 ? r.u8() : r.u16();
        if (c > static_cast<std::size_t>(cols)) throw FormatError("row count exceeds the column count");
        nnz += c;
      }
      std::vector<std::size_t> pos;
      pos.reserve(nnz);
      for (Index i = 0; i < rows; ++i) {
        std::size_t prev = 0;
        for (std::size_t k = 0; k < counts[static_cast<std::size_t>(i)]; ++k) {
          const std::size_t j = cols <= 256 ? r.u8() : r.u16();
          if (j >= static_cast<std::size_t>(cols) || (k > 0 && j <= prev)) {
            throw FormatError("column indices must be increasing and in range");
          }
          prev = j;
          pos.push_back(static_cast<std::size_t>(i * cols) + j);
        }
      }
      for (std::size_t p : pos) {
        out[p] = static_cast<std::int8_t>(r.u8());
        if (out[p] == 0) throw FormatError("explicit zero in a sparse block");
      }
      break;
    }
    case SparseEncoding::Bitmap: {
      const std::vector<bool> bits = read_bitmap(r, rows * cols);
      for (std::size_t i = 0; i < n; ++i)
        if (bits[i]) {
          out[i] = static_cast<std::int8_t>(r.u8());
          if (out[i] == 0) throw FormatError("explicit zero in a sparse block");
        }
      break;
    }
  }
  consumed = r.pos();
  return out;
}

namespace {

constexpr std::size_t kQuantBlockHeader = 1 + 2 + 2 + 1 + 4;

Header header_for(const QuantizedModel& qm) {
  Header h;
  h.kind = FileKind::Quantized;
  h.arch = qm.arch;
  h.D = qm.input_dim;
  h.H = qm.hidden_dim;
  h.L = qm.num_classes;
  h.T = qm.horizon;
  h.rank_w = qm.rank_w;
  h.rank_u = qm.rank_u;
  h.nonlin = qm.nonlin;
  h.gate = qm.gate_nonlin;
  h.head = qm.head;
  h.norm = qm.norm;
  return h;
}

}  // namespace

std::vector<std::uint8_t> encode_quantized(const QuantizedModel& qm, EncodingPolicy policy) {
  Writer w;
  write_header(w, header_for(qm));
  w.u8(qm.input_shift);
  w.u8(qm.mid_frac_w);
  w.u8(qm.mid_frac_u);
  w.i32(qm.g0);
  w.i32(qm.g1);
  const Index head_rows = qm.head == Head::Logistic ? 1 : qm.num_classes;
  if (static_cast<Index>(qm.b_out.size()) != head_rows) throw FormatError("head bias length differs from the head");
  for (std::int32_t b : qm.b_out) w.i32(b);
  w.dim(static_cast<Index>(qm.blocks.size()), "block count");
  for (const auto& b : qm.blocks) {
    const SparseEncoding e = choose_encoding(b.tensor, policy);
    w.u8(static_cast<std::uint8_t>(b.id));
    w.dim(b.tensor.rows, "block rows");
    w.dim(b.tensor.cols, "block cols");
    w.u8(static_cast<std::uint8_t>(e));
    w.f32(b.tensor.scale);
    w.bytes(encode_payload(b.tensor, e));
  }
  return finish(w);
}

QuantizedModel decode_quantized(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const Header h = read_header(r, bytes);
  if (h.kind != FileKind::Quantized) throw FormatError("file is a float checkpoint, not a quantized model");
  QuantizedModel qm;
  qm.arch = h.arch;
  qm.input_dim = h.D;
  qm.hidden_dim = h.H;
  qm.num_classes = h.L;
  qm.horizon = h.T;
  qm.rank_w = h.rank_w;
  qm.rank_u = h.rank_u;
  qm.nonlin = h.nonlin;
  qm.gate_nonlin = h.gate;
  qm.head = h.head;
  qm.norm = h.norm;
  qm.input_shift = r.u8();
  qm.mid_frac_w = r.u8();
  qm.mid_frac_u = r.u8();
  qm.g0 = r.i32();
  qm.g1 = r.i32();
  const Index head_rows = qm.head == Head::Logistic ? 1 : qm.num_classes;
  for (Index i = 0; i < head_rows; ++i) qm.b_out.push_back(r.i32());
  const std::uint16_t count = r.u16();
  for (std::uint16_t k = 0; k < count; ++k) {
    QuantizedBlock b;
    b.id = checked_enum<QTensorId>(r.u8(), 8, "tensor id");
    b.tensor.rows = r.u16();
    b.tensor.cols = r.u16();
    const auto e = checked_enum<SparseEncoding>(r.u8(), 2, "encoding");
    b.tensor.scale = r.f32();
    std::size_t used = 0;
    const auto rest = r.rest();
    b.tensor.values = decode_payload(rest.first(rest.size() >= 4 ? rest.size() - 4 : 0), b.tensor.rows,
                                     b.tensor.cols, e, used);
    r.skip(used);
    qm.blocks.push_back(std::move(b));
  }
  if (r.rest().size() != 4) throw FormatError("trailing bytes after the tensor blocks");
  return qm;
}

SizeBreakdown quantized_size(const QuantizedModel& qm, EncodingPolicy policy) {
  SizeBreakdown s;
  std::size_t header = 4 + 2 + 1 + 1 + 4 + 6 * 2 + 4 + 1;
  if (qm.norm) header += 2 * 4 * static_cast<std::size_t>(qm.input_dim);
  header += 3 + 4 + 4 + 4 * qm.b_out.size();
  header += 2;  // block count
  header += 4;  // CRC
  s.header_bytes = header;
  s.total_bytes = header;
  for (const auto& b : qm.blocks) {
    BlockSize bs;
    bs.name = to_string(b.id);
    bs.encoding = choose_encoding(b.tensor, policy);
    bs.rows = b.tensor.rows;
    bs.cols = b.tensor.cols;
    bs.nnz = b.tensor.nnz();
    bs.bytes = kQuantBlockHeader + payload_size(b.tensor, bs.encoding);
    s.total_bytes += bs.bytes;
    s.blocks.push_back(bs);
  }
  return s;
}

// -- files ------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

FileKind peek_kind(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError("bad magic: not an FGRN model file");
  }
  return checked_enum<FileKind>(bytes[6], 1, "file kind");
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) { write_file(path, encode_checkpoint(ck)); }
Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }
void save_quantized(const std::string& path, const QuantizedModel& qm, EncodingPolicy policy) {
  write_file(path, encode_quantized(qm, policy));
}
QuantizedModel load_quantized(const std::string& path) { return decode_quantized(read_file(path)); }

}  // namespace fastgrnn
