// SPDX-License-Identifier: Apache-2.0
#include "fastgrnn/quantize.hpp"

#include <algorithm>
#include <cmath>

namespace fastgrnn {

static_assert(static_cast<std::uint8_t>(Nonlin::HardTanh) == integer::kNonlinHardTanh);
static_assert(static_cast<std::uint8_t>(Nonlin::HardSigmoid) == integer::kNonlinHardSigmoid);
static_assert(static_cast<std::uint8_t>(Arch::FastRnn) == integer::kArchFastRnn);
static_assert(static_cast<std::uint8_t>(Arch::FastGrnn) == integer::kArchFastGrnn);
static_assert(static_cast<std::uint8_t>(Head::Logistic) == integer::kHeadLogistic);

namespace {

constexpr double kQ14 = 16384.0;

std::int32_t round_q14(double v) { return static_cast<std::int32_t>(std::lround(v * kQ14)); }

/// Largest fractional-bit count f with bound * 2^f <= 32767, in [0, 24].
std::uint8_t frac_bits_for(double bound) {
  if (!(bound > 0.0)) return 24;
  const double f = std::floor(std::log2(32767.0 / bound));
  return static_cast<std::uint8_t>(std::clamp(f, 0.0, 24.0));
}

double max_row_l1(const MatrixD& m) {
  return m.rows() == 0 ? 0.0 : m.cwiseAbs().rowwise().sum().maxCoeff();
}

}  // namespace

Index QuantizedTensor::nnz() const {
  return static_cast<Index>(std::count_if(values.begin(), values.end(), [](std::int8_t v) { return v != 0; }));
}

QuantizedTensor quantize_tensor(const MatrixD& m) {
  if (!m.allFinite()) throw NumericError("quantize_tensor: non-finite entries");
  QuantizedTensor q;
  q.rows = m.rows();
  q.cols = m.cols();
  const double maxabs = m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
  q.scale = maxabs > 0.0 ? static_cast<float>(maxabs / 127.0) : 1.0f;
  const double s = q.scale;
  q.values.resize(static_cast<std::size_t>(m.size()));
  const MatrixD rm = m;
  for (Index i = 0; i < rm.size(); ++i) {
    // std::round rounds halves away from zero.
    const double r = std::clamp(std::round(rm.data()[i] / s), -127.0, 127.0);
    q.values[static_cast<std::size_t>(i)] = static_cast<std::int8_t>(r);
  }
  return q;
}

MatrixD dequantize(const QuantizedTensor& q) {
  MatrixD out(q.rows, q.cols);
  for (Index i = 0; i < out.size(); ++i) out.data()[i] = static_cast<double>(q.values[static_cast<std::size_t>(i)]) * q.scale;
  return out;
}

integer::Requant make_requant(double ratio) {
  if (!(ratio >= 0.0) || !std::isfinite(ratio)) throw NumericError("make_requant: ratio must be finite and >= 0");
  integer::Requant rq;
  if (ratio == 0.0) return rq;
  int exp = 0;
  const double mant = std::frexp(ratio, &exp);  // ratio = mant * 2^exp, mant in [0.5, 1)
  auto mult = static_cast<std::int64_t>(std::llround(mant * 2147483648.0));
  int shift = 31 - exp;
  if (mult == (std::int64_t{1} << 31)) {
    mult >>= 1;
    --shift;
  }
  if (shift < 1) throw NumericError("make_requant: ratio " + std::to_string(ratio) + " too large");
  if (shift > 62) return rq;
  rq.multiplier = static_cast<std::int32_t>(mult);
  rq.shift = static_cast<std::uint8_t>(shift);
  return rq;
}

double requant_ratio(const integer::Requant& rq) { return std::ldexp(static_cast<double>(rq.multiplier), -rq.shift); }

const char* to_string(QTensorId id) {
  switch (id) {
    case QTensorId::W: return "W";
    case QTensorId::W1: return "W1";
    case QTensorId::W2T: return "W2^T";
    case QTensorId::U: return "U";
    case QTensorId::U1: return "U1";
    case QTensorId::U2T: return "U2^T";
    case QTensorId::BCand: return "b_cand";
    case QTensorId::BGate: return "b_gate";
    case QTensorId::WOut: return "W_out";
  }
  return "?";
}

const QuantizedTensor* QuantizedModel::find(QTensorId id) const {
  for (const auto& b : blocks)
    if (b.id == id) return &b.tensor;
  return nullptr;
}

const QuantizedTensor& QuantizedModel::tensor(QTensorId id) const {
  const QuantizedTensor* t = find(id);
  if (t == nullptr) throw std::invalid_argument(std::string("quantized model lacks tensor ") + to_string(id));
  return *t;
}

QuantizedModel quantize_model(const ModelD& model, const std::optional<NormStats>& norm, Index horizon) {
  const Arch arch = model.arch();
  if (arch != Arch::FastRnn && arch != Arch::FastGrnn) {
    throw PreconditionError(std::string("quantization supports fastrnn and fastgrnn, not ") + to_string(arch));
  }
  for (Nonlin n : nonlinearities(model)) {
    if (!is_piecewise_linear(n)) {
      throw PreconditionError(std::string("model uses the ") + to_string(n) +
                              " nonlinearity; integer inference needs a model trained with hard_tanh / "
                              "hard_sigmoid (retrain with --nonlin hard_tanh)");
    }
  }
  QuantizedModel qm;
  qm.arch = arch;
  qm.input_dim = model.input_dim();
  qm.hidden_dim = model.hidden_dim();
  qm.num_classes = model.num_classes();
  qm.horizon = horizon;
  qm.head = model.classifier.head;
  if (norm) {
    NormStats f;
    for (double v : norm->mean) f.mean.push_back(static_cast<float>(v));
    for (double v : norm->std) f.std.push_back(static_cast<float>(v));
    qm.norm = f;
  }
  const double fold = std::ldexp(1.0, qm.input_shift);

  const Weight<double>* W = nullptr;
  const Weight<double>* U = nullptr;
  std::visit(Overloaded{
                 [&](const FastRnnParams<double>& p) {
                   W = &p.W;
                   U = &p.U;
                   qm.nonlin = p.nonlin;
                   qm.gate_nonlin = p.nonlin;
                   qm.g0 = round_q14(p.alpha());
                   qm.g1 = round_q14(p.beta());
                   qm.blocks.push_back({QTensorId::BCand, quantize_tensor(p.b)});
                 },
                 [&](const FastGrnnParams<double>& p) {
                   W = &p.W;
                   U = &p.U;
                   qm.nonlin = p.update_nonlin;
                   qm.gate_nonlin = p.gate_nonlin;
                   qm.g0 = round_q14(p.zeta());
                   qm.g1 = round_q14(p.nu());
                   qm.blocks.push_back({QTensorId::BCand, quantize_tensor(p.b_h)});
                   qm.blocks.push_back({QTensorId::BGate, quantize_tensor(p.b_z)});
                 },
                 [](const auto&) {},
             },
             model.cell);

  if (W->factored) {
    qm.rank_w = W->rank();
    QuantizedTensor first = quantize_tensor(fold * W->right.transpose());
    qm.mid_frac_w = frac_bits_for(2.0 * max_row_l1(dequantize(first)));
    qm.blocks.push_back({QTensorId::W2T, std::move(first)});
    qm.blocks.push_back({QTensorId::W1, quantize_tensor(W->left)});
  } else {
    qm.blocks.push_back({QTensorId::W, quantize_tensor(fold * W->dense)});
  }
  if (U->factored) {
    qm.rank_u = U->rank();
    QuantizedTensor first = quantize_tensor(U->right.transpose());
    qm.mid_frac_u = frac_bits_for(2.0 * max_row_l1(dequantize(first)));
    qm.blocks.push_back({QTensorId::U2T, std::move(first)});
    qm.blocks.push_back({QTensorId::U1, quantize_tensor(U->left)});
  } else {
    qm.blocks.push_back({QTensorId::U, quantize_tensor(U->dense)});
  }
  QuantizedTensor wout = quantize_tensor(model.classifier.weight);
  const double acc_scale = static_cast<double>(wout.scale) / kQ14;
  for (Index i = 0; i < model.classifier.bias.size(); ++i) {
    const double v = std::round(model.classifier.bias(i) / acc_scale);
    if (std::abs(v) > 1e9) throw NumericError("quantize_model: head bias out of int32 range");
    qm.b_out.push_back(static_cast<std::int32_t>(v));
  }
  qm.blocks.push_back({QTensorId::WOut, std::move(wout)});
  return qm;
}

namespace {

integer::QMatrix to_qmatrix(const QuantizedTensor& t) {
  if (t.rows > 65535 || t.cols > 65535) throw DimensionError("tensor too large for the integer kernel");
  integer::QMatrix m;
  m.rows = static_cast<std::uint16_t>(t.rows);
  m.cols = static_cast<std::uint16_t>(t.cols);
  m.values = t.values;
  return m;
}

integer::QBias to_qbias(const QuantizedTensor& t) {
  integer::QBias b;
  b.values = t.values;
  b.rq = make_requant(static_cast<double>(t.scale) * kQ14);
  return b;
}

integer::QLinear to_qlinear(const QuantizedModel& qm, QTensorId dense, QTensorId first, QTensorId second,
                            std::uint8_t mid_frac) {
  integer::QLinear op;
  if (const QuantizedTensor* d = qm.find(dense)) {
    // acc * s * 2^-14 is the real product; Q1.14 output multiplies by 2^14.
    op.first = to_qmatrix(*d);
    op.out_rq = make_requant(d->scale);
    return op;
  }
  const QuantizedTensor& a = qm.tensor(first);
  const QuantizedTensor& b = qm.tensor(second);
  op.factored = true;
  op.first = to_qmatrix(a);
  op.mid_frac = mid_frac;
  op.first_rq = make_requant(static_cast<double>(a.scale) * std::ldexp(1.0, mid_frac - integer::kActFrac));
  op.second = to_qmatrix(b);
  op.out_rq = make_requant(static_cast<double>(b.scale) * std::ldexp(1.0, integer::kActFrac - mid_frac));
  return op;
}

}  // namespace

integer::IntegerModel to_integer_model(const QuantizedModel& qm) {
  integer::IntegerModel m;
  m.arch = static_cast<std::uint8_t>(qm.arch);
  m.cand_nonlin = static_cast<std::uint8_t>(qm.nonlin);
  m.gate_nonlin = static_cast<std::uint8_t>(qm.gate_nonlin);
  m.head = static_cast<std::uint8_t>(qm.head);
  m.input_dim = static_cast<std::uint16_t>(qm.input_dim);
  m.hidden_dim = static_cast<std::uint16_t>(qm.hidden_dim);
  m.W = to_qlinear(qm, QTensorId::W, QTensorId::W2T, QTensorId::W1, qm.mid_frac_w);
  m.U = to_qlinear(qm, QTensorId::U, QTensorId::U2T, QTensorId::U1, qm.mid_frac_u);
  m.b_cand = to_qbias(qm.tensor(QTensorId::BCand));
  if (qm.arch == Arch::FastGrnn) m.b_gate = to_qbias(qm.tensor(QTensorId::BGate));
  m.g0 = qm.g0;
  m.g1 = qm.g1;
  m.w_out = to_qmatrix(qm.tensor(QTensorId::WOut));
  m.head_rows = m.w_out.rows;
  m.b_out = qm.b_out;
  return m;
}

ModelD dequantized_model(const QuantizedModel& qm) {
  const double unfold = std::ldexp(1.0, -qm.input_shift);
  auto weight = [&](QTensorId dense, QTensorId first, QTensorId second, double f) {
    if (const QuantizedTensor* d = qm.find(dense)) return Weight<double>::from_dense(f * dequantize(*d));
    MatrixD right = f * dequantize(qm.tensor(first)).transpose();
    return Weight<double>::from_factors(dequantize(qm.tensor(second)), std::move(right));
  };
  // Gate constants travel as Q1.14; raw parameters reproduce them via sigmoid.
  auto raw = [](std::int32_t q) {
    const double p = std::clamp(q14_to_double(q), 1e-12, 1.0 - 1e-12);
    return logit(p);
  };
  ModelD m;
  Weight<double> W = weight(QTensorId::W, QTensorId::W2T, QTensorId::W1, unfold);
  Weight<double> U = weight(QTensorId::U, QTensorId::U2T, QTensorId::U1, 1.0);
  const VectorD b_cand = dequantize(qm.tensor(QTensorId::BCand));
  if (qm.arch == Arch::FastRnn) {
    FastRnnParams<double> p;
    p.W = std::move(W);
    p.U = std::move(U);
    p.b = b_cand;
    p.alpha_raw = raw(qm.g0);
    p.beta_raw = raw(qm.g1);
    p.nonlin = qm.nonlin;
    m.cell = std::move(p);
  } else {
    FastGrnnParams<double> p;
    p.W = std::move(W);
    p.U = std::move(U);
    p.b_h = b_cand;
    p.b_z = dequantize(qm.tensor(QTensorId::BGate));
    p.zeta_raw = raw(qm.g0);
    p.nu_raw = raw(qm.g1);
    p.update_nonlin = qm.nonlin;
    p.gate_nonlin = qm.gate_nonlin;
    m.cell = std::move(p);
  }
  const QuantizedTensor& wout = qm.tensor(QTensorId::WOut);
  m.classifier.head = qm.head;
  m.classifier.weight = dequantize(wout);
  m.classifier.bias.resize(static_cast<Index>(qm.b_out.size()));
  for (std::size_t i = 0; i < qm.b_out.size(); ++i) {
    m.classifier.bias(static_cast<Index>(i)) = static_cast<double>(qm.b_out[i]) * wout.scale / kQ14;
  }
  return m;
}

std::vector<std::int16_t> quantize_input(const QuantizedModel& qm, std::span<const double> raw) {
  const auto D = static_cast<std::size_t>(qm.input_dim);
  if (D == 0 || raw.size() % D != 0) throw DimensionError("quantize_input: length is not a multiple of D");
  const double unit = std::ldexp(kQ14, -qm.input_shift);
  std::vector<std::int16_t> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    double v = raw[i];
    if (qm.norm) v = (v - qm.norm->mean[i % D]) / qm.norm->std[i % D];
    out[i] = static_cast<std::int16_t>(std::clamp(std::round(v * unit), -32768.0, 32767.0));
  }
  return out;
}

double q14_to_double(std::int32_t v) { return static_cast<double>(v) / kQ14; }

}  // namespace fastgrnn
