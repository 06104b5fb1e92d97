// SPDX-License-Identifier: Apache-2.0
#include "fastgrnn/diagnostics.hpp"

#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>

namespace fastgrnn {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_diagonals(const MatrixD& U, const std::vector<VectorD>& d_list, Index t) {
  if (U.rows() != U.cols()) throw DimensionError("U must be square, got " + shape_string(U.rows(), U.cols()));
  const auto T = static_cast<Index>(d_list.size());
  if (T < 1) throw DimensionError("need at least one D_k");
  if (t < 1 || t > T) throw DimensionError("t = " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  for (std::size_t k = 0; k < d_list.size(); ++k) {
    if (d_list[k].size() != U.rows()) {
      throw DimensionError("D_" + std::to_string(k + 1) + " has length " + std::to_string(d_list[k].size()) +
                           ", expected " + std::to_string(U.rows()));
    }
  }
}

// JSON has no infinities; non-finite values travel as strings.
nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double number(const nlohmann::json& j) {
  if (j.is_number()) return j.get<double>();
  const std::string s = j.get<std::string>();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw std::invalid_argument("bad number '" + s + "' in report");
}

nlohmann::json numbers(const std::vector<double>& v) {
  nlohmann::json a = nlohmann::json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

std::vector<double> numbers(const nlohmann::json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(number(x));
  return v;
}

/// Rescales m to the requested spectral norm.
MatrixD with_spectral_norm(MatrixD m, double target) {
  const double n = spectral_norm(m);
  if (n == 0.0) throw NumericError("cannot rescale a zero matrix");
  m *= target / n;
  return m;
}

}  // namespace

MatrixD build_M(const MatrixD& U, const std::vector<VectorD>& d_list, double alpha, double beta, Index t) {
  check_diagonals(U, d_list, t);
  const auto T = static_cast<Index>(d_list.size());
  const Index n = U.rows();
  const MatrixD Ut = U.transpose();
  MatrixD M = MatrixD::Identity(n, n);
  for (Index k = t; k <= T - 1; ++k) {
    MatrixD factor = alpha * (Ut * d_list[static_cast<std::size_t>(k)].asDiagonal());  // D_{k+1}
    factor.diagonal().array() += beta;
    M = M * factor;
  }
  return M;
}

double max_transfer_norm(const MatrixD& U, const std::vector<VectorD>& d_list, Index t) {
  check_diagonals(U, d_list, t);
  const auto T = static_cast<Index>(d_list.size());
  const MatrixD Ut = U.transpose();
  double best = 0.0;
  for (Index k = t; k <= T - 1; ++k) {
    best = std::max(best, spectral_norm(Ut * d_list[static_cast<std::size_t>(k)].asDiagonal()));
  }
  return best;
}

double condition_bound(const MatrixD& U, const std::vector<VectorD>& d_list, double alpha, double beta, Index t) {
  check_diagonals(U, d_list, t);
  const auto T = static_cast<Index>(d_list.size());
  if (alpha == 0.0 || T == t) return 1.0;
  if (beta == 0.0) return kInf;
  const double q = (alpha / beta) * max_transfer_norm(U, d_list, t);
  if (q >= 1.0) return kInf;
  return std::pow((1.0 + q) / (1.0 - q), static_cast<double>(T - t));
}

double empirical_condition(const MatrixD& M) {
  if (M.rows() != M.cols() || M.rows() == 0) throw DimensionError("empirical_condition: need a square matrix");
  const Eigen::MatrixXd m = M;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  const double smin = s(s.size() - 1);
  if (smin < 1e-300) return kInf;
  return s(0) / smin;
}

std::vector<VectorD> derivative_diagonals(const ForwardTrace<double>& trace, Index column) {
  if (column < 0 || column >= trace.batch()) throw DimensionError("derivative_diagonals: column out of range");
  std::vector<VectorD> out;
  out.reserve(trace.deriv.size());
  for (const auto& d : trace.deriv) out.push_back(d.col(column));
  return out;
}

std::string to_json(const ConditioningReport& r) {
  nlohmann::ordered_json j;
  j["T"] = r.T;
  j["t"] = r.t;
  j["alpha"] = number(r.alpha);
  j["beta"] = number(r.beta);
  j["transfer_norms"] = numbers(r.transfer_norms);
  j["bound"] = number(r.bound);
  j["kappa"] = number(r.kappa);
  j["vacuous"] = r.vacuous;
  j["gradient_norms"] = numbers(r.gradient_norms);
  return j.dump();
}

ConditioningReport conditioning_report_from_json(const std::string& s) {
  const auto j = nlohmann::json::parse(s);
  ConditioningReport r;
  r.T = j.at("T").get<Index>();
  r.t = j.at("t").get<Index>();
  r.alpha = number(j.at("alpha"));
  r.beta = number(j.at("beta"));
  r.transfer_norms = numbers(j.at("transfer_norms"));
  r.bound = number(j.at("bound"));
  r.kappa = number(j.at("kappa"));
  r.vacuous = j.at("vacuous").get<bool>();
  r.gradient_norms = numbers(j.at("gradient_norms"));
  return r;
}

ConditioningReport condition_study(const ConditionInstance& spec) {
  if (spec.T < 1 || spec.hidden < 1 || spec.input_dim < 1) throw std::invalid_argument("condition study: bad sizes");
  Rng rng(spec.seed, 0xc0d);
  ModelShape shape;
  shape.arch = Arch::FastRnn;
  shape.input_dim = spec.input_dim;
  shape.hidden_dim = spec.hidden;
  shape.horizon = spec.T;
  shape.nonlin = Nonlin::HardSigmoid;
  shape.head = Head::Logistic;
  Rng init_rng = rng.split(1);
  ModelD model = init_model<double>(shape, init_rng);
  auto& p = std::get<FastRnnParams<double>>(model.cell);
  Rng u_rng = rng.split(2);
  p.U = Weight<double>::from_dense(with_spectral_norm(normal_matrix<double>(spec.hidden, spec.hidden, 1.0, u_rng), spec.u_norm));
  // The D_k come from a pass at alpha = 1/T, beta = 1 - 1/T.
  p.alpha_raw = logit(1.0 / std::max<double>(2.0, static_cast<double>(spec.T)));
  p.beta_raw = logit(1.0 - 1.0 / std::max<double>(2.0, static_cast<double>(spec.T)));

  Rng x_rng = rng.split(3);
  Sequence<double> xs;
  for (Index k = 0; k < spec.T; ++k) xs.push_back(normal_matrix<double>(spec.input_dim, 1, 1.0, x_rng));
  const ForwardResult<double> fw = forward_sequence(model, xs);
  const std::vector<VectorD> d = derivative_diagonals(fw.trace);
  const MatrixD U = p.U.composed();

  ConditioningReport r;
  r.T = spec.T;
  r.t = spec.t;
  for (Index k = spec.t; k <= spec.T - 1; ++k) {
    r.transfer_norms.push_back(spectral_norm(U.transpose() * d[static_cast<std::size_t>(k)].asDiagonal()));
  }
  const double maxnorm = max_transfer_norm(U, d, spec.t);
  r.alpha = spec.alpha ? *spec.alpha : (maxnorm > 0.0 ? 1.0 / (static_cast<double>(spec.T) * maxnorm) : 0.0);
  r.beta = spec.beta ? *spec.beta : 1.0 - r.alpha;
  r.bound = condition_bound(U, d, r.alpha, r.beta, spec.t);
  r.vacuous = std::isinf(r.bound);
  r.kappa = empirical_condition(build_M(U, d, r.alpha, r.beta, spec.t));
  const std::vector<int> label = {1};
  r.gradient_norms = gradient_norm_spectrum(model, fw.trace, label);
  return r;
}

std::vector<double> gradient_norm_spectrum(const ModelD& model, const ForwardTrace<double>& trace,
                                           std::span<const int> labels) {
  BackwardOptions opt;
  opt.record_state_gradients = true;
  const BackwardResult<double> b = backward_sequence(model, trace, labels, opt);
  return b.state_gradient_norms;
}

std::vector<double> random_gradient_spectrum(const SpectrumSpec& spec) {
  Rng rng(spec.seed, 0x5bec);
  ModelShape shape;
  shape.arch = spec.arch;
  shape.input_dim = spec.input_dim;
  shape.hidden_dim = spec.hidden;
  shape.horizon = spec.T;
  shape.nonlin = spec.nonlin;
  shape.head = Head::Logistic;
  Rng init_rng = rng.split(1);
  ModelD model = init_model<double>(shape, init_rng);
  if (spec.u_norm) {
    Rng u_rng = rng.split(2);
    MatrixD U = with_spectral_norm(normal_matrix<double>(spec.hidden, spec.hidden, 1.0, u_rng), *spec.u_norm);
    std::visit([&](auto& c) { c.U = Weight<double>::from_dense(U); }, model.cell);
  }
  Rng x_rng = rng.split(3);
  Sequence<double> xs;
  for (Index k = 0; k < spec.T; ++k) xs.push_back(normal_matrix<double>(spec.input_dim, 1, 1.0, x_rng));
  const ForwardResult<double> fw = forward_sequence(model, xs);
  const std::vector<int> label = {1};
  return gradient_norm_spectrum(model, fw.trace, label);
}

double spectrum_ratio(const std::vector<double>& norms) {
  if (norms.empty()) throw std::invalid_argument("spectrum_ratio: empty spectrum");
  const auto [mn, mx] = std::minmax_element(norms.begin(), norms.end());
  if (*mn == 0.0) return kInf;
  return *mx / *mn;
}

std::string to_json(const AlphaBetaRecord& r) {
  nlohmann::ordered_json j;
  j["dataset"] = r.dataset;
  j["T"] = r.T;
  j["seed"] = r.seed;
  j["alpha"] = number(r.alpha);
  j["beta"] = number(r.beta);
  j["ratio"] = number(r.ratio);
  j["rel_error"] = number(r.rel_error);
  j["val_accuracy"] = number(r.val_accuracy);
  j["diverged"] = r.diverged;
  return j.dump();
}

AlphaBetaRecord alpha_beta_record_from_json(const std::string& s) {
  const auto j = nlohmann::json::parse(s);
  AlphaBetaRecord r;
  r.dataset = j.at("dataset").get<std::string>();
  r.T = j.at("T").get<Index>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.alpha = number(j.at("alpha"));
  r.beta = number(j.at("beta"));
  r.ratio = number(j.at("ratio"));
  r.rel_error = number(j.at("rel_error"));
  r.val_accuracy = number(j.at("val_accuracy"));
  r.diverged = j.at("diverged").get<bool>();
  return r;
}

std::vector<AlphaBetaRecord> alpha_beta_study(const AlphaBetaStudy& study) {
  std::vector<AlphaBetaRecord> out;
  for (Index T : study.horizons) {
    AlphaBetaRecord rec;
    rec.dataset = to_string(study.task);
    rec.T = T;
    rec.seed = study.train.seed;
    const SequenceDataset all = synth_task(study.task, T, study.samples, study.train.seed, study.synth);
    auto [train, val] = split_train_val(all, 0.8, study.train.seed);
    ModelShape shape;
    shape.arch = Arch::FastRnn;
    shape.input_dim = all.D;
    shape.hidden_dim = study.hidden;
    shape.num_classes = 2;
    shape.horizon = T;
    TrainConfig cfg = study.train;
    cfg.e2 = 0;
    cfg.e3 = 0;
    const SparsityPlan dense;
    try {
      const TrainedModel tm = train_full(init_for_plan(shape, dense, cfg.seed), train, val, dense, cfg);
      const auto& p = std::get<FastRnnParams<double>>(tm.model.cell);
      rec.alpha = p.alpha();
      rec.beta = p.beta();
      rec.val_accuracy = tm.best_val_metric;
    } catch (const NumericError&) {
      rec.diverged = true;
      rec.alpha = rec.beta = std::numeric_limits<double>::quiet_NaN();
    }
    rec.ratio = rec.alpha / rec.beta;
    rec.rel_error = std::abs(rec.beta - (1.0 - rec.alpha)) / rec.beta;
    out.push_back(rec);
  }
  return out;
}

}  // namespace fastgrnn
