#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mpr/error.hpp"
#include "mpr/robustness/mpr.hpp"

namespace mpr::gp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// SE-ARD hyperparameters: per-feature length scales, process and noise deviations.
struct GPHyperparams {
  VectorXd lengthScales;
  double sigmaRho = 1.0;
  double sigmaDelta = 0.0;

  void validate(Eigen::Index dims) const {
    if (lengthScales.size() != dims) {
      throw InputError("expected " + std::to_string(dims) + " length scales, got " +
                       std::to_string(lengthScales.size()));
    }
    for (Eigen::Index j = 0; j < lengthScales.size(); ++j) {
      if (!(lengthScales[j] > 0.0) || !std::isfinite(lengthScales[j])) {
        throw InputError("length scale " + std::to_string(j) + " must be positive");
      }
    }
    if (!(sigmaRho > 0.0)) throw InputError("process deviation must be positive");
    if (!(sigmaDelta >= 0.0)) throw InputError("noise deviation must be nonnegative");
  }
};

/// k(z, z') = s_rho^2 exp(-1/2 sum_j ((z_j - z'_j) / l_j)^2) + [z == z'] s_delta^2.
inline double kernelEval(const VectorXd& z, const VectorXd& z2, const GPHyperparams& h) {
  if (z.size() != z2.size()) throw InputError("kernel inputs differ in dimension");
  h.validate(z.size());
  const double r2 = ((z - z2).array() / h.lengthScales.array()).square().sum();
  const double noise = (z.array() == z2.array()).all() ? h.sigmaDelta * h.sigmaDelta : 0.0;
  return h.sigmaRho * h.sigmaRho * std::exp(-0.5 * r2) + noise;
}

/// Noise-free part of the kernel between rows of A and rows of B.
inline MatrixXd crossCovariance(const MatrixXd& A, const MatrixXd& B, const GPHyperparams& h) {
  const VectorXd inv = h.lengthScales.array().inverse();
  const MatrixXd As = A * inv.asDiagonal();
  const MatrixXd Bs = B * inv.asDiagonal();
  const VectorXd an = As.rowwise().squaredNorm();
  const VectorXd bn = Bs.rowwise().squaredNorm();
  MatrixXd r2 = (-2.0 * As * Bs.transpose()).colwise() + an;
  r2.rowwise() += bn.transpose();
  // Flushing negligible entries keeps the arithmetic out of subnormal range.
  const Eigen::ArrayXXd e = (-0.5 * r2.array().max(0.0)).exp();
  return (h.sigmaRho * h.sigmaRho) * (e < 1e-250).select(0.0, e).matrix();
}

/// Per-feature affine standardization z -> (z - mean) / scale.
struct Standardization {
  VectorXd mean;
  VectorXd scale;

  static Standardization fit(const MatrixXd& Z) {
    Standardization s;
    s.mean = Z.colwise().mean().transpose();
    s.scale.resize(Z.cols());
    for (Eigen::Index j = 0; j < Z.cols(); ++j) {
      const double var = (Z.col(j).array() - s.mean[j]).square().mean();
      s.scale[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  static Standardization identity(Eigen::Index dims) { return {VectorXd::Zero(dims), VectorXd::Ones(dims)}; }

  MatrixXd apply(const MatrixXd& Z) const {
    return (Z.rowwise() - mean.transpose()) * scale.array().inverse().matrix().asDiagonal();
  }
  VectorXd apply(const VectorXd& z) const { return (z - mean).cwiseQuotient(scale); }
};

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

struct FactorResult {
  Eigen::LLT<MatrixXd> llt;
  double jitter = 0.0;
};

/// Cholesky of K + jitter I, starting at 1e-8 s_rho^2 and growing tenfold up to 1e-2 s_rho^2.
inline FactorResult factorGram(const MatrixXd& K, double sigmaRho, std::optional<double> fixedJitter = std::nullopt) {
  const double s2 = sigmaRho * sigmaRho;
  auto attempt = [&](double jitter, FactorResult& out) {
    MatrixXd Kj = K;
    Kj.diagonal().array() += jitter;
    out.llt.compute(Kj);
    out.jitter = jitter;
    if (out.llt.info() != Eigen::Success) return false;
    const auto d = out.llt.matrixL().toDenseMatrix().diagonal();
    return (d.array() > 0.0).all() && d.allFinite();
  };
  FactorResult out;
  if (fixedJitter) {
    if (!attempt(*fixedJitter, out)) throw NumericalError("Gram matrix factorization failed with the stored jitter");
    return out;
  }
  for (double jitter = 1e-8 * s2; jitter <= 1e-2 * s2 * (1 + 1e-9); jitter *= 10.0) {
    if (attempt(jitter, out)) return out;
  }
  throw NumericalError("Gram matrix factorization failed after maximum jitter");
}

/// Negative-free log marginal likelihood and its gradient with respect to
/// log length scales, log s_rho and log s_delta (in that order).
struct Likelihood {
  double value = -std::numeric_limits<double>::infinity();
  VectorXd gradient;
};

inline Likelihood marginalLikelihood(const MatrixXd& Zs, const VectorXd& y, const GPHyperparams& h,
                                     bool withGradient = true) {
  const Eigen::Index n = Zs.rows(), d = Zs.cols();
  const MatrixXd Kse = crossCovariance(Zs, Zs, h);
  MatrixXd K = Kse;
  K.diagonal().array() += h.sigmaDelta * h.sigmaDelta;
  const FactorResult f = factorGram(K, h.sigmaRho);
  const VectorXd alpha = f.llt.solve(y);
  const MatrixXd& L = f.llt.matrixLLT();
  double logDet = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) logDet += std::log(L(i, i));
  Likelihood out;
  out.value = -0.5 * y.dot(alpha) - logDet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!std::isfinite(out.value)) throw NumericalError("non-finite marginal likelihood");
  if (!withGradient) return out;

  MatrixXd W = f.llt.solve(MatrixXd::Identity(n, n));
  W = alpha * alpha.transpose() - W;
  out.gradient.resize(d + 2);
  const MatrixXd WK = W.cwiseProduct(Kse);
  for (Eigen::Index j = 0; j < d; ++j) {
    const VectorXd c = Zs.col(j) / h.lengthScales[j];
    double g = 0.0;
    for (Eigen::Index b = 0; b < n; ++b) {
      for (Eigen::Index a = 0; a < n; ++a) {
        const double diff = c[a] - c[b];
        g += WK(a, b) * diff * diff;
      }
    }
    out.gradient[j] = 0.5 * g;
  }
  out.gradient[d] = WK.sum();
  out.gradient[d + 1] = h.sigmaDelta * h.sigmaDelta * W.trace();
  return out;
}

struct TrainOptions {
  int restarts = 5;
  int maxIterations = 200;
  double tolerance = 1e-6;
  std::size_t optimizationSubset = 500;  ///< hyperparameters are fit on at most this many points
  bool fixNoise = false;                 ///< keep s_delta at its initial value
  std::uint64_t seed = 1;
  std::optional<GPHyperparams> init;
};

class GPModel {
 public:
  GPModel() = default;

  /// Conditions a GP on raw inputs Z (n x d) and outputs y with the given hyperparameters.
  static GPModel condition(const MatrixXd& Z, const VectorXd& y, const GPHyperparams& hyper,
                           const Standardization& standardization, std::optional<double> fixedJitter = std::nullopt) {
    if (Z.rows() != y.size()) throw InputError("inputs and outputs differ in length");
    if (Z.rows() < 1) throw InputError("GP needs at least one training point");
    hyper.validate(Z.cols());
    GPModel m;
    m.Z_ = Z;
    m.y_ = y;
    m.hyper_ = hyper;
    m.standardization_ = standardization;
    m.Zs_ = standardization.apply(Z);
    MatrixXd K = crossCovariance(m.Zs_, m.Zs_, hyper);
    K.diagonal().array() += hyper.sigmaDelta * hyper.sigmaDelta;
    FactorResult f = factorGram(K, hyper.sigmaRho, fixedJitter);
    m.llt_ = std::move(f.llt);
    m.jitter_ = f.jitter;
    m.alpha_ = m.llt_.solve(y);
    if (!m.alpha_.allFinite()) throw NumericalError("non-finite GP weights");
    return m;
  }

  Eigen::Index dims() const { return Z_.cols(); }
  Eigen::Index size() const { return Z_.rows(); }
  const MatrixXd& inputs() const { return Z_; }
  const VectorXd& outputs() const { return y_; }
  const GPHyperparams& hyper() const { return hyper_; }
  const Standardization& standardization() const { return standardization_; }
  double jitter() const { return jitter_; }
  const Eigen::LLT<MatrixXd>& factor() const { return llt_; }
  const VectorXd& weights() const { return alpha_; }

  double predictMean(const VectorXd& z) const { return crossVector(z).dot(alpha_); }

  /// Posterior mean and variance of a noisy observation at z; the variance is clamped at 0.
  Prediction predict(const VectorXd& z) const {
    const VectorXd k = crossVector(z);
    Prediction p;
    p.mean = k.dot(alpha_);
    const VectorXd v = llt_.matrixL().solve(k);
    p.variance = std::max(0.0, hyper_.sigmaRho * hyper_.sigmaRho + hyper_.sigmaDelta * hyper_.sigmaDelta - v.squaredNorm());
    return p;
  }

  /// Unclamped variance, for checking numerical nonnegativity.
  double rawVariance(const VectorXd& z) const {
    const VectorXd v = llt_.matrixL().solve(crossVector(z));
    return hyper_.sigmaRho * hyper_.sigmaRho + hyper_.sigmaDelta * hyper_.sigmaDelta - v.squaredNorm();
  }

  /// Gradient of the posterior mean with respect to the raw input.
  VectorXd meanGradient(const VectorXd& z) const {
    const VectorXd zs = standardization_.apply(z);
    const VectorXd k = crossVector(z);
    VectorXd g = VectorXd::Zero(dims());
    const VectorXd l2 = hyper_.lengthScales.array().square();
    for (Eigen::Index i = 0; i < size(); ++i) {
      g += (alpha_[i] * k[i]) * (Zs_.row(i).transpose() - zs).cwiseQuotient(l2);
    }
    return g.cwiseQuotient(standardization_.scale);
  }

  /// Gram matrix (with noise and jitter) reconstructed from the factor vs recomputed.
  double factorResidual() const {
    MatrixXd K = crossCovariance(Zs_, Zs_, hyper_);
    K.diagonal().array() += hyper_.sigmaDelta * hyper_.sigmaDelta + jitter_;
    const MatrixXd L = llt_.matrixL();
    return (L * L.transpose() - K).norm() / K.norm();
  }

 private:
  VectorXd crossVector(const VectorXd& z) const {
    if (z.size() != dims()) {
      throw InputError("query has " + std::to_string(z.size()) + " features, model expects " + std::to_string(dims()));
    }
    const VectorXd zs = standardization_.apply(z);
    return crossCovariance(Zs_, zs.transpose(), hyper_).col(0);
  }

  MatrixXd Z_;
  MatrixXd Zs_;
  VectorXd y_;
  GPHyperparams hyper_;
  Standardization standardization_;
  Eigen::LLT<MatrixXd> llt_;
  VectorXd alpha_;
  double jitter_ = 0.0;
};

namespace detail {

struct Bounds {
  double lo, hi;
};

// Log-parameter vector: log l_1..log l_d, log s_rho, log s_delta.
inline VectorXd pack(const GPHyperparams& h) {
  VectorXd t(h.lengthScales.size() + 2);
  t.head(h.lengthScales.size()) = h.lengthScales.array().log();
  t[h.lengthScales.size()] = std::log(h.sigmaRho);
  t[h.lengthScales.size() + 1] = std::log(std::max(h.sigmaDelta, 1e-300));
  return t;
}

inline GPHyperparams unpack(const VectorXd& t) {
  const Eigen::Index d = t.size() - 2;
  GPHyperparams h;
  h.lengthScales = t.head(d).array().exp();
  h.sigmaRho = std::exp(t[d]);
  h.sigmaDelta = std::exp(t[d + 1]);
  return h;
}

// Sign-based per-coordinate gradient ascent (Rprop without weight backtracking)
// in log-parameter space, within box bounds.
inline std::pair<VectorXd, double> ascend(const MatrixXd& Zs, const VectorXd& y, VectorXd theta,
                                          const std::vector<Bounds>& box, const TrainOptions& opt) {
  const Eigen::Index p = theta.size();
  VectorXd step = VectorXd::Constant(p, 0.1);
  VectorXd prevGrad = VectorXd::Zero(p);
  VectorXd best = theta;
  double bestValue = -std::numeric_limits<double>::infinity();
  double lastValue = -std::numeric_limits<double>::infinity();
  int calm = 0;
  for (int it = 0; it < opt.maxIterations; ++it) {
    Likelihood lik;
    try {
      lik = marginalLikelihood(Zs, y, unpack(theta));
    } catch (const NumericalError&) {
      // Back off halfway towards the best point seen so far.
      if (!std::isfinite(bestValue)) throw;
      theta = 0.5 * (theta + best);
      step *= 0.5;
      continue;
    }
    if (lik.value > bestValue) {
      bestValue = lik.value;
      best = theta;
    }
    if (opt.fixNoise) lik.gradient[p - 1] = 0.0;
    calm = std::abs(lik.value - lastValue) < opt.tolerance ? calm + 1 : 0;
    if (calm >= 3) break;
    lastValue = lik.value;
    for (Eigen::Index i = 0; i < p; ++i) {
      const double g = lik.gradient[i];
      const double s = g * prevGrad[i];
      if (s > 0) step[i] = std::min(step[i] * 1.2, 1.0);
      if (s < 0) {
        step[i] = std::max(step[i] * 0.5, 1e-6);
        prevGrad[i] = 0.0;
        continue;
      }
      prevGrad[i] = g;
      if (g > 0) theta[i] += step[i];
      if (g < 0) theta[i] -= step[i];
      theta[i] = std::clamp(theta[i], box[i].lo, box[i].hi);
    }
    if ((step.array() <= 1e-6).all()) break;
  }
  return {best, bestValue};
}

}  // namespace detail

/// Maximizes the marginal likelihood from several starts, then conditions on
/// all data with the best hyperparameters. Inputs are standardized first.
inline GPModel trainGP(const MatrixXd& Z, const VectorXd& y, const TrainOptions& opt = {}) {
  if (Z.rows() < 2) throw InputError("GP training needs at least two points");
  if (Z.rows() != y.size()) throw InputError("inputs and outputs differ in length");
  if (!Z.allFinite() || !y.allFinite()) throw InputError("training data contains non-finite values");
  const Eigen::Index n = Z.rows(), d = Z.cols();
  const Standardization st = Standardization::fit(Z);
  const MatrixXd Zs = st.apply(Z);

  std::mt19937_64 rng(opt.seed);
  MatrixXd Zopt = Zs;
  VectorXd yopt = y;
  if (static_cast<std::size_t>(n) > opt.optimizationSubset && opt.optimizationSubset >= 2) {
    std::vector<Eigen::Index> idx(n);
    for (Eigen::Index i = 0; i < n; ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto m = static_cast<Eigen::Index>(opt.optimizationSubset);
    Zopt.resize(m, d);
    yopt.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      Zopt.row(i) = Zs.row(idx[i]);
      yopt[i] = y[idx[i]];
    }
  }

  const double ystd = std::max(std::sqrt((y.array() - y.mean()).square().mean()), 1e-3);
  GPHyperparams base;
  base.lengthScales = VectorXd::Constant(d, std::sqrt(static_cast<double>(d)));
  base.sigmaRho = ystd;
  base.sigmaDelta = 0.1 * ystd;
  if (opt.init) base = *opt.init;
  base.validate(d);
  if (opt.fixNoise && base.sigmaDelta <= 0.0) base.sigmaDelta = 1e-300;

  std::vector<detail::Bounds> box(d + 2);
  for (Eigen::Index j = 0; j < d; ++j) box[j] = {std::log(1e-2), std::log(1e3)};
  box[d] = {std::log(1e-3 * ystd), std::log(1e2 * ystd)};
  box[d + 1] = opt.fixNoise ? detail::Bounds{-1e308, 1e308} : detail::Bounds{std::log(1e-4 * ystd), std::log(ystd)};

  std::normal_distribution<double> jitter(0.0, 0.7);
  VectorXd best;
  double bestValue = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opt.restarts); ++r) {
    VectorXd theta = detail::pack(base);
    if (r > 0) {
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        if (!(opt.fixNoise && i == d + 1)) theta[i] += jitter(rng);
      }
    }
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] = std::clamp(theta[i], box[i].lo, box[i].hi);
    try {
      auto [t, v] = detail::ascend(Zopt, yopt, theta, box, opt);
      if (v > bestValue) {
        bestValue = v;
        best = t;
      }
    } catch (const NumericalError&) {
    }
  }
  if (!std::isfinite(bestValue)) throw NumericalError("marginal likelihood could not be evaluated from any start");
  GPHyperparams h = detail::unpack(best);
  if (opt.fixNoise) h.sigmaDelta = base.sigmaDelta <= 1e-300 ? 0.0 : base.sigmaDelta;
  return GPModel::condition(Z, y, h, st);
}

/// Clamps the mean to the sign of the characteristic value (wrong signs become 0).
inline double rectifyPrediction(double mean, int c) {
  if (c == 1) return std::max(mean, 0.0);
  if (c == -1) return std::min(mean, 0.0);
  throw InputError("characteristic value must be +1 or -1");
}

/// Var_j(standardized Z) / l_j^2, scaled so that the largest score is 1.
inline VectorXd featureRelevance(const GPModel& m) {
  const MatrixXd Zs = m.standardization().apply(m.inputs());
  VectorXd r(m.dims());
  for (Eigen::Index j = 0; j < m.dims(); ++j) {
    const double mean = Zs.col(j).mean();
    const double var = (Zs.col(j).array() - mean).square().mean();
    r[j] = var / (m.hyper().lengthScales[j] * m.hyper().lengthScales[j]);
  }
  const double top = r.maxCoeff();
  if (top > 0.0) r /= top;
  return r;
}

/// A GP surrogate for one predicate together with its feature schema and
/// normalization constants.
struct RobustnessModel {
  static constexpr int kVersion = 1;
  std::string predicate;
  std::vector<std::string> featureSchema;
  robustness::NormalizationConstants norm;
  GPModel gp;
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

inline nlohmann::json toJson(const VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline VectorXd vectorFrom(const nlohmann::json& a, Eigen::Index expected, const std::string& field) {
  if (!a.is_array()) throw InputError("model file: '" + field + "' must be an array");
  if (expected >= 0 && static_cast<Eigen::Index>(a.size()) != expected) {
    throw InputError("model file: '" + field + "' has " + std::to_string(a.size()) + " entries, expected " +
                     std::to_string(expected));
  }
  VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw InputError("model file: '" + field + "' contains a non-number");
    v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  }
  return v;
}

}  // namespace detail

inline nlohmann::json modelToJson(const RobustnessModel& m) {
  using nlohmann::json;
  const GPModel& g = m.gp;
  json Z = json::array();
  for (Eigen::Index i = 0; i < g.size(); ++i) Z.push_back(detail::toJson(g.inputs().row(i).transpose()));
  return {{"version", RobustnessModel::kVersion},
          {"predicate", m.predicate},
          {"n_z", g.dims()},
          {"featureSchema", m.featureSchema},
          {"standardization",
           {{"mean", detail::toJson(g.standardization().mean)}, {"scale", detail::toJson(g.standardization().scale)}}},
          {"Z", Z},
          {"y", detail::toJson(g.outputs())},
          {"hyper",
           {{"length_scales", detail::toJson(g.hyper().lengthScales)},
            {"sigma_rho", g.hyper().sigmaRho},
            {"sigma_delta", g.hyper().sigmaDelta}}},
          {"norm", m.norm.toJson()},
          {"jitter", g.jitter()},
          {"metadata", m.metadata}};
}

/// Rebuilds a model and verifies the recomputed factor. `expectedDims`, when
/// given, guards against models trained on a different feature schema.
inline RobustnessModel modelFromJson(const nlohmann::json& j, std::optional<Eigen::Index> expectedDims = std::nullopt) {
  try {
    if (!j.is_object()) throw InputError("model file: not an object");
    const int version = j.at("version").get<int>();
    if (version != RobustnessModel::kVersion) {
      throw InputError("model file version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(RobustnessModel::kVersion) + ")");
    }
    RobustnessModel m;
    m.predicate = j.at("predicate").get<std::string>();
    const auto nz = j.at("n_z").get<Eigen::Index>();
    if (expectedDims && nz != *expectedDims) {
      throw InputError("model has " + std::to_string(nz) + " features, expected " + std::to_string(*expectedDims));
    }
    m.featureSchema = j.at("featureSchema").get<std::vector<std::string>>();
    if (static_cast<Eigen::Index>(m.featureSchema.size()) != nz) throw InputError("model file: featureSchema size != n_z");
    Standardization st{detail::vectorFrom(j.at("standardization").at("mean"), nz, "standardization.mean"),
                       detail::vectorFrom(j.at("standardization").at("scale"), nz, "standardization.scale")};
    const auto& zj = j.at("Z");
    if (!zj.is_array() || zj.empty()) throw InputError("model file: 'Z' must be a nonempty array");
    MatrixXd Z(static_cast<Eigen::Index>(zj.size()), nz);
    for (std::size_t i = 0; i < zj.size(); ++i) {
      Z.row(static_cast<Eigen::Index>(i)) = detail::vectorFrom(zj[i], nz, "Z[" + std::to_string(i) + "]").transpose();
    }
    const VectorXd y = detail::vectorFrom(j.at("y"), Z.rows(), "y");
    GPHyperparams h;
    h.lengthScales = detail::vectorFrom(j.at("hyper").at("length_scales"), nz, "hyper.length_scales");
    h.sigmaRho = j.at("hyper").at("sigma_rho").get<double>();
    h.sigmaDelta = j.at("hyper").at("sigma_delta").get<double>();
    m.norm = robustness::NormalizationConstants::fromJson(j.at("norm"));
    m.gp = GPModel::condition(Z, y, h, st, j.at("jitter").get<double>());
    if (j.contains("metadata")) m.metadata = j.at("metadata");
    if (!(m.gp.factorResidual() < 1e-8)) throw NumericalError("model file: factor verification failed");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("model file is corrupted: ") + e.what());
  }
}

inline void saveModel(const RobustnessModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << modelToJson(m).dump() << '\n';
  if (!out) throw InputError("failed writing '" + path + "'");
}

inline RobustnessModel loadModel(const std::string& path, std::optional<Eigen::Index> expectedDims = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("model file '" + path + "' is corrupted: " + e.what());
  }
  return modelFromJson(j, expectedDims);
}

}  // namespace mpr::gp
