#include "lsalign/alignment.hpp"

#include <cmath>

#include "lsalign/error.hpp"
#include "lsalign/json_util.hpp"

namespace lsalign {
namespace {

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double row_norm(std::span<const float> row) {
  double sq = 0.0;
  for (float x : row) sq += static_cast<double>(x) * x;
  return std::sqrt(sq);
}

}  // namespace

void LossConfig::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    fail(ErrorCode::BadConfig, "tau must be positive");
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    fail(ErrorCode::BadConfig, "lambda must be non-negative");
  }
  if (!(bce_clamp > 0.0 && bce_clamp < 0.5)) {
    fail(ErrorCode::BadConfig, "bce_clamp must lie in (0, 0.5)");
  }
}

nlohmann::json to_json(const LossConfig& cfg) {
  return {{"tau", cfg.tau},
          {"lambda", cfg.lambda},
          {"bce_clamp", cfg.bce_clamp},
          {"reduction", "mean"}};
}

LossConfig loss_config_from_json(const nlohmann::json& doc) {
  StrictObject obj(doc, "loss");
  LossConfig cfg;
  cfg.tau = obj.get("tau", cfg.tau);
  cfg.lambda = obj.get("lambda", cfg.lambda);
  cfg.bce_clamp = obj.get("bce_clamp", cfg.bce_clamp);
  if (obj.get<std::string>("reduction", "mean") != "mean") {
    fail(ErrorCode::BadConfig, "loss.reduction: only 'mean' is supported");
  }
  obj.finish();
  cfg.validate();
  return cfg;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

AlignmentScores score(std::span<const double> v, const EmbeddingMatrix& emb) {
  if (v.size() != emb.cols()) {
    fail(ErrorCode::DimMismatch, "feature has dim " + std::to_string(v.size()) +
                                     ", embeddings have dim " + std::to_string(emb.cols()));
  }
  double sq = 0.0;
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorCode::NonFiniteEntry, "feature contains a non-finite value");
    sq += x * x;
  }
  if (sq == 0.0) fail(ErrorCode::ZeroVector, "feature is the zero vector");

  AlignmentScores out;
  out.n = emb.rows();
  out.dim = emb.cols();
  out.v_norm = std::sqrt(sq);
  out.c.resize(out.n);
  for (std::size_t j = 0; j < out.n; ++j) {
    const auto t = emb.row(j);
    double dot = 0.0, tt = 0.0;
    for (std::size_t k = 0; k < out.dim; ++k) {
      dot += v[k] * t[k];
      tt += static_cast<double>(t[k]) * t[k];
    }
    if (tt == 0.0) fail(ErrorCode::ZeroVector, "label embedding " + std::to_string(j) + " is zero");
    out.c[j] = std::clamp(dot / (out.v_norm * std::sqrt(tt)), -1.0, 1.0);
  }
  return out;
}

PartialLoss hard_loss(const AlignmentScores& scores, const HardTarget& target,
                      const LossConfig& cfg) {
  const std::size_t n = scores.n;
  if (target.positive_index && *target.positive_index >= n) {
    fail(ErrorCode::IndexOutOfRange, "positive label " + std::to_string(*target.positive_index) +
                                         " >= " + std::to_string(n));
  }
  const double eps = cfg.bce_clamp;
  const double inv_n = 1.0 / static_cast<double>(n);
  PartialLoss out;
  out.grad_c.assign(n, 0.0);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const bool positive = target.positive_index && *target.positive_index == j;
    const double logit = scores.c[j] / cfg.tau;
    const double p = sigmoid(logit);
    if (p < eps || p > 1.0 - eps) {
      const double pc = std::clamp(p, eps, 1.0 - eps);
      sum += positive ? -std::log(pc) : -std::log1p(-pc);
      continue;
    }
    // -log p = softplus(-x), -log(1 - p) = softplus(x)
    sum += positive ? softplus(-logit) : softplus(logit);
    out.grad_c[j] = (p - (positive ? 1.0 : 0.0)) * inv_n / cfg.tau;
  }
  out.value = sum * inv_n;
  return out;
}

PartialLoss soft_loss(const AlignmentScores& scores, std::span<const float> s_row) {
  const std::size_t n = scores.n;
  if (s_row.size() != n) {
    fail(ErrorCode::DimMismatch, "similarity row has length " + std::to_string(s_row.size()) +
                                     ", expected " + std::to_string(n));
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  PartialLoss out;
  out.grad_c.resize(n);
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double diff = scores.c[j] - static_cast<double>(s_row[j]);
    sum += diff * diff;
    out.grad_c[j] = 2.0 * diff * inv_n;
  }
  out.value = sum * inv_n;
  return out;
}

std::vector<double> pullback_to_feature(std::span<const double> v, const EmbeddingMatrix& emb,
                                        const AlignmentScores& scores,
                                        std::span<const double> grad_c) {
  const std::size_t dim = v.size();
  const double inv_vn = 1.0 / scores.v_norm;
  std::vector<double> grad_v(dim, 0.0);
  double radial = 0.0;  // sum_j g_j c_j, multiplies -v / |v|^2
  for (std::size_t j = 0; j < scores.n; ++j) {
    const double g = grad_c[j];
    if (g == 0.0) continue;
    const auto t = emb.row(j);
    const double coef = g * inv_vn / row_norm(t);
    for (std::size_t k = 0; k < dim; ++k) grad_v[k] += coef * t[k];
    radial += g * scores.c[j];
  }
  const double radial_coef = radial * inv_vn * inv_vn;
  for (std::size_t k = 0; k < dim; ++k) grad_v[k] -= radial_coef * v[k];
  return grad_v;
}

LossValue language_loss(std::span<const double> v, const EmbeddingMatrix& emb,
                        const HardTarget& target, std::span<const float> s_row,
                        const LossConfig& cfg) {
  const auto scores = score(v, emb);
  auto hard = hard_loss(scores, target, cfg);

  LossValue out;
  out.hard = hard.value;
  out.grad_c = std::move(hard.grad_c);
  if (target.positive_index) {
    const auto soft = soft_loss(scores, s_row);
    out.soft = soft.value;
    for (std::size_t j = 0; j < scores.n; ++j) out.grad_c[j] += cfg.lambda * soft.grad_c[j];
  }
  out.total = out.hard + cfg.lambda * out.soft;
  out.grad_v = pullback_to_feature(v, emb, scores, out.grad_c);
  return out;
}

LossValue hard_only_loss(std::span<const double> v, const EmbeddingMatrix& emb,
                         const HardTarget& target, const LossConfig& cfg) {
  const auto scores = score(v, emb);
  auto hard = hard_loss(scores, target, cfg);
  LossValue out;
  out.hard = hard.value;
  out.total = out.hard;
  out.grad_c = std::move(hard.grad_c);
  out.grad_v = pullback_to_feature(v, emb, scores, out.grad_c);
  return out;
}

}  // namespace lsalign
