#ifndef CSDA_LOSSES_HPP
#define CSDA_LOSSES_HPP

#include <string>

#include "csda/scatter.hpp"
#include "csda/tensor.hpp"

namespace csda {

enum class LossVariant { kCsda, kCsdaLn, kCsdaDelta };

LossVariant loss_variant_from_string(const std::string& s);
std::string to_string(LossVariant v);

struct LossConfig {
  LossVariant variant = LossVariant::kCsdaDelta;
  int d_cs = 4;
  double epsilon = 1e-8;
  double lambda_f = 0.5;
  double lambda_p = 1.3;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
};

// D^sign(u): diagonal sign(u_j) with sign(0) := +1, off-diagonal all +1.
// Constant under differentiation (no gradient flows through the sign).
Tensor sign_matrix(const Tensor& u);

// Tr(D^sign(u) (.) S_b) = sum_j sign(u_j) u_j^2.
Tensor signed_between_trace(const Tensor& u, const Tensor& s_b);

// Tr( S_w (D^sign(u) (.) S_b) ).
Tensor loss_csda(const ScatterPair& pair, const Tensor& u);

// ln(d + eps + Tr(D (.) S_b)) + lambda_F ln(d + eps + Tr(S_w)).
// Requires sigmoid-bounded features so both arguments stay positive.
Tensor loss_csda_ln(const ScatterPair& pair, const Tensor& u, const LossConfig& cfg);

// Tr(D (.) S_b) + lambda_F Tr(S_w).
Tensor loss_csda_delta(const ScatterPair& pair, const Tensor& u, const LossConfig& cfg);

// Dispatches on cfg.variant.
Tensor discriminant_loss(const ScatterPair& pair, const Tensor& u, const LossConfig& cfg);

// Mean over pixels of -alpha_t (1 - p_t)^gamma ln(p_t). `probs` must lie
// strictly in (0,1); `mask` is binary with the same pixel count.
Tensor focal_loss(const Tensor& probs, const Tensor& mask, const LossConfig& cfg);

// L_T = L_P + lambda_P * L_DDA. Pass pair/u as null to skip the
// discriminant term (empty-class batches); the omission is flagged.
struct TotalLossResult {
  Tensor value;
  Tensor focal;
  Tensor discriminant;  // unset when skipped
  bool discriminant_skipped = false;
};
TotalLossResult total_loss(const Tensor& probs, const Tensor& mask,
                           const ScatterPair* pair, const Tensor* u,
                           const LossConfig& cfg);

// Scalar Fisher criterion (mu0 - mu1)^2 / (s0^2 + s1^2) with population
// variances. Throws std::domain_error on a zero denominator.
double scalar_fisher(const std::vector<double>& class0, const std::vector<double>& class1);

// Closed-form LDA direction w ~ S_w^{-1}(mu0 - mu1) for two point sets
// (rank-2 tensors, one point per row). Unit-normalized with the first
// nonzero component positive. Oracle for validating the criteria.
std::vector<double> lda_closed_form(const Tensor& points0, const Tensor& points1);

}  // namespace csda

#endif  // CSDA_LOSSES_HPP
