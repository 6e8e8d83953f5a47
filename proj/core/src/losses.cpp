#include "csda/losses.hpp"

#include <cmath>

namespace csda {

LossVariant loss_variant_from_string(const std::string& s) {
  if (s == "csda") return LossVariant::kCsda;
  if (s == "csda_ln") return LossVariant::kCsdaLn;
  if (s == "csda_delta") return LossVariant::kCsdaDelta;
  throw std::invalid_argument("unknown loss variant: " + s);
}

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::kCsda: return "csda";
    case LossVariant::kCsdaLn: return "csda_ln";
    case LossVariant::kCsdaDelta: return "csda_delta";
  }
  return "?";
}

Tensor sign_matrix(const Tensor& u) {
  if (u.rank() != 1)
    throw std::invalid_argument("sign_matrix: expected vector, got " + shape_str(u.dims));
  const int d = u.dims[0];
  for (double v : u.data)
    if (!std::isfinite(v))
      throw std::invalid_argument("sign_matrix: non-finite component");
  Tensor m(Shape{d, d}, 1.0);
  for (int j = 0; j < d; ++j)
    m.data[static_cast<std::size_t>(j) * d + j] = u.data[j] < 0.0 ? -1.0 : 1.0;
  return m;  // untracked: constant w.r.t. differentiation
}

Tensor signed_between_trace(const Tensor& u, const Tensor& s_b) {
  return trace(hadamard(sign_matrix(u), s_b));
}

Tensor loss_csda(const ScatterPair& pair, const Tensor& u) {
  return trace(matmul(pair.s_w, hadamard(sign_matrix(u), pair.s_b)));
}

Tensor loss_csda_ln(const ScatterPair& pair, const Tensor& u, const LossConfig& cfg) {
  const double shift = static_cast<double>(cfg.d_cs) + cfg.epsilon;
  Tensor between = add_scalar(signed_between_trace(u, pair.s_b), shift);
  Tensor within = add_scalar(trace(pair.s_w), shift);
  if (!(between.item() > 0.0) || !(within.item() > 0.0))
    throw std::domain_error(
        "loss_csda_ln: non-positive log argument; the colorspace head must be "
        "sigmoid-bounded so features lie in (0,1)");
  return add(log_op(between), scalar_mul(log_op(within), cfg.lambda_f));
}

Tensor loss_csda_delta(const ScatterPair& pair, const Tensor& u, const LossConfig& cfg) {
  return add(signed_between_trace(u, pair.s_b),
             scalar_mul(trace(pair.s_w), cfg.lambda_f));
}

Tensor discriminant_loss(const ScatterPair& pair, const Tensor& u, const LossConfig& cfg) {
  switch (cfg.variant) {
    case LossVariant::kCsda: return loss_csda(pair, u);
    case LossVariant::kCsdaLn: return loss_csda_ln(pair, u, cfg);
    case LossVariant::kCsdaDelta: return loss_csda_delta(pair, u, cfg);
  }
  throw std::logic_error("discriminant_loss: bad variant");
}

Tensor focal_loss(const Tensor& probs, const Tensor& mask, const LossConfig& cfg) {
  if (mask.size() != probs.size())
    throw std::invalid_argument("op focal_loss: shape mismatch " + shape_str(probs.dims) +
                                " vs " + shape_str(mask.dims));
  for (double p : probs.data)
    if (!(p > 0.0 && p < 1.0))
      throw std::domain_error("focal_loss: probability outside (0,1): " +
                              std::to_string(p));

  const std::size_t n = probs.size();
  Tensor m(probs.dims, 0.0), inv_m(probs.dims, 0.0), alpha_t(probs.dims, 0.0);
  Tensor ones(probs.dims, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double mv = mask.data[i];
    if (mv != 0.0 && mv != 1.0)
      throw std::invalid_argument("focal_loss: mask value not in {0,1}: " +
                                  std::to_string(mv));
    m.data[i] = mv;
    inv_m.data[i] = 1.0 - mv;
    alpha_t.data[i] = mv == 1.0 ? cfg.focal_alpha : 1.0 - cfg.focal_alpha;
  }
  Tensor p_t = add(hadamard(m, probs), hadamard(inv_m, sub(ones, probs)));
  Tensor weight = pow_const(sub(ones, p_t), cfg.focal_gamma);
  Tensor term = hadamard(alpha_t, hadamard(weight, log_op(p_t)));
  return scalar_mul(mean_all(term), -1.0);
}

TotalLossResult total_loss(const Tensor& probs, const Tensor& mask,
                           const ScatterPair* pair, const Tensor* u,
                           const LossConfig& cfg) {
  TotalLossResult r;
  r.focal = focal_loss(probs, mask, cfg);
  if (pair == nullptr || u == nullptr) {
    r.discriminant_skipped = true;
    r.value = r.focal;
    return r;
  }
  r.discriminant = discriminant_loss(*pair, *u, cfg);
  if (cfg.lambda_p == 0.0) {
    // exact reduction to the focal-only objective
    r.value = r.focal;
  } else {
    r.value = add(r.focal, scalar_mul(r.discriminant, cfg.lambda_p));
  }
  return r;
}

double scalar_fisher(const std::vector<double>& class0,
                     const std::vector<double>& class1) {
  if (class0.empty() || class1.empty())
    throw std::invalid_argument("scalar_fisher: empty class");
  auto moments = [](const std::vector<double>& v) {
    double mu = 0.0;
    for (double x : v) mu += x;
    mu /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mu) * (x - mu);
    var /= static_cast<double>(v.size());
    return std::pair<double, double>(mu, var);
  };
  auto [mu0, var0] = moments(class0);
  auto [mu1, var1] = moments(class1);
  const double denom = var0 + var1;
  if (denom == 0.0) throw std::domain_error("scalar_fisher: zero denominator");
  return (mu0 - mu1) * (mu0 - mu1) / denom;
}

std::vector<double> lda_closed_form(const Tensor& points0, const Tensor& points1) {
  if (points0.rank() != 2 || points1.rank() != 2 || points0.dims[1] != points1.dims[1])
    throw std::invalid_argument("lda_closed_form: shape mismatch " +
                                shape_str(points0.dims) + " vs " +
                                shape_str(points1.dims));
  const int d = points0.dims[1];
  auto moments = [d](const Tensor& pts, std::vector<double>& mu,
                     std::vector<double>& cov) {
    const int n = pts.dims[0];
    mu.assign(static_cast<std::size_t>(d), 0.0);
    cov.assign(static_cast<std::size_t>(d) * d, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j)
        mu[static_cast<std::size_t>(j)] += pts.data[static_cast<std::size_t>(i) * d + j];
    for (auto& v : mu) v /= n;
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < d; ++a) {
        const double ca = pts.data[static_cast<std::size_t>(i) * d + a] - mu[a];
        for (int b = 0; b < d; ++b)
          cov[static_cast<std::size_t>(a) * d + b] +=
              ca * (pts.data[static_cast<std::size_t>(i) * d + b] - mu[b]);
      }
    for (auto& v : cov) v /= n;
  };
  std::vector<double> mu0, cov0, mu1, cov1;
  moments(points0, mu0, cov0);
  moments(points1, mu1, cov1);
  std::vector<double> sw(static_cast<std::size_t>(d) * d);
  for (std::size_t i = 0; i < sw.size(); ++i) sw[i] = cov0[i] + cov1[i];
  for (int i = 0; i < d; ++i) sw[static_cast<std::size_t>(i) * d + i] += 1e-9;
  std::vector<double> diff(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) diff[static_cast<std::size_t>(j)] = mu0[j] - mu1[j];
  std::vector<double> w = detail::solve_linear(std::move(sw), std::move(diff), d);

  double norm = 0.0;
  for (double v : w) norm += v * v;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw std::runtime_error("lda_closed_form: zero direction");
  for (auto& v : w) v /= norm;
  for (double v : w) {
    if (v > 0.0) break;
    if (v < 0.0) {  // canonical sign: first nonzero component positive
      for (auto& x : w) x = -x;
      break;
    }
  }
  return w;
}

}  // namespace csda
