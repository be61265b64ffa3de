#include "nti/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nti/error.hpp"

namespace nti {

MsePsnr mse_psnr(const Vec& reference, const Vec& candidate, double peak) {
  if (reference.size() != candidate.size()) throw ShapeError("mse_psnr: dimension mismatch");
  if (reference.size() == 0) throw ShapeError("mse_psnr: empty vectors");
  if (!(peak > 0.0)) throw ParameterError("mse_psnr: peak must be positive");
  MsePsnr out;
  out.mse = (reference - candidate).squaredNorm() / static_cast<double>(reference.size());
  out.psnr = out.mse > 0.0 ? std::min(kPsnrCap, 20.0 * std::log10(peak / std::sqrt(out.mse))) : kPsnrCap;
  return out;
}

double gaussian_loglik(const Vec& z) {
  const double d = static_cast<double>(z.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi) - 0.5 * z.squaredNorm();
}

std::vector<double> trajectory_deviation(const Trajectory& pivot, const Trajectory& replay) {
  if (pivot.codes.size() != replay.codes.size()) throw ShapeError("trajectory_deviation: length mismatch");
  std::vector<double> out(pivot.codes.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (pivot.codes[k].size() != replay.codes[k].size())
      throw ShapeError("trajectory_deviation: latent dimension mismatch");
    out[k] = (pivot.codes[k] - replay.codes[k]).norm();
  }
  return out;
}

double component_responsibility(const MixtureModel& mix, const Vec& x, int k) {
  const int K = mix.components();
  if (k < 0 || k >= K) throw ParameterError("component index out of range");
  if (x.size() != mix.dim()) throw ShapeError("component_responsibility: dimension mismatch");
  if (!(mix.sigma > 0.0)) throw DegenerateError("responsibilities need sigma > 0");
  Vec logp(K);
  for (int j = 0; j < K; ++j) logp[j] = -(x - mix.means[j]).squaredNorm() / (2.0 * mix.sigma * mix.sigma);
  const double mx = logp.maxCoeff();
  return std::exp(logp[k] - mx) / (logp.array() - mx).exp().sum();
}

double psnr_peak(const MixtureModel& mix) {
  mix.validate();
  Vec lo = mix.means.front();
  Vec hi = mix.means.front();
  for (const auto& m : mix.means) {
    lo = lo.cwiseMin(m);
    hi = hi.cwiseMax(m);
  }
  return (hi - lo).maxCoeff() + 6.0 * mix.sigma;
}

nlohmann::json to_json(const MetricReport& r) {
  return {{"mse", r.mse},
          {"psnr", r.psnr},
          {"peak", r.peak},
          {"loglik_zT", r.loglik_zT},
          {"deviation", r.deviation},
          {"target_responsibility", r.target_responsibility}};
}

}  // namespace nti
