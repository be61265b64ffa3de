#pragma once

#include <vector>

#include <json.hpp>

#include "nti/denoiser.hpp"
#include "nti/sampler.hpp"
#include "nti/types.hpp"

namespace nti {

inline constexpr double kPsnrCap = 200.0;

struct MsePsnr {
  double mse = 0.0;
  double psnr = kPsnrCap;
};

/// Mean squared componentwise error and 20 log10(peak / sqrt(mse)), capped.
MsePsnr mse_psnr(const Vec& reference, const Vec& candidate, double peak);

/// Standard-normal log density of a latent.
double gaussian_loglik(const Vec& z);

/// ||pivot_k - replay_k|| for every DDIM step index k.
std::vector<double> trajectory_deviation(const Trajectory& pivot, const Trajectory& replay);

/// Posterior probability of component k under uniform weights.
double component_responsibility(const MixtureModel& mix, const Vec& x, int k);

/// Largest bounding-box extent of the component means plus 6 sigma.
double psnr_peak(const MixtureModel& mix);

struct MetricReport {
  double mse = 0.0;
  double psnr = kPsnrCap;
  double peak = 1.0;
  double loglik_zT = 0.0;
  std::vector<double> deviation;
  double target_responsibility = 0.0;
};

nlohmann::json to_json(const MetricReport& r);

}  // namespace nti
