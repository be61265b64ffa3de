#pragma once

#include <span>
#include <vector>

#include "nti/types.hpp"

namespace nti {

/// Linear-beta diffusion schedule plus the strided DDIM timestep subset.
///
/// Training timesteps run 1..t_train. Index 0 is the clean-data end with the
/// convention alpha_bar(0) = 1. DDIM step indices k run 0..T and map to
/// training timesteps through timestep(k), with timestep(0) = 0.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> betas, std::vector<int> ddim_steps);

  int t_train() const { return static_cast<int>(betas_.size()); }
  int num_steps() const { return static_cast<int>(ddim_steps_.size()); }

  double beta(int t) const;
  double alpha_bar(int t) const;
  std::span<const int> ddim_steps() const { return ddim_steps_; }
  int timestep(int k) const;

 private:
  std::vector<double> betas_;       // betas_[t-1] = beta_t
  std::vector<double> alpha_bars_;  // alpha_bars_[t] for t in [0, t_train]
  std::vector<int> ddim_steps_;
};

NoiseSchedule make_linear_schedule(int t_train, double beta_start, double beta_end, int num_steps);

/// sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise
Vec forward_noise(const Vec& x0, int t, const Vec& noise, const NoiseSchedule& sched);

}  // namespace nti
