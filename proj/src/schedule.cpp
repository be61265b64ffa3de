#include "nti/schedule.hpp"

#include <cmath>
#include <string>

#include "nti/error.hpp"

namespace nti {

NoiseSchedule::NoiseSchedule(std::vector<double> betas, std::vector<int> ddim_steps)
    : betas_(std::move(betas)), ddim_steps_(std::move(ddim_steps)) {
  if (betas_.empty()) throw ParameterError("schedule needs at least one timestep");
  if (ddim_steps_.empty()) throw ParameterError("schedule needs at least one DDIM step");
  alpha_bars_.resize(betas_.size() + 1);
  alpha_bars_[0] = 1.0;
  for (std::size_t t = 1; t <= betas_.size(); ++t) {
    const double b = betas_[t - 1];
    if (!(b > 0.0 && b < 1.0)) throw ParameterError("beta must lie in (0,1), got " + std::to_string(b));
    alpha_bars_[t] = alpha_bars_[t - 1] * (1.0 - b);
  }
  int prev = 0;
  for (int s : ddim_steps_) {
    if (s <= prev || s > t_train())
      throw ParameterError("ddim_steps must be strictly increasing within [1, t_train]");
    prev = s;
  }
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > t_train()) throw ParameterError("timestep out of range: " + std::to_string(t));
  return betas_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t < 0 || t > t_train()) throw ParameterError("timestep out of range: " + std::to_string(t));
  return alpha_bars_[t];
}

int NoiseSchedule::timestep(int k) const {
  if (k < 0 || k > num_steps()) throw ParameterError("DDIM step index out of range: " + std::to_string(k));
  return k == 0 ? 0 : ddim_steps_[k - 1];
}

NoiseSchedule make_linear_schedule(int t_train, double beta_start, double beta_end, int num_steps) {
  if (t_train < 1) throw ParameterError("t_train must be positive");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw ParameterError("need 0 < beta_start <= beta_end < 1");
  if (num_steps < 1 || num_steps > t_train) throw ParameterError("need 1 <= T <= t_train");
  if (t_train % num_steps != 0)
    throw ParameterError("T=" + std::to_string(num_steps) + " does not divide t_train=" + std::to_string(t_train));

  std::vector<double> betas(t_train);
  for (int i = 0; i < t_train; ++i) {
    const double frac = t_train == 1 ? 0.0 : static_cast<double>(i) / (t_train - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  const int stride = t_train / num_steps;
  std::vector<int> steps(num_steps);
  for (int i = 0; i < num_steps; ++i) steps[i] = 1 + i * stride;
  return NoiseSchedule(std::move(betas), std::move(steps));
}

Vec forward_noise(const Vec& x0, int t, const Vec& noise, const NoiseSchedule& sched) {
  if (x0.size() != noise.size()) throw ShapeError("forward_noise: x0 and noise differ in dimension");
  if (t < 1 || t > sched.t_train()) throw ParameterError("forward_noise: timestep out of range");
  const double ab = sched.alpha_bar(t);
  return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * noise;
}

}  // namespace nti
