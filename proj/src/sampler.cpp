#include "nti/sampler.hpp"

#include <cmath>
#include <string>

#include "nti/error.hpp"

namespace nti {

void GuidanceConfig::validate() const {
  if (!std::isfinite(w) || w < 0.0) throw ParameterError("guidance scale must be finite and >= 0");
}

std::string to_string(TrajectoryRole role) {
  switch (role) {
    case TrajectoryRole::Pivot: return "pivot";
    case TrajectoryRole::Replay: return "replay";
    case TrajectoryRole::Sample: return "sample";
  }
  return "sample";
}

TrajectoryRole trajectory_role_from_string(const std::string& s) {
  if (s == "pivot") return TrajectoryRole::Pivot;
  if (s == "replay") return TrajectoryRole::Replay;
  if (s == "sample") return TrajectoryRole::Sample;
  throw ParameterError("unknown trajectory role '" + s + "'");
}

nlohmann::json to_json(const Trajectory& traj) {
  nlohmann::json latents = nlohmann::json::array();
  for (auto it = traj.codes.rbegin(); it != traj.codes.rend(); ++it)
    latents.push_back(std::vector<double>(it->data(), it->data() + it->size()));
  return {{"role", to_string(traj.role)}, {"w", traj.w}, {"latents", latents}};
}

Trajectory trajectory_from_json(const nlohmann::json& j) {
  Trajectory traj;
  traj.role = trajectory_role_from_string(j.at("role").get<std::string>());
  traj.w = j.at("w").get<double>();
  const auto& latents = j.at("latents");
  if (!latents.is_array() || latents.empty()) throw ShapeError("trajectory needs at least one latent");
  for (auto it = latents.rbegin(); it != latents.rend(); ++it) {
    const auto v = it->get<std::vector<double>>();
    traj.codes.push_back(Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  for (const auto& c : traj.codes)
    if (c.size() != traj.codes.front().size()) throw ShapeError("trajectory latents differ in dimension");
  return traj;
}

Vec guided_noise(const Denoiser& den, const Vec& z, int t, const Embedding& cond, const Embedding& null, double w) {
  return w * den.predict_noise(z, t, cond) + (1.0 - w) * den.predict_noise(z, t, null);
}

namespace {

Vec ddim_update(const Vec& z, int from_t, int to_t, const Vec& eps, const NoiseSchedule& sched) {
  if (z.size() != eps.size()) throw ShapeError("DDIM step: latent and noise differ in dimension");
  const double ab_from = sched.alpha_bar(from_t);
  const double ab_to = sched.alpha_bar(to_t);
  if (!(ab_from > 0.0)) throw DegenerateError("DDIM step: alpha_bar at the source timestep is zero");
  const Vec x0 = (z - std::sqrt(1.0 - ab_from) * eps) / std::sqrt(ab_from);
  return std::sqrt(ab_to) * x0 + std::sqrt(1.0 - ab_to) * eps;
}

}  // namespace

Vec ddim_step(const Vec& z, int from_t, int to_t, const Vec& eps, const NoiseSchedule& sched) {
  if (!(from_t > to_t)) throw ParameterError("ddim_step needs from_t > to_t");
  return ddim_update(z, from_t, to_t, eps, sched);
}

Vec ddim_invert_step(const Vec& z, int from_t, int to_t, const Vec& eps, const NoiseSchedule& sched) {
  if (!(to_t > from_t)) throw ParameterError("ddim_invert_step needs to_t > from_t");
  return ddim_update(z, from_t, to_t, eps, sched);
}

Vec guided_ddim_step(const Denoiser& den, const Vec& z, int k, const Embedding& cond, const Embedding& null,
                     double w, const NoiseSchedule& sched) {
  const int from_t = sched.timestep(k);
  const int to_t = sched.timestep(k - 1);
  const Vec eps = guided_noise(den, z, from_t, cond, null, w);
  return ddim_step(z, from_t, to_t, eps, sched);
}

const Embedding& null_for_step(std::span<const Embedding> nulls, int k) {
  return nulls.size() == 1 ? nulls.front() : nulls[k - 1];
}

namespace {

void check_nulls(std::span<const Embedding> nulls, int num_steps) {
  if (nulls.size() != 1 && nulls.size() != static_cast<std::size_t>(num_steps))
    throw ParameterError("expected 1 or " + std::to_string(num_steps) + " null embeddings, got " +
                         std::to_string(nulls.size()));
}

}  // namespace

Trajectory ddim_sample(const Denoiser& den, const Vec& z_T, const Embedding& cond, std::span<const Embedding> nulls,
                       double w, const NoiseSchedule& sched) {
  const int T = sched.num_steps();
  check_nulls(nulls, T);
  Trajectory traj;
  traj.role = TrajectoryRole::Sample;
  traj.w = w;
  traj.codes.resize(T + 1);
  traj.codes[T] = z_T;
  for (int k = T; k >= 1; --k)
    traj.codes[k - 1] = guided_ddim_step(den, traj.codes[k], k, cond, null_for_step(nulls, k), w, sched);
  return traj;
}

Trajectory ddim_invert(const Denoiser& den, const Vec& z_0, const Embedding& cond, double w,
                       const NoiseSchedule& sched) {
  const int T = sched.num_steps();
  const Embedding null = Embedding::zeros(cond.size());
  Trajectory traj;
  traj.role = TrajectoryRole::Pivot;
  traj.w = w;
  traj.codes.resize(T + 1);
  traj.codes[0] = z_0;
  for (int k = 1; k <= T; ++k) {
    const int from_t = sched.timestep(k - 1);
    const int to_t = sched.timestep(k);
    const Vec eps = guided_noise(den, traj.codes[k - 1], to_t, cond, null, w);
    traj.codes[k] = ddim_invert_step(traj.codes[k - 1], from_t, to_t, eps, sched);
  }
  return traj;
}

Vec ddpm_mean(const Denoiser& den, const Vec& z, int t, const Embedding& cond, const NoiseSchedule& sched) {
  const double beta = sched.beta(t);
  const double ab = sched.alpha_bar(t);
  const Vec eps = den.predict_noise(z, t, cond);
  return (z - (beta / std::sqrt(1.0 - ab)) * eps) / std::sqrt(1.0 - beta);
}

Vec ddpm_step(const Denoiser& den, const Vec& z, int t, const Embedding& cond, double sigma_t,
              const NoiseSchedule& sched, Rng& rng) {
  if (!(sigma_t >= 0.0)) throw ParameterError("ddpm_step needs sigma_t >= 0");
  Vec mean = ddpm_mean(den, z, t, cond, sched);
  if (sigma_t == 0.0) return mean;
  return mean + sigma_t * standard_normal(rng, static_cast<int>(z.size()));
}

Vec ddpm_sample(const Denoiser& den, const Vec& z_T, const Embedding& cond, const NoiseSchedule& sched, Rng& rng) {
  Vec z = z_T;
  for (int t = sched.t_train(); t >= 1; --t) {
    const double sigma = t > 1 ? std::sqrt(sched.beta(t)) : 0.0;
    z = ddpm_step(den, z, t, cond, sigma, sched, rng);
  }
  return z;
}

int sdedit_start_step(double t0, int num_steps) {
  if (!(t0 >= 0.0 && t0 <= 1.0)) throw ParameterError("sdedit needs t0 in [0,1]");
  return static_cast<int>(std::lround(t0 * num_steps));
}

Vec sdedit(const Denoiser& den, const Vec& x0, const Embedding& cond, std::span<const Embedding> nulls, double w,
           double t0, const NoiseSchedule& sched, Rng& rng) {
  const int T = sched.num_steps();
  check_nulls(nulls, T);
  const int start = sdedit_start_step(t0, T);
  if (start == 0) return x0;
  const Vec noise = standard_normal(rng, static_cast<int>(x0.size()));
  Vec z = forward_noise(x0, sched.timestep(start), noise, sched);
  for (int k = start; k >= 1; --k) z = guided_ddim_step(den, z, k, cond, null_for_step(nulls, k), w, sched);
  return z;
}

}  // namespace nti
