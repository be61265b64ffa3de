#pragma once

#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nti/denoiser.hpp"
#include "nti/rng.hpp"
#include "nti/schedule.hpp"
#include "nti/types.hpp"

namespace nti {

struct GuidanceConfig {
  double w = 7.5;
  void validate() const;
};

enum class TrajectoryRole { Pivot, Replay, Sample };

std::string to_string(TrajectoryRole role);
TrajectoryRole trajectory_role_from_string(const std::string& s);

/// Latent codes indexed by DDIM step: codes[0] = z_0 (data end), codes[T] = z_T.
struct Trajectory {
  std::vector<Vec> codes;
  TrajectoryRole role = TrajectoryRole::Sample;
  double w = 1.0;

  int steps() const { return static_cast<int>(codes.size()) - 1; }
  const Vec& at(int k) const { return codes.at(k); }
  const Vec& data() const { return codes.front(); }
  const Vec& terminal() const { return codes.back(); }
};

// JSON layout: {"role", "w", "latents": [z_T, ..., z_0]}.
nlohmann::json to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& j);

/// w * eps(z, t, C) + (1 - w) * eps(z, t, null)
Vec guided_noise(const Denoiser& den, const Vec& z, int t, const Embedding& cond, const Embedding& null, double w);

/// Deterministic DDIM step in x0-prediction form from timestep from_t down to to_t.
Vec ddim_step(const Vec& z, int from_t, int to_t, const Vec& eps, const NoiseSchedule& sched);

/// Same update with to_t > from_t. Exact inverse of ddim_step for a shared eps.
Vec ddim_invert_step(const Vec& z, int from_t, int to_t, const Vec& eps, const NoiseSchedule& sched);

/// One guided DDIM step from step index k to k-1, noise predicted at
/// timestep(k). Shared by sampling, replay and the inversion loops so that
/// all of them produce bit-identical latents.
Vec guided_ddim_step(const Denoiser& den, const Vec& z, int k, const Embedding& cond, const Embedding& null,
                     double w, const NoiseSchedule& sched);

/// Null embedding used at DDIM step k (1-based) from a list of length 1 or T.
const Embedding& null_for_step(std::span<const Embedding> nulls, int k);

/// Guided DDIM from z_T down to z_0.
Trajectory ddim_sample(const Denoiser& den, const Vec& z_T, const Embedding& cond, std::span<const Embedding> nulls,
                       double w, const NoiseSchedule& sched);

/// Guided DDIM inversion z_0 -> z_T. The noise for step k-1 -> k is
/// predicted from the current latent at the target timestep(k).
/// The unconditional branch uses the zero (empty-prompt) embedding.
Trajectory ddim_invert(const Denoiser& den, const Vec& z_0, const Embedding& cond, double w,
                       const NoiseSchedule& sched);

/// Ancestral DDPM mean: (z - beta_t / sqrt(1 - ab_t) * eps) / sqrt(1 - beta_t).
Vec ddpm_mean(const Denoiser& den, const Vec& z, int t, const Embedding& cond, const NoiseSchedule& sched);

/// ddpm_mean plus sigma_t times a standard normal draw.
Vec ddpm_step(const Denoiser& den, const Vec& z, int t, const Embedding& cond, double sigma_t,
              const NoiseSchedule& sched, Rng& rng);

/// Full ancestral chain t_train..1 with sigma_t = sqrt(beta_t).
Vec ddpm_sample(const Denoiser& den, const Vec& z_T, const Embedding& cond, const NoiseSchedule& sched, Rng& rng);

/// SDEdit: noise x0 to DDIM step round(t0 * T) with a fresh draw, then guided
/// DDIM back to data.
Vec sdedit(const Denoiser& den, const Vec& x0, const Embedding& cond, std::span<const Embedding> nulls, double w,
           double t0, const NoiseSchedule& sched, Rng& rng);

int sdedit_start_step(double t0, int num_steps);

}  // namespace nti
