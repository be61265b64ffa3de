#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nti/denoiser.hpp"
#include "nti/metrics.hpp"
#include "nti/rng.hpp"
#include "nti/sampler.hpp"
#include "nti/schedule.hpp"

namespace nti {

enum class Variant { NullPivotal, TextPivotal, NullGlobal, TextStochastic, NullStochastic };
enum class PivotSource { DdimW1, Random };
enum class OptimizerKind { GradientDescent, Momentum, Adam };
enum class GradientMode { FiniteDifference, Analytic };

/// Which classifier-free-guidance branch the optimized embeddings feed.
enum class EmbeddingSlot { Null, Conditional };

std::string to_string(Variant v);
std::string to_string(PivotSource p);
std::string to_string(OptimizerKind o);
std::string to_string(GradientMode g);
std::string to_string(EmbeddingSlot s);
Variant variant_from_string(const std::string& s);
PivotSource pivot_source_from_string(const std::string& s);
OptimizerKind optimizer_from_string(const std::string& s);
GradientMode gradient_mode_from_string(const std::string& s);
EmbeddingSlot slot_of(Variant v);

struct InversionConfig {
  double w = 7.5;
  int N = 10;
  double lr = 0.01;
  double early_stop = 1e-5;
  Variant variant = Variant::NullPivotal;
  PivotSource pivot_source = PivotSource::DdimW1;
  OptimizerKind optimizer = OptimizerKind::GradientDescent;
  double momentum = 0.9;  // heavy-ball coefficient, or Adam's beta1
  GradientMode gradient = GradientMode::FiniteDifference;
  double divergence_factor = 1e6;
  double psnr_peak = 1.0;

  void validate() const;
};

nlohmann::json to_json(const InversionConfig& cfg);
InversionConfig inversion_config_from_json(const nlohmann::json& j);

struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

/// Central differences with per-coordinate step 1e-4 * (1 + |x_i|).
Vec finite_difference_grad(const std::function<double(const Vec&)>& f, const Vec& x);

/// Reconstruction objective of one guided DDIM step from step index k:
/// ||target - z_{k-1}(z_bar, cond, null)||^2, differentiated with respect to
/// the embedding in `slot`.
class StepObjective {
 public:
  StepObjective(const Denoiser& den, const NoiseSchedule& sched, Vec z_bar, Vec target, int k, Embedding cond,
                Embedding null, double w, EmbeddingSlot slot);

  double loss(const Vec& logits) const;
  LossGrad analytic(const Vec& logits) const;
  LossGrad finite_difference(const Vec& logits) const;
  LossGrad evaluate(const Vec& logits, GradientMode mode) const;

  /// z_{k-1} with the slot embedding set to `logits`.
  Vec advance(const Vec& logits) const;

 private:
  const Denoiser& den_;
  const NoiseSchedule& sched_;
  Vec z_bar_;
  Vec target_;
  int k_;
  Embedding cond_;
  Embedding null_;
  double w_;
  EmbeddingSlot slot_;
};

/// Gradient of the per-step objective with respect to the null embedding,
/// for a step between DDIM timesteps t > to_t.
LossGrad embedding_grad(const Denoiser& den, const Vec& z_bar, const Vec& target, int t, int to_t,
                        const Embedding& cond, const Embedding& null_t, double w, const NoiseSchedule& sched,
                        GradientMode mode = GradientMode::FiniteDifference);

/// Denoising objective ||noise - eps_hat||^2 at a forward-noised latent. The
/// text slot uses the unguided conditional prediction; the null slot the
/// guided prediction.
class NoiseObjective {
 public:
  NoiseObjective(const Denoiser& den, Vec z, Vec noise, int t, Embedding cond, Embedding null, double w,
                 EmbeddingSlot slot);

  double loss(const Vec& logits) const;
  LossGrad analytic(const Vec& logits) const;
  LossGrad finite_difference(const Vec& logits) const;
  LossGrad evaluate(const Vec& logits, GradientMode mode) const;

 private:
  Vec predict(const Vec& logits) const;

  const Denoiser& den_;
  Vec z_;
  Vec noise_;
  int t_;
  Embedding cond_;
  Embedding null_;
  double w_;
  EmbeddingSlot slot_;
};

class EmbeddingOptimizer {
 public:
  EmbeddingOptimizer(OptimizerKind kind, double lr, double beta1, int dim);
  void reset();
  void step(Vec& x, const Vec& grad);

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_;
  double beta2_ = 0.999;
  Vec m_;
  Vec v_;
  int count_ = 0;
};

struct InversionResult {
  Variant variant = Variant::NullPivotal;
  InversionConfig config;
  EmbeddingSlot slot = EmbeddingSlot::Null;
  Vec source;                         // x0 being inverted
  Embedding fixed;                    // the branch that is not optimized
  Vec z_T;
  std::vector<Embedding> embeddings;  // length T (pivotal) or 1
  Trajectory pivot;
  Trajectory replay;
  std::vector<std::vector<double>> loss_history;
  int iterations = 0;
  MsePsnr metrics;
  std::optional<MsePsnr> metrics_from_pivot;  // stochastic variants replayed from z*_T
};

nlohmann::json to_json(const InversionResult& r);
InversionResult inversion_result_from_json(const nlohmann::json& j);

/// One standard-normal draw reused to noise x0 at every DDIM timestep.
Trajectory random_pivot_trajectory(const Vec& x0, const NoiseSchedule& sched, Rng& rng);

/// Per-timestep pivotal inversion (null-pivotal or text-pivotal).
InversionResult pivotal_invert(const Denoiser& den, const Vec& x0, const Embedding& cond, const InversionConfig& cfg,
                               const NoiseSchedule& sched, Rng& rng);

/// Single shared null embedding, outer loop over iterations, inner over timesteps.
InversionResult global_null_invert(const Denoiser& den, const Vec& x0, const Embedding& cond,
                                   const InversionConfig& cfg, const NoiseSchedule& sched);

/// Random-timestep, fresh-noise optimization of one embedding (text-stochastic
/// updates the conditioning, null-stochastic the null embedding).
InversionResult stochastic_invert(const Denoiser& den, const Vec& x0, const Embedding& cond_init,
                                  const InversionConfig& cfg, int steps, const NoiseSchedule& sched, Rng& rng);

/// Guided DDIM from z_T with per-step conditioning and null lists (each of
/// length 1 or T).
Trajectory replay_guided(const Denoiser& den, const Vec& z_T, std::span<const Embedding> conds,
                         std::span<const Embedding> nulls, double w, const NoiseSchedule& sched);

struct Reconstruction {
  Vec x0_hat;
  double mse = 0.0;
  double psnr = kPsnrCap;
};

/// Replays a stored result from its z_T. For null-slot results `cond` is the
/// conditioning; for conditional-slot results the stored embeddings replace
/// it and `cond` only has to match in size.
Reconstruction reconstruct(const Denoiser& den, const InversionResult& result, const Embedding& cond,
                           const NoiseSchedule& sched);

/// Same z_T and null embeddings, new conditioning. Needs a null-slot result.
Vec edit(const Denoiser& den, const InversionResult& result, const Embedding& target, const NoiseSchedule& sched);

}  // namespace nti
