#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nti/rng.hpp"
#include "nti/schedule.hpp"
#include "nti/types.hpp"

namespace nti {

/// Isotropic Gaussian mixture standing in for the data distribution.
/// Components share one standard deviation; weights come from the
/// conditioning embedding.
struct MixtureModel {
  std::vector<Vec> means;
  double sigma = 0.3;

  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
  int components() const { return static_cast<int>(means.size()); }
  void validate() const;

  /// K means evenly spaced on a circle in the first two coordinates.
  static MixtureModel on_circle(int dim, int components, double radius, double sigma);
};

/// Token -> embedding lookup. Always contains the empty prompt, mapped to
/// the all-zero logits (uniform weights).
class PromptTable {
 public:
  explicit PromptTable(int embedding_dim);

  /// "" -> zeros, "class<k>" -> kappa * e_k.
  static PromptTable one_hot(int components, double kappa);

  void add(std::string token, Embedding e);
  const Embedding& embed(std::string_view token) const;
  bool contains(std::string_view token) const;
  std::vector<std::string> tokens() const;
  int embedding_dim() const { return dim_; }

 private:
  int dim_;
  std::map<std::string, Embedding, std::less<>> entries_;
};

inline const Embedding& embed(const PromptTable& table, std::string_view token) { return table.embed(token); }

Vec softmax(const Vec& logits);

struct Posterior {
  Vec mean;                      // E[x0 | z]
  Vec responsibilities;          // r_k, sums to one
  std::vector<Vec> comp_means;   // E[x0 | z, component k]
};

/// Closed-form posterior of x0 given z = sqrt(ab) x0 + sqrt(1-ab) n under the
/// mixture with weights softmax(c).
Posterior mixture_posterior(const MixtureModel& mix, const Vec& z, double alpha_bar, const Embedding& c);
Vec posterior_mean(const MixtureModel& mix, const Vec& z, double alpha_bar, const Embedding& c);

/// Noise predictor eps(z_t, t, c).
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual Vec predict_noise(const Vec& z, int t, const Embedding& c) const = 0;
  /// d eps / d c, a dim x embedding_dim matrix.
  virtual Mat embedding_jacobian(const Vec& z, int t, const Embedding& c) const = 0;

  virtual int dim() const = 0;
  virtual int embedding_dim() const = 0;
};

/// Exact MMSE noise predictor for the mixture data model.
class AnalyticDenoiser final : public Denoiser {
 public:
  AnalyticDenoiser(MixtureModel mix, NoiseSchedule sched);

  Vec predict_noise(const Vec& z, int t, const Embedding& c) const override;
  Mat embedding_jacobian(const Vec& z, int t, const Embedding& c) const override;
  int dim() const override { return mix_.dim(); }
  int embedding_dim() const override { return mix_.components(); }

  const MixtureModel& mixture() const { return mix_; }

 private:
  double checked_alpha_bar(int t) const;

  MixtureModel mix_;
  NoiseSchedule sched_;
};

/// eps = A_t z + B_t c + b_t, one parameter block per DDIM timestep.
class AffineDenoiser final : public Denoiser {
 public:
  struct Block {
    Mat A;  // d x d
    Mat B;  // d x K
    Vec b;  // d
    double train_loss = 0.0;
  };

  AffineDenoiser(int dim, int embedding_dim);

  void set_block(int t, Block block);
  const Block& block(int t) const;
  const std::map<int, Block>& blocks() const { return blocks_; }

  Vec predict_noise(const Vec& z, int t, const Embedding& c) const override;
  Mat embedding_jacobian(const Vec& z, int t, const Embedding& c) const override;
  int dim() const override { return dim_; }
  int embedding_dim() const override { return k_; }

  nlohmann::json to_json() const;
  static AffineDenoiser from_json(const nlohmann::json& j);

 private:
  int dim_;
  int k_;
  std::map<int, Block> blocks_;
};

struct NoiseSample {
  Vec z;
  Vec noise;
  Embedding c;
};

/// Draws (x0, c, noise) triples at timestep t: token uniform over the table,
/// component ~ softmax(c), x0 ~ N(mu_k, sigma^2 I), z = forward_noise(x0, t, noise).
std::vector<NoiseSample> draw_noise_samples(const MixtureModel& mix, const PromptTable& table,
                                            const NoiseSchedule& sched, int t, int n, Rng& rng);

/// Mean over samples of ||noise - eps(z, t, c)||^2.
double empirical_noise_loss(const Denoiser& den, int t, const std::vector<NoiseSample>& samples);

/// Per-timestep closed-form least squares on the noise-prediction objective.
AffineDenoiser train_affine(const MixtureModel& mix, const PromptTable& table, const NoiseSchedule& sched,
                            int n_samples, std::uint64_t seed);

}  // namespace nti
