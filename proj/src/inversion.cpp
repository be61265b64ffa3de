#include "nti/inversion.hpp"

#include <cmath>
#include <random>
#include <string>
#include <utility>

#include "nti/error.hpp"

namespace nti {

namespace {

nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vec_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Coefficient on eps in the DDIM update from from_t to to_t.
double ddim_eps_coeff(int from_t, int to_t, const NoiseSchedule& sched) {
  const double ab_from = sched.alpha_bar(from_t);
  const double ab_to = sched.alpha_bar(to_t);
  return std::sqrt(1.0 - ab_to) - std::sqrt(ab_to) * std::sqrt(1.0 - ab_from) / std::sqrt(ab_from);
}

void check_finite(double loss, int t) {
  if (!std::isfinite(loss)) throw DivergenceError("non-finite loss at timestep " + std::to_string(t), t);
}

void check_growth(double loss, double initial, double factor, int t) {
  check_finite(loss, t);
  if (initial > 0.0 && loss > factor * initial)
    throw DivergenceError("loss grew past " + std::to_string(factor) + "x its initial value at timestep " +
                              std::to_string(t),
                          t);
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::NullPivotal: return "null-pivotal";
    case Variant::TextPivotal: return "text-pivotal";
    case Variant::NullGlobal: return "null-global";
    case Variant::TextStochastic: return "text-stochastic";
    case Variant::NullStochastic: return "null-stochastic";
  }
  return "null-pivotal";
}

std::string to_string(PivotSource p) { return p == PivotSource::DdimW1 ? "ddim-w1" : "random"; }

std::string to_string(OptimizerKind o) {
  switch (o) {
    case OptimizerKind::GradientDescent: return "gd";
    case OptimizerKind::Momentum: return "momentum";
    case OptimizerKind::Adam: return "adam";
  }
  return "gd";
}

std::string to_string(GradientMode g) {
  return g == GradientMode::FiniteDifference ? "finite-difference" : "analytic";
}

std::string to_string(EmbeddingSlot s) { return s == EmbeddingSlot::Null ? "null" : "conditional"; }

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::NullPivotal, Variant::TextPivotal, Variant::NullGlobal, Variant::TextStochastic,
                    Variant::NullStochastic})
    if (to_string(v) == s) return v;
  throw ParameterError("unknown inversion variant '" + s + "'");
}

PivotSource pivot_source_from_string(const std::string& s) {
  if (s == "ddim-w1") return PivotSource::DdimW1;
  if (s == "random") return PivotSource::Random;
  throw ParameterError("unknown pivot source '" + s + "'");
}

OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "gd") return OptimizerKind::GradientDescent;
  if (s == "momentum") return OptimizerKind::Momentum;
  if (s == "adam") return OptimizerKind::Adam;
  throw ParameterError("unknown optimizer '" + s + "'");
}

GradientMode gradient_mode_from_string(const std::string& s) {
  if (s == "finite-difference") return GradientMode::FiniteDifference;
  if (s == "analytic") return GradientMode::Analytic;
  throw ParameterError("unknown gradient mode '" + s + "'");
}

EmbeddingSlot slot_of(Variant v) {
  return (v == Variant::TextPivotal || v == Variant::TextStochastic) ? EmbeddingSlot::Conditional
                                                                     : EmbeddingSlot::Null;
}

void InversionConfig::validate() const {
  if (!std::isfinite(w) || w < 0.0) throw ParameterError("guidance scale must be finite and >= 0");
  if (N < 0) throw ParameterError("iteration count N must be >= 0");
  if (!std::isfinite(lr) || lr <= 0.0) throw ParameterError("learning rate must be > 0");
  if (!std::isfinite(early_stop) || early_stop < 0.0) throw ParameterError("early-stop threshold must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("momentum must be in [0,1)");
  if (!(divergence_factor > 1.0)) throw ParameterError("divergence factor must be > 1");
  if (!std::isfinite(psnr_peak) || psnr_peak <= 0.0) throw ParameterError("PSNR peak must be > 0");
}

nlohmann::json to_json(const InversionConfig& cfg) {
  return {{"w", cfg.w},
          {"N", cfg.N},
          {"lr", cfg.lr},
          {"early_stop", cfg.early_stop},
          {"variant", to_string(cfg.variant)},
          {"pivot_source", to_string(cfg.pivot_source)},
          {"optimizer", to_string(cfg.optimizer)},
          {"momentum", cfg.momentum},
          {"gradient", to_string(cfg.gradient)},
          {"divergence_factor", cfg.divergence_factor},
          {"psnr_peak", cfg.psnr_peak}};
}

InversionConfig inversion_config_from_json(const nlohmann::json& j) {
  InversionConfig cfg;
  cfg.w = j.at("w").get<double>();
  cfg.N = j.at("N").get<int>();
  cfg.lr = j.at("lr").get<double>();
  cfg.early_stop = j.at("early_stop").get<double>();
  cfg.variant = variant_from_string(j.at("variant").get<std::string>());
  cfg.pivot_source = pivot_source_from_string(j.at("pivot_source").get<std::string>());
  cfg.optimizer = optimizer_from_string(j.at("optimizer").get<std::string>());
  cfg.momentum = j.at("momentum").get<double>();
  cfg.gradient = gradient_mode_from_string(j.at("gradient").get<std::string>());
  cfg.divergence_factor = j.at("divergence_factor").get<double>();
  cfg.psnr_peak = j.at("psnr_peak").get<double>();
  cfg.validate();
  return cfg;
}

Vec finite_difference_grad(const std::function<double(const Vec&)>& f, const Vec& x) {
  Vec g(x.size());
  Vec probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double h = 1e-4 * (1.0 + std::abs(x[i]));
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ---- StepObjective ----

StepObjective::StepObjective(const Denoiser& den, const NoiseSchedule& sched, Vec z_bar, Vec target, int k,
                             Embedding cond, Embedding null, double w, EmbeddingSlot slot)
    : den_(den),
      sched_(sched),
      z_bar_(std::move(z_bar)),
      target_(std::move(target)),
      k_(k),
      cond_(std::move(cond)),
      null_(std::move(null)),
      w_(w),
      slot_(slot) {
  if (k_ < 1 || k_ > sched_.num_steps()) throw ParameterError("step objective: step index out of range");
  if (z_bar_.size() != den_.dim() || target_.size() != den_.dim())
    throw ShapeError("step objective: latent dimension mismatch");
}

Vec StepObjective::advance(const Vec& logits) const {
  if (slot_ == EmbeddingSlot::Null) return guided_ddim_step(den_, z_bar_, k_, cond_, Embedding{logits}, w_, sched_);
  return guided_ddim_step(den_, z_bar_, k_, Embedding{logits}, null_, w_, sched_);
}

double StepObjective::loss(const Vec& logits) const { return (target_ - advance(logits)).squaredNorm(); }

LossGrad StepObjective::analytic(const Vec& logits) const {
  const int from_t = sched_.timestep(k_);
  const int to_t = sched_.timestep(k_ - 1);
  const Vec next = advance(logits);
  const Vec resid = target_ - next;
  const double branch = slot_ == EmbeddingSlot::Null ? 1.0 - w_ : w_;
  const Mat J = den_.embedding_jacobian(z_bar_, from_t, Embedding{logits});
  const double b = ddim_eps_coeff(from_t, to_t, sched_);
  return {resid.squaredNorm(), -2.0 * b * branch * (J.transpose() * resid)};
}

LossGrad StepObjective::finite_difference(const Vec& logits) const {
  return {loss(logits), finite_difference_grad([this](const Vec& x) { return loss(x); }, logits)};
}

LossGrad StepObjective::evaluate(const Vec& logits, GradientMode mode) const {
  return mode == GradientMode::Analytic ? analytic(logits) : finite_difference(logits);
}

LossGrad embedding_grad(const Denoiser& den, const Vec& z_bar, const Vec& target, int t, int to_t,
                        const Embedding& cond, const Embedding& null_t, double w, const NoiseSchedule& sched,
                        GradientMode mode) {
  const int T = sched.num_steps();
  for (int k = 1; k <= T; ++k) {
    if (sched.timestep(k) == t) {
      if (sched.timestep(k - 1) != to_t)
        throw ParameterError("embedding_grad: to_t must be the DDIM timestep preceding t");
      StepObjective obj(den, sched, z_bar, target, k, cond, null_t, w, EmbeddingSlot::Null);
      return obj.evaluate(null_t.logits, mode);
    }
  }
  throw ParameterError("embedding_grad: t = " + std::to_string(t) + " is not a DDIM timestep");
}

// ---- NoiseObjective ----

NoiseObjective::NoiseObjective(const Denoiser& den, Vec z, Vec noise, int t, Embedding cond, Embedding null,
                               double w, EmbeddingSlot slot)
    : den_(den),
      z_(std::move(z)),
      noise_(std::move(noise)),
      t_(t),
      cond_(std::move(cond)),
      null_(std::move(null)),
      w_(w),
      slot_(slot) {
  if (z_.size() != den_.dim() || noise_.size() != den_.dim())
    throw ShapeError("noise objective: latent dimension mismatch");
}

Vec NoiseObjective::predict(const Vec& logits) const {
  if (slot_ == EmbeddingSlot::Conditional) return den_.predict_noise(z_, t_, Embedding{logits});
  return guided_noise(den_, z_, t_, cond_, Embedding{logits}, w_);
}

double NoiseObjective::loss(const Vec& logits) const { return (noise_ - predict(logits)).squaredNorm(); }

LossGrad NoiseObjective::analytic(const Vec& logits) const {
  const Vec resid = noise_ - predict(logits);
  const double branch = slot_ == EmbeddingSlot::Conditional ? 1.0 : 1.0 - w_;
  const Mat J = den_.embedding_jacobian(z_, t_, Embedding{logits});
  return {resid.squaredNorm(), -2.0 * branch * (J.transpose() * resid)};
}

LossGrad NoiseObjective::finite_difference(const Vec& logits) const {
  return {loss(logits), finite_difference_grad([this](const Vec& x) { return loss(x); }, logits)};
}

LossGrad NoiseObjective::evaluate(const Vec& logits, GradientMode mode) const {
  return mode == GradientMode::Analytic ? analytic(logits) : finite_difference(logits);
}

// ---- EmbeddingOptimizer ----

EmbeddingOptimizer::EmbeddingOptimizer(OptimizerKind kind, double lr, double beta1, int dim)
    : kind_(kind), lr_(lr), beta1_(beta1), m_(Vec::Zero(dim)), v_(Vec::Zero(dim)) {}

void EmbeddingOptimizer::reset() {
  m_.setZero();
  v_.setZero();
  count_ = 0;
}

void EmbeddingOptimizer::step(Vec& x, const Vec& grad) {
  if (grad.size() != x.size()) throw ShapeError("optimizer: gradient and parameter differ in size");
  ++count_;
  switch (kind_) {
    case OptimizerKind::GradientDescent:
      x -= lr_ * grad;
      break;
    case OptimizerKind::Momentum:
      m_ = beta1_ * m_ + grad;
      x -= lr_ * m_;
      break;
    case OptimizerKind::Adam: {
      m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
      v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1_, count_);
      const double c2 = 1.0 - std::pow(beta2_, count_);
      x -= lr_ * ((m_ / c1).array() / ((v_ / c2).array().sqrt() + 1e-8)).matrix();
      break;
    }
  }
}

// ---- result serialization ----

nlohmann::json to_json(const InversionResult& r) {
  nlohmann::json embeddings = nlohmann::json::array();
  for (const auto& e : r.embeddings) embeddings.push_back(vec_json(e.logits));
  nlohmann::json j = {{"variant", to_string(r.variant)},
                      {"config", to_json(r.config)},
                      {"slot", to_string(r.slot)},
                      {"source", vec_json(r.source)},
                      {"fixed_embedding", vec_json(r.fixed.logits)},
                      {"z_T", vec_json(r.z_T)},
                      {"embeddings", embeddings},
                      {"pivot", to_json(r.pivot)},
                      {"replay", to_json(r.replay)},
                      {"loss_history", r.loss_history},
                      {"iterations", r.iterations},
                      {"mse", r.metrics.mse},
                      {"psnr", r.metrics.psnr}};
  if (r.metrics_from_pivot) {
    j["mse_from_pivot"] = r.metrics_from_pivot->mse;
    j["psnr_from_pivot"] = r.metrics_from_pivot->psnr;
  }
  return j;
}

InversionResult inversion_result_from_json(const nlohmann::json& j) {
  InversionResult r;
  r.variant = variant_from_string(j.at("variant").get<std::string>());
  r.config = inversion_config_from_json(j.at("config"));
  r.slot = j.at("slot").get<std::string>() == "null" ? EmbeddingSlot::Null : EmbeddingSlot::Conditional;
  r.source = vec_from_json(j.at("source"));
  r.fixed = Embedding{vec_from_json(j.at("fixed_embedding"))};
  r.z_T = vec_from_json(j.at("z_T"));
  for (const auto& e : j.at("embeddings")) r.embeddings.push_back(Embedding{vec_from_json(e)});
  r.pivot = trajectory_from_json(j.at("pivot"));
  r.replay = trajectory_from_json(j.at("replay"));
  r.loss_history = j.at("loss_history").get<std::vector<std::vector<double>>>();
  r.iterations = j.at("iterations").get<int>();
  r.metrics = {j.at("mse").get<double>(), j.at("psnr").get<double>()};
  if (j.contains("mse_from_pivot"))
    r.metrics_from_pivot = MsePsnr{j.at("mse_from_pivot").get<double>(), j.at("psnr_from_pivot").get<double>()};
  if (r.embeddings.empty()) throw ShapeError("inversion result has no embeddings");
  for (const auto& e : r.embeddings)
    if (e.size() != r.fixed.size()) throw ShapeError("inversion result embeddings differ in size");
  if (r.z_T.size() != r.source.size()) throw ShapeError("inversion result latents differ in size");
  return r;
}

// ---- trajectories ----

Trajectory random_pivot_trajectory(const Vec& x0, const NoiseSchedule& sched, Rng& rng) {
  const int T = sched.num_steps();
  const Vec noise = standard_normal(rng, static_cast<int>(x0.size()));
  Trajectory traj;
  traj.role = TrajectoryRole::Pivot;
  traj.w = 1.0;
  traj.codes.resize(T + 1);
  traj.codes[0] = x0;
  for (int k = 1; k <= T; ++k) traj.codes[k] = forward_noise(x0, sched.timestep(k), noise, sched);
  return traj;
}

Trajectory replay_guided(const Denoiser& den, const Vec& z_T, std::span<const Embedding> conds,
                         std::span<const Embedding> nulls, double w, const NoiseSchedule& sched) {
  const int T = sched.num_steps();
  const auto ok = [T](std::size_t n) { return n == 1 || n == static_cast<std::size_t>(T); };
  if (!ok(conds.size()) || !ok(nulls.size()))
    throw ParameterError("replay needs 1 or " + std::to_string(T) + " embeddings per branch");
  Trajectory traj;
  traj.role = TrajectoryRole::Replay;
  traj.w = w;
  traj.codes.resize(T + 1);
  traj.codes[T] = z_T;
  for (int k = T; k >= 1; --k)
    traj.codes[k - 1] =
        guided_ddim_step(den, traj.codes[k], k, null_for_step(conds, k), null_for_step(nulls, k), w, sched);
  return traj;
}

namespace {

Trajectory replay_result(const Denoiser& den, const InversionResult& r, const Vec& z_T, const NoiseSchedule& sched) {
  const std::span<const Embedding> optimized(r.embeddings);
  const std::span<const Embedding> fixed(&r.fixed, 1);
  if (r.slot == EmbeddingSlot::Null) return replay_guided(den, z_T, fixed, optimized, r.config.w, sched);
  return replay_guided(den, z_T, optimized, fixed, r.config.w, sched);
}

void check_inputs(const Denoiser& den, const Vec& x0, const Embedding& cond, const InversionConfig& cfg) {
  cfg.validate();
  if (x0.size() != den.dim()) throw ShapeError("source latent does not match the denoiser dimension");
  if (cond.size() != den.embedding_dim()) throw ShapeError("embedding does not match the denoiser");
}

}  // namespace

InversionResult pivotal_invert(const Denoiser& den, const Vec& x0, const Embedding& cond, const InversionConfig& cfg,
                               const NoiseSchedule& sched, Rng& rng) {
  check_inputs(den, x0, cond, cfg);
  const int T = sched.num_steps();
  const int K = den.embedding_dim();

  InversionResult r;
  r.variant = cfg.variant == Variant::TextPivotal ? Variant::TextPivotal : Variant::NullPivotal;
  r.config = cfg;
  r.config.variant = r.variant;
  r.slot = slot_of(r.variant);
  r.source = x0;
  r.fixed = r.slot == EmbeddingSlot::Null ? cond : Embedding::zeros(K);
  r.pivot = cfg.pivot_source == PivotSource::Random ? random_pivot_trajectory(x0, sched, rng)
                                                    : ddim_invert(den, x0, cond, 1.0, sched);
  r.z_T = r.pivot.terminal();
  r.embeddings.assign(T, Embedding{});
  r.loss_history.assign(T, {});

  EmbeddingOptimizer opt(cfg.optimizer, cfg.lr, cfg.momentum, K);
  Vec e = r.slot == EmbeddingSlot::Null ? Vec::Zero(K) : cond.logits;
  Vec z_bar = r.z_T;
  for (int k = T; k >= 1; --k) {
    const int t = sched.timestep(k);
    const Embedding& c_fix = r.slot == EmbeddingSlot::Null ? cond : r.fixed;
    StepObjective obj(den, sched, z_bar, r.pivot.at(k - 1), k, c_fix, r.fixed, cfg.w, r.slot);
    opt.reset();
    auto& hist = r.loss_history[k - 1];
    for (int j = 0; j < cfg.N; ++j) {
      const LossGrad lg = obj.evaluate(e, cfg.gradient);
      if (hist.empty()) check_finite(lg.loss, t);
      else check_growth(lg.loss, hist.front(), cfg.divergence_factor, t);
      hist.push_back(lg.loss);
      if (lg.loss <= cfg.early_stop) break;
      opt.step(e, lg.grad);
      ++r.iterations;
    }
    if (!e.allFinite()) throw DivergenceError("non-finite embedding at timestep " + std::to_string(t), t);
    r.embeddings[k - 1] = Embedding{e};
    z_bar = obj.advance(e);
  }

  r.replay = replay_result(den, r, r.z_T, sched);
  r.metrics = mse_psnr(x0, r.replay.data(), cfg.psnr_peak);
  return r;
}

InversionResult global_null_invert(const Denoiser& den, const Vec& x0, const Embedding& cond,
                                   const InversionConfig& cfg, const NoiseSchedule& sched) {
  check_inputs(den, x0, cond, cfg);
  const int T = sched.num_steps();
  const int K = den.embedding_dim();

  InversionResult r;
  r.variant = Variant::NullGlobal;
  r.config = cfg;
  r.config.variant = r.variant;
  r.slot = EmbeddingSlot::Null;
  r.source = x0;
  r.fixed = cond;
  r.pivot = ddim_invert(den, x0, cond, 1.0, sched);
  r.z_T = r.pivot.terminal();
  r.loss_history.assign(T, {});

  EmbeddingOptimizer opt(cfg.optimizer, cfg.lr, cfg.momentum, K);
  Vec e = Vec::Zero(K);
  for (int j = 0; j < cfg.N; ++j) {
    Vec z_bar = r.z_T;
    for (int k = T; k >= 1; --k) {
      const int t = sched.timestep(k);
      StepObjective obj(den, sched, z_bar, r.pivot.at(k - 1), k, cond, r.fixed, cfg.w, EmbeddingSlot::Null);
      const LossGrad lg = obj.evaluate(e, cfg.gradient);
      auto& hist = r.loss_history[k - 1];
      if (hist.empty()) check_finite(lg.loss, t);
      else check_growth(lg.loss, hist.front(), cfg.divergence_factor, t);
      hist.push_back(lg.loss);
      if (lg.loss > cfg.early_stop) {
        opt.step(e, lg.grad);
        ++r.iterations;
      }
      if (!e.allFinite()) throw DivergenceError("non-finite embedding at timestep " + std::to_string(t), t);
      z_bar = obj.advance(e);
    }
  }

  r.embeddings = {Embedding{e}};
  r.replay = replay_result(den, r, r.z_T, sched);
  r.metrics = mse_psnr(x0, r.replay.data(), cfg.psnr_peak);
  return r;
}

InversionResult stochastic_invert(const Denoiser& den, const Vec& x0, const Embedding& cond_init,
                                  const InversionConfig& cfg, int steps, const NoiseSchedule& sched, Rng& rng) {
  check_inputs(den, x0, cond_init, cfg);
  if (steps < 0) throw ParameterError("stochastic inversion needs steps >= 0");
  if (cfg.variant != Variant::TextStochastic && cfg.variant != Variant::NullStochastic)
    throw ParameterError("stochastic_invert needs a stochastic variant");
  const int T = sched.num_steps();
  const int K = den.embedding_dim();
  const int d = den.dim();

  InversionResult r;
  r.variant = cfg.variant;
  r.config = cfg;
  r.slot = slot_of(cfg.variant);
  r.source = x0;
  r.fixed = r.slot == EmbeddingSlot::Null ? cond_init : Embedding::zeros(K);
  r.z_T = standard_normal(rng, d);
  r.loss_history.assign(1, {});

  EmbeddingOptimizer opt(cfg.optimizer, cfg.lr, cfg.momentum, K);
  Vec e = r.slot == EmbeddingSlot::Null ? Vec::Zero(K) : cond_init.logits;
  std::uniform_int_distribution<int> pick(1, T);
  auto& hist = r.loss_history.front();
  for (int s = 0; s < steps; ++s) {
    const int t = sched.timestep(pick(rng));
    const Vec noise = standard_normal(rng, d);
    const Vec z = forward_noise(x0, t, noise, sched);
    NoiseObjective obj(den, z, noise, t, r.fixed, r.fixed, cfg.w, r.slot);
    const LossGrad lg = obj.evaluate(e, cfg.gradient);
    if (hist.empty()) check_finite(lg.loss, t);
    else check_growth(lg.loss, hist.front(), cfg.divergence_factor, t);
    hist.push_back(lg.loss);
    if (lg.loss <= cfg.early_stop) continue;
    opt.step(e, lg.grad);
    ++r.iterations;
    if (!e.allFinite()) throw DivergenceError("non-finite embedding at timestep " + std::to_string(t), t);
  }

  r.embeddings = {Embedding{e}};
  r.pivot = ddim_invert(den, x0, cond_init, 1.0, sched);
  r.replay = replay_result(den, r, r.z_T, sched);
  r.metrics = mse_psnr(x0, r.replay.data(), cfg.psnr_peak);
  const Trajectory from_pivot = replay_result(den, r, r.pivot.terminal(), sched);
  r.metrics_from_pivot = mse_psnr(x0, from_pivot.data(), cfg.psnr_peak);
  return r;
}

Reconstruction reconstruct(const Denoiser& den, const InversionResult& result, const Embedding& cond,
                           const NoiseSchedule& sched) {
  if (cond.size() != den.embedding_dim()) throw ShapeError("embedding does not match the denoiser");
  if (result.z_T.size() != den.dim()) throw ShapeError("stored z_T does not match the denoiser");
  Trajectory traj;
  if (result.slot == EmbeddingSlot::Null) {
    const std::span<const Embedding> conds(&cond, 1);
    traj = replay_guided(den, result.z_T, conds, result.embeddings, result.config.w, sched);
  } else {
    traj = replay_result(den, result, result.z_T, sched);
  }
  const MsePsnr m = mse_psnr(result.source, traj.data(), result.config.psnr_peak);
  return {traj.data(), m.mse, m.psnr};
}

Vec edit(const Denoiser& den, const InversionResult& result, const Embedding& target, const NoiseSchedule& sched) {
  if (result.slot != EmbeddingSlot::Null)
    throw ParameterError("editing needs optimized null embeddings; " + to_string(result.variant) +
                         " optimizes the conditioning");
  if (target.size() != den.embedding_dim()) throw ShapeError("target embedding does not match the denoiser");
  const std::span<const Embedding> conds(&target, 1);
  return replay_guided(den, result.z_T, conds, result.embeddings, result.config.w, sched).data();
}

}  // namespace nti
