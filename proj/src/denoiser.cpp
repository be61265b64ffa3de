#include "nti/denoiser.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include <Eigen/QR>

#include "nti/error.hpp"

namespace nti {

void MixtureModel::validate() const {
  if (means.empty()) throw ParameterError("mixture needs at least one component");
  const auto d = means.front().size();
  if (d == 0) throw ParameterError("mixture dimension must be positive");
  for (const auto& m : means) {
    if (m.size() != d) throw ShapeError("mixture means differ in dimension");
    if (!m.allFinite()) throw ParameterError("mixture mean is not finite");
  }
  for (std::size_t i = 0; i < means.size(); ++i)
    for (std::size_t j = i + 1; j < means.size(); ++j)
      if (means[i] == means[j]) throw ParameterError("mixture means must be pairwise distinct");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ParameterError("mixture sigma must be finite and >= 0");
}

MixtureModel MixtureModel::on_circle(int dim, int components, double radius, double sigma) {
  if (dim < 2) throw ParameterError("circle layout needs dim >= 2");
  if (components < 1) throw ParameterError("need at least one component");
  MixtureModel mix;
  mix.sigma = sigma;
  for (int k = 0; k < components; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / components;
    Vec m = Vec::Zero(dim);
    m[0] = radius * std::cos(angle);
    m[1] = radius * std::sin(angle);
    mix.means.push_back(std::move(m));
  }
  mix.validate();
  return mix;
}

PromptTable::PromptTable(int embedding_dim) : dim_(embedding_dim) {
  if (dim_ < 1) throw ParameterError("embedding dimension must be positive");
  entries_.emplace("", Embedding::zeros(dim_));
}

PromptTable PromptTable::one_hot(int components, double kappa) {
  PromptTable table(components);
  for (int k = 0; k < components; ++k) {
    Embedding e = Embedding::zeros(components);
    e.logits[k] = kappa;
    table.add("class" + std::to_string(k), std::move(e));
  }
  return table;
}

void PromptTable::add(std::string token, Embedding e) {
  if (e.size() != dim_) throw ShapeError("embedding for '" + token + "' has wrong dimension");
  if (!e.finite()) throw ParameterError("embedding for '" + token + "' is not finite");
  if (token.empty() && !e.logits.isZero(0.0)) throw ParameterError("the empty prompt must map to zeros");
  entries_.insert_or_assign(std::move(token), std::move(e));
}

const Embedding& PromptTable::embed(std::string_view token) const {
  auto it = entries_.find(token);
  if (it == entries_.end()) throw LookupError("unknown prompt token '" + std::string(token) + "'");
  return it->second;
}

bool PromptTable::contains(std::string_view token) const { return entries_.find(token) != entries_.end(); }

std::vector<std::string> PromptTable::tokens() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

Vec softmax(const Vec& logits) {
  Vec e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

Posterior mixture_posterior(const MixtureModel& mix, const Vec& z, double alpha_bar, const Embedding& c) {
  const int K = mix.components();
  if (z.size() != mix.dim()) throw ShapeError("posterior: latent dimension mismatch");
  if (c.size() != K) throw ShapeError("posterior: embedding dimension mismatch");
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw ParameterError("posterior: alpha_bar must lie in (0,1]");
  const double s2 = mix.sigma * mix.sigma;
  const double v = alpha_bar * s2 + (1.0 - alpha_bar);
  if (!(v > 0.0)) throw DegenerateError("posterior is degenerate: alpha_bar = 1 with sigma = 0");
  const double sa = std::sqrt(alpha_bar);
  const double shrink = sa * s2 / v;

  Posterior post;
  Vec log_r(K);
  post.comp_means.reserve(K);
  for (int k = 0; k < K; ++k) {
    const Vec resid = z - sa * mix.means[k];
    log_r[k] = c.logits[k] - resid.squaredNorm() / (2.0 * v);
    post.comp_means.push_back(mix.means[k] + shrink * resid);
  }
  post.responsibilities = softmax(log_r);
  post.mean = Vec::Zero(z.size());
  for (int k = 0; k < K; ++k) post.mean += post.responsibilities[k] * post.comp_means[k];
  return post;
}

Vec posterior_mean(const MixtureModel& mix, const Vec& z, double alpha_bar, const Embedding& c) {
  return mixture_posterior(mix, z, alpha_bar, c).mean;
}

AnalyticDenoiser::AnalyticDenoiser(MixtureModel mix, NoiseSchedule sched)
    : mix_(std::move(mix)), sched_(std::move(sched)) {
  mix_.validate();
}

double AnalyticDenoiser::checked_alpha_bar(int t) const {
  if (t < 1 || t > sched_.t_train()) throw ParameterError("analytic denoiser: timestep out of range");
  const double ab = sched_.alpha_bar(t);
  if (!(ab < 1.0)) throw DegenerateError("analytic denoiser needs alpha_bar < 1");
  return ab;
}

Vec AnalyticDenoiser::predict_noise(const Vec& z, int t, const Embedding& c) const {
  const double ab = checked_alpha_bar(t);
  const Vec x0 = posterior_mean(mix_, z, ab, c);
  return (z - std::sqrt(ab) * x0) / std::sqrt(1.0 - ab);
}

// eps = (z - sqrt(ab) m) / sqrt(1-ab) with m = sum_k r_k m_k and
// r = softmax(c + loglik), so d m / d c_j = r_j (m_j - m).
Mat AnalyticDenoiser::embedding_jacobian(const Vec& z, int t, const Embedding& c) const {
  const double ab = checked_alpha_bar(t);
  const Posterior post = mixture_posterior(mix_, z, ab, c);
  const double scale = -std::sqrt(ab) / std::sqrt(1.0 - ab);
  Mat J(z.size(), mix_.components());
  for (int j = 0; j < mix_.components(); ++j)
    J.col(j) = scale * post.responsibilities[j] * (post.comp_means[j] - post.mean);
  return J;
}

AffineDenoiser::AffineDenoiser(int dim, int embedding_dim) : dim_(dim), k_(embedding_dim) {
  if (dim_ < 1 || k_ < 1) throw ParameterError("affine denoiser dimensions must be positive");
}

void AffineDenoiser::set_block(int t, Block block) {
  if (block.A.rows() != dim_ || block.A.cols() != dim_ || block.B.rows() != dim_ || block.B.cols() != k_ ||
      block.b.size() != dim_)
    throw ShapeError("affine block has wrong shape at timestep " + std::to_string(t));
  blocks_.insert_or_assign(t, std::move(block));
}

const AffineDenoiser::Block& AffineDenoiser::block(int t) const {
  auto it = blocks_.find(t);
  if (it == blocks_.end()) throw LookupError("affine denoiser has no parameters for timestep " + std::to_string(t));
  return it->second;
}

Vec AffineDenoiser::predict_noise(const Vec& z, int t, const Embedding& c) const {
  if (z.size() != dim_ || c.size() != k_) throw ShapeError("affine denoiser: input dimension mismatch");
  const Block& blk = block(t);
  return blk.A * z + blk.B * c.logits + blk.b;
}

Mat AffineDenoiser::embedding_jacobian(const Vec& z, int t, const Embedding& c) const {
  if (z.size() != dim_ || c.size() != k_) throw ShapeError("affine denoiser: input dimension mismatch");
  return block(t).B;
}

namespace {

nlohmann::json flatten(const Mat& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) arr.push_back(m(r, c));
  return arr;
}

Mat unflatten(const nlohmann::json& arr, Eigen::Index rows, Eigen::Index cols) {
  if (!arr.is_array() || arr.size() != static_cast<std::size_t>(rows * cols))
    throw ShapeError("flattened array has wrong length");
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = arr.at(r * cols + c).get<double>();
  return m;
}

}  // namespace

nlohmann::json AffineDenoiser::to_json() const {
  nlohmann::json blocks = nlohmann::json::object();
  for (const auto& [t, blk] : blocks_) {
    blocks[std::to_string(t)] = {
        {"A", flatten(blk.A)}, {"B", flatten(blk.B)}, {"b", flatten(blk.b)}, {"train_loss", blk.train_loss}};
  }
  return {{"kind", "affine"}, {"dim", dim_}, {"embedding_dim", k_}, {"blocks", blocks}};
}

AffineDenoiser AffineDenoiser::from_json(const nlohmann::json& j) {
  const int d = j.at("dim").get<int>();
  const int k = j.at("embedding_dim").get<int>();
  AffineDenoiser den(d, k);
  for (const auto& [key, val] : j.at("blocks").items()) {
    Block blk;
    blk.A = unflatten(val.at("A"), d, d);
    blk.B = unflatten(val.at("B"), d, k);
    blk.b = unflatten(val.at("b"), d, 1);
    blk.train_loss = val.value("train_loss", 0.0);
    den.set_block(std::stoi(key), std::move(blk));
  }
  return den;
}

std::vector<NoiseSample> draw_noise_samples(const MixtureModel& mix, const PromptTable& table,
                                            const NoiseSchedule& sched, int t, int n, Rng& rng) {
  const auto tokens = table.tokens();
  std::uniform_int_distribution<std::size_t> pick_token(0, tokens.size() - 1);
  std::vector<NoiseSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const Embedding& c = table.embed(tokens[pick_token(rng)]);
    const Vec w = softmax(c.logits);
    std::discrete_distribution<int> pick_comp(w.data(), w.data() + w.size());
    const int k = pick_comp(rng);
    const Vec x0 = mix.means[k] + mix.sigma * standard_normal(rng, mix.dim());
    Vec noise = standard_normal(rng, mix.dim());
    Vec z = forward_noise(x0, t, noise, sched);
    out.push_back({std::move(z), std::move(noise), c});
  }
  return out;
}

double empirical_noise_loss(const Denoiser& den, int t, const std::vector<NoiseSample>& samples) {
  if (samples.empty()) throw ParameterError("empirical loss needs at least one sample");
  double total = 0.0;
  for (const auto& s : samples) total += (s.noise - den.predict_noise(s.z, t, s.c)).squaredNorm();
  return total / static_cast<double>(samples.size());
}

AffineDenoiser train_affine(const MixtureModel& mix, const PromptTable& table, const NoiseSchedule& sched,
                            int n_samples, std::uint64_t seed) {
  mix.validate();
  const int d = mix.dim();
  const int K = mix.components();
  if (table.embedding_dim() != K) throw ShapeError("prompt table and mixture disagree on K");
  const int p = d + K + 1;
  AffineDenoiser den(d, K);
  for (int t : sched.ddim_steps()) {
    if (n_samples < p)
      throw FitError("train_affine: need at least " + std::to_string(p) + " samples per timestep, got " +
                         std::to_string(n_samples) + " at timestep " + std::to_string(t),
                     t);
    Rng rng = make_rng(seed, "train-affine/t=" + std::to_string(t));
    const auto samples = draw_noise_samples(mix, table, sched, t, n_samples, rng);

    Mat X(n_samples, p);
    Mat Y(n_samples, d);
    for (int i = 0; i < n_samples; ++i) {
      X.row(i).segment(0, d) = samples[i].z.transpose();
      X.row(i).segment(d, K) = samples[i].c.logits.transpose();
      X(i, p - 1) = 1.0;
      Y.row(i) = samples[i].noise.transpose();
    }
    Eigen::ColPivHouseholderQR<Mat> qr(X);
    if (qr.rank() < p)
      throw FitError("train_affine: rank-deficient design matrix at timestep " + std::to_string(t), t);
    const Mat W = qr.solve(Y);  // p x d

    AffineDenoiser::Block blk;
    blk.A = W.topRows(d).transpose();
    blk.B = W.middleRows(d, K).transpose();
    blk.b = W.row(p - 1).transpose();
    blk.train_loss = (Y - X * W).rowwise().squaredNorm().mean();
    den.set_block(t, std::move(blk));
  }
  return den;
}

}  // namespace nti
