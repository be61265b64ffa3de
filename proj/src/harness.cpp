#include "nti/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "nti/error.hpp"
#include "nti/metrics.hpp"
#include "nti/rng.hpp"
#include "nti/sampler.hpp"

namespace nti {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config ----

ExperimentConfig ExperimentConfig::defaults() {
  ExperimentConfig cfg;
  for (int n = 1; n <= 20; ++n) cfg.sweeps.N.push_back(n);
  for (int w = 1; w <= 8; ++w) cfg.sweeps.w.push_back(w);
  cfg.sweeps.t0 = {0.4, 0.6, 0.8};
  for (std::uint64_t s = 1; s <= 20; ++s) cfg.seeds.push_back(s);
  return cfg;
}

namespace {

// Walks one JSON object, consuming keys; finish() rejects anything left over.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  void real(const char* key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) fail(key, "a number");
      out = v->get<double>();
    }
  }

  void integer(const char* key, int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "an integer");
      const auto x = v->get<std::int64_t>();
      if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) fail(key, "a 32-bit integer");
      out = static_cast<int>(x);
    }
  }

  void u64(const char* key, std::uint64_t& out) {
    if (const json* v = take(key)) out = as_u64(*v, key);
  }

  void string(const char* key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) fail(key, "a string");
      out = v->get<std::string>();
    }
  }

  void reals(const char* key, std::vector<double>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "an array of numbers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number()) fail(key, "an array of numbers");
        out.push_back(x.get<double>());
      }
    }
  }

  void integers(const char* key, std::vector<int>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "an array of integers");
      out.clear();
      for (const auto& x : *v) {
        if (!x.is_number_integer()) fail(key, "an array of integers");
        out.push_back(x.get<int>());
      }
    }
  }

  void u64s(const char* key, std::vector<std::uint64_t>& out) {
    if (const json* v = take(key)) {
      if (!v->is_array()) fail(key, "an array of unsigned integers");
      out.clear();
      for (const auto& x : *v) out.push_back(as_u64(x, key));
    }
  }

  void matrix(const char* key, std::vector<std::vector<double>>& out) {
    if (const json* v = take(key)) {
      if (v->is_null()) {
        out.clear();
        return;
      }
      if (!v->is_array()) fail(key, "null or an array of number arrays");
      out.clear();
      for (const auto& row : *v) {
        if (!row.is_array()) fail(key, "null or an array of number arrays");
        std::vector<double> r;
        for (const auto& x : row) {
          if (!x.is_number()) fail(key, "null or an array of number arrays");
          r.push_back(x.get<double>());
        }
        out.push_back(std::move(r));
      }
    }
  }

  template <class F>
  void object(const char* key, F&& f) {
    if (const json* v = take(key)) {
      ObjectReader sub(*v, path_.empty() ? key : path_ + "." + key);
      f(sub);
      sub.finish();
    }
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.contains(k)) throw ConfigError("unknown config key '" + (path_.empty() ? k : path_ + "." + k) + "'");
  }

 private:
  const json* take(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::uint64_t as_u64(const json& v, const char* key) const {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
    fail(key, "an unsigned 64-bit integer");
  }

  [[noreturn]] void fail(const char* key, const char* expected) const {
    throw ConfigError("config key '" + (path_.empty() ? std::string(key) : path_ + "." + key) + "' must be " +
                      expected);
  }

  std::string where() const { return path_.empty() ? "config" : "config key '" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
auto as_config_error(F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  ObjectReader root(j, "");
  root.object("schedule", [&](ObjectReader& r) {
    r.integer("t_train", cfg.schedule.t_train);
    r.real("beta_start", cfg.schedule.beta_start);
    r.real("beta_end", cfg.schedule.beta_end);
    r.integer("T", cfg.schedule.T);
  });
  root.object("mixture", [&](ObjectReader& r) {
    r.integer("d", cfg.mixture.d);
    r.integer("K", cfg.mixture.K);
    r.real("radius", cfg.mixture.radius);
    r.matrix("means", cfg.mixture.means);
    r.real("sigma", cfg.mixture.sigma);
    r.real("kappa", cfg.mixture.kappa);
  });
  root.object("denoiser", [&](ObjectReader& r) {
    r.string("kind", cfg.denoiser.kind);
    r.integer("train_samples", cfg.denoiser.train_samples);
    r.u64("train_seed", cfg.denoiser.train_seed);
  });
  root.object("guidance", [&](ObjectReader& r) { r.real("w", cfg.w); });
  root.object("inversion", [&](ObjectReader& r) {
    std::string variant = to_string(cfg.inversion.variant);
    std::string pivot = to_string(cfg.inversion.pivot_source);
    std::string optimizer = to_string(cfg.inversion.optimizer);
    std::string gradient = to_string(cfg.inversion.gradient);
    r.string("variant", variant);
    r.integer("N", cfg.inversion.N);
    r.real("lr", cfg.inversion.lr);
    r.real("early_stop", cfg.inversion.early_stop);
    r.string("pivot_source", pivot);
    r.string("optimizer", optimizer);
    r.real("momentum", cfg.inversion.momentum);
    r.string("gradient", gradient);
    r.real("divergence_factor", cfg.inversion.divergence_factor);
    as_config_error([&] {
      cfg.inversion.variant = variant_from_string(variant);
      cfg.inversion.pivot_source = pivot_source_from_string(pivot);
      cfg.inversion.optimizer = optimizer_from_string(optimizer);
      cfg.inversion.gradient = gradient_mode_from_string(gradient);
      return 0;
    });
  });
  root.object("prompts", [&](ObjectReader& r) {
    r.string("source", cfg.prompts.source);
    r.string("target", cfg.prompts.target);
  });
  root.object("sweeps", [&](ObjectReader& r) {
    r.integers("N", cfg.sweeps.N);
    r.reals("w", cfg.sweeps.w);
    r.reals("t0", cfg.sweeps.t0);
  });
  root.u64s("seeds", cfg.seeds);
  root.object("output", [&](ObjectReader& r) { r.string("dir", cfg.output_dir); });
  root.integer("workers", cfg.workers);
  root.finish();
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

json to_json(const ExperimentConfig& cfg) {
  json means = nullptr;
  if (!cfg.mixture.means.empty()) means = cfg.mixture.means;
  json inv = to_json(cfg.inversion);
  inv.erase("w");
  inv.erase("psnr_peak");
  return {{"schedule",
           {{"t_train", cfg.schedule.t_train},
            {"beta_start", cfg.schedule.beta_start},
            {"beta_end", cfg.schedule.beta_end},
            {"T", cfg.schedule.T}}},
          {"mixture",
           {{"d", cfg.mixture.d},
            {"K", cfg.mixture.K},
            {"radius", cfg.mixture.radius},
            {"means", means},
            {"sigma", cfg.mixture.sigma},
            {"kappa", cfg.mixture.kappa}}},
          {"denoiser",
           {{"kind", cfg.denoiser.kind},
            {"train_samples", cfg.denoiser.train_samples},
            {"train_seed", cfg.denoiser.train_seed}}},
          {"guidance", {{"w", cfg.w}}},
          {"inversion", inv},
          {"prompts", {{"source", cfg.prompts.source}, {"target", cfg.prompts.target}}},
          {"sweeps", {{"N", cfg.sweeps.N}, {"w", cfg.sweeps.w}, {"t0", cfg.sweeps.t0}}},
          {"seeds", cfg.seeds},
          {"output", {{"dir", cfg.output_dir}}},
          {"workers", cfg.workers}};
}

namespace {

MixtureModel build_mixture(const ExperimentConfig::Mixture& m) {
  if (m.means.empty()) return MixtureModel::on_circle(m.d, m.K, m.radius, m.sigma);
  MixtureModel mix;
  mix.sigma = m.sigma;
  for (const auto& row : m.means) {
    if (static_cast<int>(row.size()) != m.d) throw ConfigError("mixture.means rows must have length d");
    mix.means.push_back(Eigen::Map<const Vec>(row.data(), static_cast<Eigen::Index>(row.size())));
  }
  if (mix.components() != m.K) throw ConfigError("mixture.means must have K rows");
  mix.validate();
  return mix;
}

}  // namespace

void ExperimentConfig::validate() const {
  as_config_error([&] {
    make_linear_schedule(schedule.t_train, schedule.beta_start, schedule.beta_end, schedule.T);
    return 0;
  });
  if (mixture.d < 1 || mixture.K < 1) throw ConfigError("mixture.d and mixture.K must be >= 1");
  if (!(std::isfinite(mixture.sigma) && mixture.sigma > 0.0)) throw ConfigError("mixture.sigma must be > 0");
  if (!std::isfinite(mixture.kappa)) throw ConfigError("mixture.kappa must be finite");
  if (!std::isfinite(mixture.radius)) throw ConfigError("mixture.radius must be finite");
  as_config_error([&] { return build_mixture(mixture).dim(); });
  if (denoiser.kind != "analytic" && denoiser.kind != "affine")
    throw ConfigError("denoiser.kind must be 'analytic' or 'affine'");
  if (denoiser.train_samples < 1) throw ConfigError("denoiser.train_samples must be >= 1");
  if (!std::isfinite(w) || w < 0.0) throw ConfigError("guidance.w must be finite and >= 0");
  as_config_error([&] {
    InversionConfig c = inversion;
    c.w = w;
    c.psnr_peak = 1.0;
    c.validate();
    return 0;
  });
  const PromptTable table = PromptTable::one_hot(mixture.K, mixture.kappa);
  for (const auto* token : {&prompts.source, &prompts.target})
    if (!table.contains(*token)) throw ConfigError("prompt '" + *token + "' is not in the prompt table");
  if (sweeps.N.empty() || sweeps.w.empty() || sweeps.t0.empty()) throw ConfigError("sweep lists must be non-empty");
  for (int n : sweeps.N)
    if (n < 0) throw ConfigError("sweeps.N entries must be >= 0");
  for (double x : sweeps.w)
    if (!(x >= 1.0 && x <= 8.0)) throw ConfigError("sweeps.w entries must lie in [1, 8]");
  for (double x : sweeps.t0)
    if (!(x > 0.0 && x < 1.0)) throw ConfigError("sweeps.t0 entries must lie in (0, 1)");
  if (seeds.empty()) throw ConfigError("seed list must be non-empty");
  if (workers < 0) throw ConfigError("workers must be >= 0");
}

// ---- experiment ----

namespace {

NoiseSchedule build_schedule(const ExperimentConfig& cfg) {
  cfg.validate();
  return make_linear_schedule(cfg.schedule.t_train, cfg.schedule.beta_start, cfg.schedule.beta_end, cfg.schedule.T);
}

int argmax(const Vec& v) {
  Eigen::Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

}  // namespace

Experiment::Experiment(ExperimentConfig cfg)
    : cfg_(std::move(cfg)),
      sched_(build_schedule(cfg_)),
      mix_(build_mixture(cfg_.mixture)),
      table_(PromptTable::one_hot(cfg_.mixture.K, cfg_.mixture.kappa)),
      peak_(psnr_peak(mix_)) {
  if (cfg_.denoiser.kind == "affine")
    den_ = std::make_unique<AffineDenoiser>(
        train_affine(mix_, table_, sched_, cfg_.denoiser.train_samples, cfg_.denoiser.train_seed));
  else
    den_ = std::make_unique<AnalyticDenoiser>(mix_, sched_);
}

InversionConfig Experiment::inversion_config() const {
  InversionConfig c = cfg_.inversion;
  c.w = cfg_.w;
  c.psnr_peak = peak_;
  return c;
}

int Experiment::source_component() const { return argmax(table_.embed(cfg_.prompts.source).logits); }
int Experiment::target_component() const { return argmax(table_.embed(cfg_.prompts.target).logits); }

Vec Experiment::source_sample(std::uint64_t seed) const {
  Rng rng = make_rng(seed, "source-sample");
  return mix_.means[source_component()] + mix_.sigma * standard_normal(rng, mix_.dim());
}

InversionResult Experiment::run_variant(const std::string& variant, int N, std::uint64_t seed) const {
  const Vec x0 = source_sample(seed);
  const Embedding& cond = table_.embed(cfg_.prompts.source);
  InversionConfig c = inversion_config();
  c.N = N;
  Rng rng = make_rng(seed, "invert/" + variant);
  if (variant == "ddim-baseline") {
    c.variant = Variant::NullPivotal;
    c.pivot_source = PivotSource::DdimW1;
    c.N = 0;
    return pivotal_invert(*den_, x0, cond, c, sched_, rng);
  }
  if (variant == "random-pivot") {
    c.variant = Variant::NullPivotal;
    c.pivot_source = PivotSource::Random;
    return pivotal_invert(*den_, x0, cond, c, sched_, rng);
  }
  c.variant = variant_from_string(variant);
  switch (c.variant) {
    case Variant::NullPivotal:
    case Variant::TextPivotal:
      return pivotal_invert(*den_, x0, cond, c, sched_, rng);
    case Variant::NullGlobal:
      return global_null_invert(*den_, x0, cond, c, sched_);
    case Variant::TextStochastic:
    case Variant::NullStochastic:
      return stochastic_invert(*den_, x0, cond, c, sched_.num_steps() * N, sched_, rng);
  }
  throw ParameterError("unknown variant " + variant);
}

// ---- tables ----

std::string format_real(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  throw ReportError("table has no column '" + name + "'");
}

std::string Table::to_csv() const {
  std::string out;
  const auto line = [&out](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

namespace {

std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double x = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) return std::nullopt;
  return x;
}

}  // namespace

json Table::to_json(const std::vector<std::string>& exclude) const {
  json rows_j = json::array();
  for (const auto& r : rows) {
    json o = json::object();
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (std::find(exclude.begin(), exclude.end(), header[i]) != exclude.end()) continue;
      const auto x = parse_real(r[i]);
      if (!x) o[header[i]] = r[i];
      else if (!std::isfinite(*x)) o[header[i]] = nullptr;
      else o[header[i]] = *x;
    }
    rows_j.push_back(std::move(o));
  }
  return {{"columns", header}, {"rows", rows_j}};
}

Table Table::from_csv(const std::string& text) {
  Table t;
  std::istringstream in(text);
  std::string line;
  const auto split = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(l);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!l.empty() && l.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line) || line.empty()) throw ReportError("CSV table has no header row");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw ReportError("CSV row has " + std::to_string(cells.size()) +
                                                           " cells, header has " + std::to_string(t.header.size()));
    t.rows.push_back(std::move(cells));
  }
  return t;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  if (n <= 0) return;
  int threads = workers > 0 ? workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, n);
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  const auto work = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!first) first = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(work);
  }
  if (first) std::rethrow_exception(first);
}

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Table run_ablation(const Experiment& exp) {
  const auto& cfg = exp.config();
  const auto& variants = ablation_variants();
  struct Job {
    std::string variant;
    int N;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& v : variants)
    for (int n : cfg.sweeps.N)
      for (auto s : cfg.seeds) jobs.push_back({v, n, s});

  Table t;
  t.header = {"variant", "N", "seed", "status", "iterations_used", "mse", "psnr", "wall_ms"};
  t.rows.resize(jobs.size());
  parallel_for(static_cast<int>(jobs.size()), cfg.workers, [&](int i) {
    const Job& job = jobs[i];
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::string> row = {job.variant, std::to_string(job.N), std::to_string(job.seed)};
    try {
      const InversionResult r = exp.run_variant(job.variant, job.N, job.seed);
      row.insert(row.end(), {"ok", std::to_string(r.iterations), format_real(r.metrics.mse),
                             format_real(r.metrics.psnr)});
    } catch (const DivergenceError&) {
      row.insert(row.end(), {"diverged", "0", "nan", "nan"});
    }
    row.push_back(format_real(elapsed_ms(start)));
    t.rows[i] = std::move(row);
  });
  return t;
}

Table run_guidance_sweep(const Experiment& exp) {
  const auto& cfg = exp.config();
  const Embedding& cond = exp.prompts().embed(cfg.prompts.source);
  const Embedding null = Embedding::zeros(cond.size());
  const int n_seeds = static_cast<int>(cfg.seeds.size());
  const int n = static_cast<int>(cfg.sweeps.w.size()) * n_seeds;

  Table t;
  t.header = {"w", "seed", "loglik", "psnr"};
  t.rows.resize(n);
  parallel_for(n, cfg.workers, [&](int i) {
    const double w = cfg.sweeps.w[i / n_seeds];
    const std::uint64_t seed = cfg.seeds[i % n_seeds];
    const Vec x0 = exp.source_sample(seed);
    const Trajectory pivot = ddim_invert(exp.denoiser(), x0, cond, w, exp.schedule());
    const Trajectory back = ddim_sample(exp.denoiser(), pivot.terminal(), cond, std::span(&null, 1), w, exp.schedule());
    const MsePsnr m = mse_psnr(x0, back.data(), exp.peak());
    t.rows[i] = {format_real(w), std::to_string(seed), format_real(gaussian_loglik(pivot.terminal())),
                 format_real(m.psnr)};
  });
  return t;
}

Table run_sdedit_eval(const Experiment& exp) {
  const auto& cfg = exp.config();
  const Embedding& target = exp.prompts().embed(cfg.prompts.target);
  const Embedding null = Embedding::zeros(target.size());
  const int n_seeds = static_cast<int>(cfg.seeds.size());
  const int n_t0 = static_cast<int>(cfg.sweeps.t0.size());
  const int k_target = exp.target_component();

  // per seed: [t0 index][mode]
  std::vector<std::vector<std::array<std::vector<std::string>, 2>>> cells(n_seeds);
  parallel_for(n_seeds, cfg.workers, [&](int i) {
    const std::uint64_t seed = cfg.seeds[i];
    const Vec x0 = exp.source_sample(seed);
    const InversionResult inv = exp.run_variant("null-pivotal", cfg.inversion.N, seed);
    cells[i].resize(n_t0);
    for (int j = 0; j < n_t0; ++j) {
      const double t0 = cfg.sweeps.t0[j];
      const Rng paired = make_rng(seed, "sdedit/t0=" + format_real(t0));
      for (int mode = 0; mode < 2; ++mode) {
        Rng rng = paired;
        const Vec out = mode == 0 ? sdedit(exp.denoiser(), x0, target, std::span(&null, 1), cfg.w, t0, exp.schedule(), rng)
                                  : sdedit(exp.denoiser(), x0, target, inv.embeddings, cfg.w, t0, exp.schedule(), rng);
        cells[i][j][mode] = {mode == 0 ? "plain" : "inverted", format_real(t0), std::to_string(seed),
                             format_real(mse_psnr(x0, out, exp.peak()).mse),
                             format_real(component_responsibility(exp.mixture(), out, k_target))};
      }
    }
  });

  Table t;
  t.header = {"mode", "t0", "seed", "mse_source", "target_responsibility"};
  for (int j = 0; j < n_t0; ++j)
    for (int mode = 0; mode < 2; ++mode)
      for (int i = 0; i < n_seeds; ++i) t.rows.push_back(cells[i][j][mode]);
  return t;
}

// ---- report ----

double quantile(std::vector<double> xs, double q) {
  if (xs.empty()) throw ReportError("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double median(std::vector<double> xs) { return quantile(std::move(xs), 0.5); }

Quantiles summarize(const std::vector<double>& xs) {
  if (xs.empty()) return {};
  return {quantile(xs, 0.25), quantile(xs, 0.5), quantile(xs, 0.75), static_cast<int>(xs.size())};
}

namespace {

json quantiles_json(const std::vector<double>& xs) {
  if (xs.empty()) return {{"count", 0}};
  const Quantiles q = summarize(xs);
  return {{"q25", q.q25}, {"median", q.median}, {"q75", q.q75}, {"count", q.count}};
}

double cell_real(const std::string& s) {
  const auto x = parse_real(s);
  if (!x) throw ReportError("expected a number, got '" + s + "'");
  return *x;
}

const Table& require(const std::map<std::string, Table>& tables, const std::string& name) {
  auto it = tables.find(name);
  if (it == tables.end()) throw ReportError("missing table '" + name + "'");
  return it->second;
}

// Ordered numeric key -> samples.
using Series = std::map<double, std::vector<double>>;

std::string plot_csv(const std::map<std::string, Series>& groups) {
  std::string out = "x,y,group\n";
  for (const auto& [g, series] : groups)
    for (const auto& [x, ys] : series)
      if (!ys.empty()) out += format_real(x) + "," + format_real(median(ys)) + "," + g + "\n";
  return out;
}

const char* flag(bool ok) { return ok ? "pass" : "fail"; }

// Shortest round-trip spelling, for JSON object keys.
std::string key(double x) { return json(x).dump(); }

}  // namespace

Report emit_report(const std::map<std::string, Table>& tables, int N_eval) {
  const Table& abl = require(tables, kAblationFile);
  const Table& gui = require(tables, kGuidanceFile);
  const Table& sde = require(tables, kSdeditFile);
  Report rep;

  // ablation: variant -> N -> samples
  std::map<std::string, Series> psnr, mse, iters;
  std::map<std::string, std::map<double, int>> diverged;
  std::map<std::string, std::map<std::uint64_t, double>> psnr_at_eval;
  {
    const int cv = abl.column("variant"), cn = abl.column("N"), cs = abl.column("seed"), cst = abl.column("status"),
              ci = abl.column("iterations_used"), cm = abl.column("mse"), cp = abl.column("psnr");
    for (const auto& r : abl.rows) {
      const double n = cell_real(r[cn]);
      if (r[cst] != "ok") {
        ++diverged[r[cv]][n];
        continue;
      }
      psnr[r[cv]][n].push_back(cell_real(r[cp]));
      mse[r[cv]][n].push_back(cell_real(r[cm]));
      iters[r[cv]][n].push_back(cell_real(r[ci]));
      if (n == N_eval) psnr_at_eval[r[cv]][std::stoull(r[cs])] = cell_real(r[cp]);
    }
  }
  json abl_j = json::object();
  for (const auto& [v, series] : psnr)
    for (const auto& [n, ys] : series) {
      auto& g = abl_j[v][std::to_string(static_cast<int>(n))];
      g["psnr"] = quantiles_json(ys);
      g["mse"] = quantiles_json(mse[v][n]);
      g["iterations_used"] = quantiles_json(iters[v][n]);
    }
  for (const auto& [v, by_n] : diverged)
    for (const auto& [n, count] : by_n) abl_j[v][std::to_string(static_cast<int>(n))]["diverged"] = count;
  rep.summary["ablation"] = abl_j;

  const auto med_at = [&](const std::string& v) -> std::optional<double> {
    auto it = psnr.find(v);
    if (it == psnr.end()) return std::nullopt;
    auto jt = it->second.find(N_eval);
    if (jt == it->second.end() || jt->second.empty()) return std::nullopt;
    return median(jt->second);
  };
  {
    const auto np = med_at("null-pivotal"), ng = med_at("null-global"), ts = med_at("text-stochastic"),
               ns = med_at("null-stochastic"), base = med_at("ddim-baseline");
    if (!np || !ng || !ts || !ns || !base) rep.flags["ablation-ordering"] = "insufficient-data";
    else rep.flags["ablation-ordering"] = flag(*np > *ng && *ng > *ts && *ns <= *base);

    int pairs = 0, wins = 0;
    for (const auto& [seed, p] : psnr_at_eval["null-pivotal"]) {
      auto it = psnr_at_eval["ddim-baseline"].find(seed);
      if (it == psnr_at_eval["ddim-baseline"].end()) continue;
      ++pairs;
      if (p > it->second) ++wins;
    }
    if (pairs == 0 || !np || !base) rep.flags["pivotal-beats-baseline"] = "insufficient-data";
    else rep.flags["pivotal-beats-baseline"] = flag(*np > *base && wins * 5 >= pairs * 4);
    rep.summary["pivotal_vs_baseline"] = {{"pairs", pairs}, {"wins", wins}};
  }
  rep.plot_files["ablation_psnr.csv"] = plot_csv(psnr);
  rep.plot_files["ablation_mse.csv"] = plot_csv(mse);

  // guidance: w -> samples
  Series loglik, gpsnr;
  {
    const int cw = gui.column("w"), cl = gui.column("loglik"), cp = gui.column("psnr");
    for (const auto& r : gui.rows) {
      loglik[cell_real(r[cw])].push_back(cell_real(r[cl]));
      gpsnr[cell_real(r[cw])].push_back(cell_real(r[cp]));
    }
  }
  json gui_j = json::object();
  for (const auto& [w, ys] : loglik) gui_j[key(w)] = {{"loglik", quantiles_json(ys)}, {"psnr", quantiles_json(gpsnr[w])}};
  rep.summary["guidance"] = gui_j;
  if (loglik.size() < 2) {
    rep.flags["guidance-loglik-nonincreasing"] = "insufficient-data";
  } else {
    bool ok = true;
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& [w, ys] : loglik) {
      const double m = median(ys);
      ok = ok && m <= prev;
      prev = m;
    }
    rep.flags["guidance-loglik-nonincreasing"] = flag(ok);
  }
  if (!gpsnr.contains(1.0) || !gpsnr.contains(8.0)) rep.flags["guidance-psnr-w1-above-w8"] = "insufficient-data";
  else rep.flags["guidance-psnr-w1-above-w8"] = flag(median(gpsnr[1.0]) > median(gpsnr[8.0]));
  rep.plot_files["guidance_loglik.csv"] = plot_csv({{"loglik", loglik}});
  rep.plot_files["guidance_psnr.csv"] = plot_csv({{"psnr", gpsnr}});

  // sdedit: mode -> t0 -> samples
  std::map<std::string, Series> smse, sresp;
  {
    const int cm = sde.column("mode"), ct = sde.column("t0"), ce = sde.column("mse_source"),
              cr = sde.column("target_responsibility");
    for (const auto& r : sde.rows) {
      smse[r[cm]][cell_real(r[ct])].push_back(cell_real(r[ce]));
      sresp[r[cm]][cell_real(r[ct])].push_back(cell_real(r[cr]));
    }
  }
  json sde_j = json::object();
  for (const auto& [mode, series] : smse)
    for (const auto& [t0, ys] : series)
      sde_j[mode][key(t0)] = {{"mse_source", quantiles_json(ys)},
                                      {"target_responsibility", quantiles_json(sresp[mode][t0])}};
  rep.summary["sdedit"] = sde_j;
  {
    std::set<double> t0s;
    for (const auto& [mode, series] : smse)
      for (const auto& [t0, _] : series) t0s.insert(t0);
    bool complete = !t0s.empty();
    bool ok = true;
    for (double t0 : t0s) {
      const auto p = smse["plain"].find(t0);
      const auto q = smse["inverted"].find(t0);
      if (p == smse["plain"].end() || q == smse["inverted"].end()) {
        complete = false;
        break;
      }
      ok = ok && median(q->second) < median(p->second);
    }
    rep.flags["sdedit-inverted-closer"] = complete ? flag(ok) : "insufficient-data";
  }
  rep.plot_files["sdedit_mse.csv"] = plot_csv(smse);
  rep.plot_files["sdedit_responsibility.csv"] = plot_csv(sresp);

  rep.summary["N_eval"] = N_eval;
  rep.summary["flags"] = rep.flags;
  return rep;
}

// ---- files ----

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

void write_table(const Table& table, const fs::path& dir, const std::string& stem, const std::string& format) {
  fs::create_directories(dir);
  if (format == "csv") write_file(dir / (stem + ".csv"), table.to_csv());
  else if (format == "json") write_file(dir / (stem + ".json"), table.to_json().dump(2) + "\n");
  else throw ConfigError("unknown output format '" + format + "'");
}

Table read_table(const fs::path& dir, const std::string& stem) {
  const fs::path csv = dir / (stem + ".csv");
  const fs::path js = dir / (stem + ".json");
  if (fs::exists(csv)) {
    std::ifstream in(csv, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return Table::from_csv(ss.str());
  }
  if (fs::exists(js)) {
    std::ifstream in(js);
    const json j = json::parse(in);
    Table t;
    t.header = j.at("columns").get<std::vector<std::string>>();
    for (const auto& o : j.at("rows")) {
      std::vector<std::string> row;
      for (const auto& h : t.header) {
        const json& v = o.contains(h) ? o.at(h) : json(nullptr);
        if (v.is_string()) row.push_back(v.get<std::string>());
        else if (v.is_null()) row.push_back("nan");
        else row.push_back(format_real(v.get<double>()));
      }
      t.rows.push_back(std::move(row));
    }
    return t;
  }
  throw ReportError("missing table '" + stem + "' in " + dir.string());
}

void write_report(const Report& report, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "summary.json", report.summary.dump(2) + "\n");
  for (const auto& [name, text] : report.plot_files) write_file(dir / name, text);
}

}  // namespace nti
