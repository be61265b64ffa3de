// Acceptance checks on the default toy. `acceptance <n>` runs one criterion,
// no argument runs all ten. One PASS/FAIL line per criterion; exit status is
// non-zero if any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nti/harness.hpp"
#include "nti/metrics.hpp"
#include "nti/sampler.hpp"
#include "toy.hpp"

using nti::Embedding;
using nti::Vec;

namespace {

// Tolerances and sizes.
constexpr double kInverseTol = 1e-12;
constexpr int kInverseProbes = 1000;
constexpr double kGradTol = 1e-4;
constexpr int kGradProbes = 100;
constexpr double kGradFloor = 1e-6;  // probes with a smaller gradient are redrawn
constexpr int kSeeds = 20;
constexpr int kEvalN = 10;
constexpr double kSeedFraction = 0.8;
constexpr int kEditWins = 16;
constexpr int kHeldOut = 100000;

struct Outcome {
  bool pass;
  std::string detail;
};

std::vector<std::uint64_t> seeds() {
  std::vector<std::uint64_t> s;
  for (int i = 1; i <= kSeeds; ++i) s.push_back(i);
  return s;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

Outcome exact_inverse() {
  const toy::Model toy;
  nti::Rng rng(2024);
  std::uniform_int_distribution<int> step(1, toy.sched.num_steps());
  double worst = 0.0;
  for (int i = 0; i < kInverseProbes; ++i) {
    const int k = step(rng);
    const int from = toy.sched.timestep(k - 1), to = toy.sched.timestep(k);
    const Vec z = 3.0 * nti::standard_normal(rng, 2);
    const Vec eps = nti::standard_normal(rng, 2);
    const Vec back = nti::ddim_step(nti::ddim_invert_step(z, from, to, eps, toy.sched), to, from, eps, toy.sched);
    worst = std::max(worst, (back - z).norm() / z.norm());
  }
  return {worst <= kInverseTol, "worst relative error " + fmt(worst)};
}

Outcome gradient_oracle() {
  const toy::Model toy;
  const auto affine = nti::train_affine(toy.mix, toy.table, toy.sched, 5000, 11);
  nti::Rng rng(77);
  std::uniform_int_distribution<int> step(1, toy.sched.num_steps());
  std::uniform_real_distribution<double> wdist(1.5, 8.0);
  double worst = 0.0;
  int probes = 0, drawn = 0;
  while (probes < kGradProbes && drawn < 20 * kGradProbes) {
    ++drawn;
    const nti::Denoiser& den = drawn % 2 ? static_cast<const nti::Denoiser&>(toy.den) : affine;
    const int k = step(rng);
    const Vec z = 2.0 * nti::standard_normal(rng, 2);
    const Vec target = z + 0.5 * nti::standard_normal(rng, 2);
    const Embedding c{4.0 * nti::standard_normal(rng, 3)};
    const Vec e = 2.0 * nti::standard_normal(rng, 3);
    const auto slot = drawn % 4 < 2 ? nti::EmbeddingSlot::Null : nti::EmbeddingSlot::Conditional;
    const nti::StepObjective obj(den, toy.sched, z, target, k, c, c, wdist(rng), slot);
    const auto a = obj.analytic(e), f = obj.finite_difference(e);
    const double scale = std::max(a.grad.norm(), f.grad.norm());
    if (scale < kGradFloor) continue;
    worst = std::max(worst, (a.grad - f.grad).norm() / scale);
    ++probes;
  }
  return {probes == kGradProbes && worst <= kGradTol,
          std::to_string(probes) + " probes, worst relative error " + fmt(worst)};
}

Outcome round_trip_convergence() {
  std::vector<double> medians;
  std::string detail;
  for (int T : {10, 50, 200}) {
    const toy::Model toy(T);
    const Embedding c = toy.table.embed("class0");
    const Embedding null = Embedding::zeros(3);
    std::vector<double> mse;
    for (auto s : seeds()) {
      const Vec x0 = toy.sample(0, s);
      const auto inv = nti::ddim_invert(toy.den, x0, c, 1.0, toy.sched);
      const auto rec = nti::ddim_sample(toy.den, inv.terminal(), c, std::span(&null, 1), 1.0, toy.sched);
      mse.push_back((rec.data() - x0).squaredNorm() / 2.0);
    }
    medians.push_back(toy::median(mse));
    detail += "T=" + std::to_string(T) + " median mse " + fmt(medians.back()) + "; ";
  }
  return {medians[0] > medians[1] && medians[1] > medians[2], detail};
}

Outcome ablation_ordering() {
  const nti::Experiment exp(nti::ExperimentConfig::defaults());
  std::map<std::string, std::vector<double>> psnr;
  for (const std::string v : {"null-pivotal", "null-global", "text-stochastic", "null-stochastic", "ddim-baseline"})
    for (auto s : seeds()) psnr[v].push_back(exp.run_variant(v, kEvalN, s).metrics.psnr);
  int wins = 0;
  for (int i = 0; i < kSeeds; ++i) wins += psnr["null-pivotal"][i] > psnr["ddim-baseline"][i];
  const double np = toy::median(psnr["null-pivotal"]), ng = toy::median(psnr["null-global"]),
               ts = toy::median(psnr["text-stochastic"]), ns = toy::median(psnr["null-stochastic"]),
               base = toy::median(psnr["ddim-baseline"]);
  const bool a = np > ng, b = ng > ts, c = ns <= base, d = np > base && wins >= kSeedFraction * kSeeds;
  std::ostringstream os;
  os << "median psnr null-pivotal " << fmt(np) << ", null-global " << fmt(ng) << ", text-stochastic " << fmt(ts)
     << ", null-stochastic " << fmt(ns) << ", baseline " << fmt(base) << "; pivotal>global " << (a ? "ok" : "no")
     << ", global>text-stochastic " << (b ? "ok" : "no") << ", null-stochastic<=baseline " << (c ? "ok" : "no")
     << ", pivotal>baseline on " << wins << "/" << kSeeds << " seeds";
  return {a && b && c && d, os.str()};
}

Outcome descent() {
  const nti::Experiment exp(nti::ExperimentConfig::defaults());
  const auto cfg = exp.inversion_config();
  int histories = 0, bad_descent = 0, bad_stop = 0;
  for (auto s : seeds()) {
    const auto r = exp.run_variant("null-pivotal", cfg.N, s);
    for (const auto& h : r.loss_history) {
      ++histories;
      if (h.empty() || h.back() > h.front()) ++bad_descent;
      for (std::size_t i = 0; i + 1 < h.size(); ++i)
        if (h[i] <= cfg.early_stop) ++bad_stop;
      if (static_cast<int>(h.size()) > cfg.N) ++bad_stop;
    }
  }
  return {bad_descent == 0 && bad_stop == 0, std::to_string(histories) + " histories, " +
                                                 std::to_string(bad_descent) + " ascents, " +
                                                 std::to_string(bad_stop) + " early-stop violations"};
}

Outcome guidance_trends() {
  auto cfg = nti::ExperimentConfig::defaults();
  cfg.sweeps.w = {1, 2, 3, 4, 5, 6, 7, 8};
  const auto t = nti::run_guidance_sweep(nti::Experiment(cfg));
  const auto rep = nti::emit_report({{nti::kGuidanceFile, t},
                                     {nti::kAblationFile, nti::Table{{"variant", "N", "seed", "status",
                                                                      "iterations_used", "mse", "psnr", "wall_ms"},
                                                                     {}}},
                                     {nti::kSdeditFile, nti::Table{{"mode", "t0", "seed", "mse_source",
                                                                    "target_responsibility"},
                                                                   {}}}},
                                    kEvalN);
  const auto& g = rep.summary.at("guidance");
  std::string detail = "median loglik";
  for (const auto& [w, v] : g.items()) detail += " w=" + w + ":" + fmt(v.at("loglik").at("median").get<double>());
  detail += "; median psnr w=1 " + fmt(g.at("1.0").at("psnr").at("median").get<double>()) + ", w=8 " +
            fmt(g.at("8.0").at("psnr").at("median").get<double>());
  return {rep.flags.at("guidance-loglik-nonincreasing") == "pass" &&
              rep.flags.at("guidance-psnr-w1-above-w8") == "pass",
          detail};
}

Outcome editing() {
  const nti::Experiment exp(nti::ExperimentConfig::defaults());
  const Embedding target = exp.prompts().embed(exp.config().prompts.target);
  int wins = 0;
  bool unchanged = true;
  for (auto s : seeds()) {
    const auto r = exp.run_variant("null-pivotal", kEvalN, s);
    const auto before = r;
    const Vec x = nti::edit(exp.denoiser(), r, target, exp.schedule());
    if (nti::component_responsibility(exp.mixture(), x, exp.target_component()) > 0.5) ++wins;
    unchanged = unchanged && r.z_T == before.z_T;
    for (std::size_t k = 0; k < r.embeddings.size(); ++k)
      unchanged = unchanged && nti::identical(r.embeddings[k], before.embeddings[k]);
  }
  return {wins >= kEditWins && unchanged, "target responsibility > 0.5 on " + std::to_string(wins) + "/" +
                                              std::to_string(kSeeds) + " seeds, inputs " +
                                              (unchanged ? "unchanged" : "MUTATED")};
}

Outcome sdedit_improvement() {
  auto cfg = nti::ExperimentConfig::defaults();
  cfg.sweeps.t0 = {0.4, 0.6, 0.8};
  const auto t = nti::run_sdedit_eval(nti::Experiment(cfg));
  const int cm = t.column("mode"), ct = t.column("t0"), ce = t.column("mse_source");
  bool ok = true;
  std::string detail;
  for (double t0 : cfg.sweeps.t0) {
    std::vector<double> plain, inverted;
    for (const auto& r : t.rows)
      if (std::stod(r[ct]) == t0) (r[cm] == "plain" ? plain : inverted).push_back(std::stod(r[ce]));
    const double p = toy::median(plain), q = toy::median(inverted);
    ok = ok && q < p;
    detail += "t0=" + fmt(t0) + " median mse inverted " + fmt(q) + " vs plain " + fmt(p) + "; ";
  }
  return {ok, detail};
}

std::string strip_column(const nti::Table& t, const std::string& col) {
  nti::Table out;
  const int c = t.column(col);
  for (int i = 0; i < static_cast<int>(t.header.size()); ++i)
    if (i != c) out.header.push_back(t.header[i]);
  for (const auto& r : t.rows) {
    auto& row = out.rows.emplace_back();
    for (int i = 0; i < static_cast<int>(r.size()); ++i)
      if (i != c) row.push_back(r[i]);
  }
  return out.to_csv();
}

Outcome determinism() {
  auto cfg = nti::ExperimentConfig::defaults();
  cfg.sweeps.N = {0, 3};
  cfg.sweeps.w = {1.0, 4.0, 8.0};
  cfg.sweeps.t0 = {0.4, 0.8};
  cfg.seeds = {1, 2, 3, 4};
  std::vector<std::string> runs;
  for (int workers : {1, 1, 4}) {
    cfg.workers = workers;
    const nti::Experiment exp(cfg);
    std::map<std::string, nti::Table> tables = {{nti::kAblationFile, nti::run_ablation(exp)},
                                                {nti::kGuidanceFile, nti::run_guidance_sweep(exp)},
                                                {nti::kSdeditFile, nti::run_sdedit_eval(exp)}};
    std::string bytes = strip_column(tables[nti::kAblationFile], "wall_ms") +
                        tables[nti::kAblationFile].to_json({"wall_ms"}).dump() +
                        tables[nti::kGuidanceFile].to_csv() + tables[nti::kGuidanceFile].to_json().dump() +
                        tables[nti::kSdeditFile].to_csv() + tables[nti::kSdeditFile].to_json().dump();
    const auto rep = nti::emit_report(tables, 3);
    bytes += rep.summary.dump();
    for (const auto& [name, text] : rep.plot_files) bytes += name + text;
    runs.push_back(std::move(bytes));
  }
  const bool same = runs[0] == runs[1];
  const bool workers = runs[0] == runs[2];
  return {same && workers, std::string("repeat ") + (same ? "identical" : "DIFFERS") + ", 1 vs 4 workers " +
                               (workers ? "identical" : "DIFFERS") + " (" + std::to_string(runs[0].size()) +
                               " bytes)"};
}

Outcome oracle_optimality() {
  const toy::Model toy;
  const auto affine = nti::train_affine(toy.mix, toy.table, toy.sched, 20000, 0);
  int worse = 0;
  double max_gap = -INFINITY;
  for (int k = 1; k <= toy.sched.num_steps(); ++k) {
    const int t = toy.sched.timestep(k);
    nti::Rng rng = nti::make_rng(99, "held-out/t=" + std::to_string(t));
    const auto held = nti::draw_noise_samples(toy.mix, toy.table, toy.sched, t, kHeldOut, rng);
    const double gap = nti::empirical_noise_loss(toy.den, t, held) - nti::empirical_noise_loss(affine, t, held);
    max_gap = std::max(max_gap, gap);
    if (gap > 0.0) ++worse;
  }
  return {worse == 0, "analytic minus affine loss at most " + fmt(max_gap) + " over " +
                          std::to_string(toy.sched.num_steps()) + " timesteps"};
}

const std::vector<std::pair<std::string, std::function<Outcome()>>>& criteria() {
  static const std::vector<std::pair<std::string, std::function<Outcome()>>> c = {
      {"exact DDIM inverse", exact_inverse},
      {"gradient oracle", gradient_oracle},
      {"round-trip convergence in T", round_trip_convergence},
      {"ablation ordering", ablation_ordering},
      {"descent and early stop", descent},
      {"guidance trends", guidance_trends},
      {"editing", editing},
      {"SDEdit with inversion", sdedit_improvement},
      {"determinism", determinism},
      {"oracle optimality", oracle_optimality},
  };
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  int first = 1, last = static_cast<int>(criteria().size());
  if (argc > 1) {
    first = last = std::atoi(argv[1]);
    if (first < 1 || first > static_cast<int>(criteria().size())) {
      std::fprintf(stderr, "usage: acceptance [1-%zu]\n", criteria().size());
      return 2;
    }
  }
  bool all = true;
  for (int i = first; i <= last; ++i) {
    const auto& [name, fn] = criteria()[i - 1];
    const auto start = std::chrono::steady_clock::now();
    Outcome o = fn();
    while (!o.detail.empty() && (o.detail.back() == ' ' || o.detail.back() == ';')) o.detail.pop_back();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %d %s: %s (%s; %.1f s)\n", i, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                secs);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
