// nti: command-line front end for the inversion experiments.
//
//   nti gen-config [--out DIR]
//   nti invert|sample|edit --config PATH [--seed U64] [--out DIR]
//   nti ablate|sweep-guidance|sdedit-eval --config PATH [--seed U64] [--out DIR] [--format csv|json]
//   nti report --config PATH [--out DIR]
//
// Exit codes: 0 success, 1 other error, 2 config error, 3 divergence.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "nti/error.hpp"
#include "nti/harness.hpp"
#include "nti/inversion.hpp"
#include "nti/metrics.hpp"
#include "nti/sampler.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
  std::string result;
};

nti::ExperimentConfig load(const Options& o) {
  nti::ExperimentConfig cfg = o.config.empty() ? nti::ExperimentConfig::defaults()
                                               : nti::load_experiment_config(o.config);
  if (o.seed) cfg.seeds = {*o.seed};
  return cfg;
}

std::uint64_t run_seed(const Options& o, const nti::ExperimentConfig& cfg) {
  return o.seed ? *o.seed : cfg.seeds.front();
}

// Writes to DIR/name when --out is given, otherwise to stdout.
void emit(const Options& o, const std::string& name, const json& j) {
  const std::string text = j.dump(2) + "\n";
  if (o.out.empty()) {
    std::cout << text;
    return;
  }
  fs::create_directories(o.out);
  std::ofstream out(fs::path(o.out) / name, std::ios::binary);
  if (!out) throw nti::Error("cannot write " + (fs::path(o.out) / name).string());
  out << text;
}

json vec(const nti::Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

fs::path out_dir(const Options& o, const nti::ExperimentConfig& cfg) {
  return o.out.empty() ? fs::path(cfg.output_dir) : fs::path(o.out);
}

void check_table_format(const Options& o) {
  if (o.format != "csv" && o.format != "json") throw nti::ConfigError("--format must be csv or json");
}

int cmd_gen_config(const Options& o) {
  emit(o, "config.json", nti::to_json(nti::ExperimentConfig::defaults()));
  return 0;
}

int cmd_invert(const Options& o) {
  const nti::Experiment exp(load(o));
  const std::uint64_t seed = run_seed(o, exp.config());
  const auto& inv = exp.config().inversion;
  const std::string variant = nti::to_string(inv.variant);
  const nti::InversionResult r = exp.run_variant(variant, inv.N, seed);
  json j = nti::to_json(r);
  j["seed"] = seed;
  j["peak"] = exp.peak();
  emit(o, "invert-" + std::to_string(seed) + ".json", j);
  return 0;
}

int cmd_sample(const Options& o) {
  const nti::Experiment exp(load(o));
  const std::uint64_t seed = run_seed(o, exp.config());
  const auto& cfg = exp.config();
  const nti::Embedding& cond = exp.prompts().embed(cfg.prompts.source);
  const nti::Embedding null = nti::Embedding::zeros(cond.size());
  nti::Rng rng = nti::make_rng(seed, "sample");
  const nti::Vec z_T = nti::standard_normal(rng, exp.mixture().dim());
  const nti::Trajectory traj = nti::ddim_sample(exp.denoiser(), z_T, cond, std::span(&null, 1), cfg.w, exp.schedule());
  json j = {{"seed", seed},
            {"prompt", cfg.prompts.source},
            {"x0", vec(traj.data())},
            {"source_responsibility",
             nti::component_responsibility(exp.mixture(), traj.data(), exp.source_component())},
            {"trajectory", nti::to_json(traj)}};
  emit(o, "sample-" + std::to_string(seed) + ".json", j);
  return 0;
}

int cmd_edit(const Options& o) {
  const nti::Experiment exp(load(o));
  const std::uint64_t seed = run_seed(o, exp.config());
  const auto& cfg = exp.config();
  nti::InversionResult r;
  if (!o.result.empty()) {
    std::ifstream in(o.result);
    if (!in) throw nti::ConfigError("cannot open result " + o.result);
    r = nti::inversion_result_from_json(json::parse(in));
  } else {
    r = exp.run_variant("null-pivotal", cfg.inversion.N, seed);
  }
  const nti::Embedding& target = exp.prompts().embed(cfg.prompts.target);
  const nti::Vec edited = nti::edit(exp.denoiser(), r, target, exp.schedule());
  json j = {{"seed", seed},
            {"source", vec(r.source)},
            {"target_prompt", cfg.prompts.target},
            {"edited", vec(edited)},
            {"target_responsibility",
             nti::component_responsibility(exp.mixture(), edited, exp.target_component())}};
  emit(o, "edit-" + std::to_string(seed) + ".json", j);
  return 0;
}

int cmd_table(const Options& o, const std::string& stem, nti::Table (*run)(const nti::Experiment&)) {
  check_table_format(o);
  const nti::Experiment exp(load(o));
  nti::write_table(run(exp), out_dir(o, exp.config()), stem, o.format);
  return 0;
}

int cmd_report(const Options& o) {
  const nti::ExperimentConfig cfg = load(o);
  const fs::path dir = out_dir(o, cfg);
  std::map<std::string, nti::Table> tables;
  for (const char* stem : {nti::kAblationFile, nti::kGuidanceFile, nti::kSdeditFile})
    tables[stem] = nti::read_table(dir, stem);
  const nti::Report rep = nti::emit_report(tables, cfg.inversion.N);
  nti::write_report(rep, dir);
  for (const auto& [name, value] : rep.flags) std::cout << name << ": " << value << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Null-text inversion experiments on a toy mixture diffusion model"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&o](CLI::App* sub, bool tables) {
    sub->add_option("--config", o.config, "Experiment config JSON (defaults if omitted)");
    sub->add_option("--seed", o.seed, "Run a single seed");
    sub->add_option("--out", o.out, "Output directory");
    if (tables) sub->add_option("--format", o.format, "Table format")->check(CLI::IsMember({"csv", "json"}));
  };

  auto* gen = app.add_subcommand("gen-config", "Print or write the default config");
  gen->add_option("--out", o.out, "Write DIR/config.json instead of stdout");
  auto* invert = app.add_subcommand("invert", "Invert one source sample");
  common(invert, false);
  auto* sample = app.add_subcommand("sample", "Guided DDIM sample from a seeded z_T");
  common(sample, false);
  auto* edit = app.add_subcommand("edit", "Invert then swap to the target prompt");
  common(edit, false);
  edit->add_option("--result", o.result, "Reuse a stored inversion result");
  auto* ablate = app.add_subcommand("ablate", "Variant x N x seed ablation table");
  common(ablate, true);
  auto* sweep = app.add_subcommand("sweep-guidance", "Guidance-scale sweep table");
  common(sweep, true);
  auto* sde = app.add_subcommand("sdedit-eval", "SDEdit with and without inversion");
  common(sde, true);
  auto* report = app.add_subcommand("report", "Summary JSON, plot series and flags");
  common(report, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_config(o);
    if (invert->parsed()) return cmd_invert(o);
    if (sample->parsed()) return cmd_sample(o);
    if (edit->parsed()) return cmd_edit(o);
    if (ablate->parsed()) return cmd_table(o, nti::kAblationFile, nti::run_ablation);
    if (sweep->parsed()) return cmd_table(o, nti::kGuidanceFile, nti::run_guidance_sweep);
    if (sde->parsed()) return cmd_table(o, nti::kSdeditFile, nti::run_sdedit_eval);
    if (report->parsed()) return cmd_report(o);
  } catch (const nti::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nti::DivergenceError& e) {
    std::cerr << "diverged at timestep " << e.timestep() << ": " << e.what() << "\n";
    return 3;
  } catch (const json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
