#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nti/denoiser.hpp"
#include "nti/inversion.hpp"
#include "nti/schedule.hpp"

namespace nti {

struct ExperimentConfig {
  struct Schedule {
    int t_train = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int T = 50;
  };
  struct Mixture {
    int d = 2;
    int K = 3;
    double radius = 4.0;               // used when means is empty
    std::vector<std::vector<double>> means;
    double sigma = 0.3;
    double kappa = 4.0;
  };
  struct DenoiserBlock {
    std::string kind = "analytic";     // analytic | affine
    int train_samples = 20000;
    std::uint64_t train_seed = 0;
  };
  struct Prompts {
    std::string source = "class0";
    std::string target = "class1";
  };
  struct Sweeps {
    std::vector<int> N;
    std::vector<double> w;
    std::vector<double> t0;
  };

  Schedule schedule;
  Mixture mixture;
  DenoiserBlock denoiser;
  double w = 7.5;
  InversionConfig inversion;           // w and psnr_peak are filled in by Experiment
  Prompts prompts;
  Sweeps sweeps;
  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";
  int workers = 0;                     // 0 = hardware concurrency

  static ExperimentConfig defaults();
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Strict parse: unknown keys and wrong types raise ConfigError. Missing keys
/// keep their defaults.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Everything a run needs, built once from a config and shared read-only.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const MixtureModel& mixture() const { return mix_; }
  const PromptTable& prompts() const { return table_; }
  const Denoiser& denoiser() const { return *den_; }
  double peak() const { return peak_; }

  /// Inversion settings from the config with w and the PSNR peak applied.
  InversionConfig inversion_config() const;

  /// Component the source prompt puts the most weight on.
  int source_component() const;
  int target_component() const;

  /// x0 = mu_source + sigma * n, n from the "source-sample" stream of `seed`.
  Vec source_sample(std::uint64_t seed) const;

  /// Runs one inversion variant. "ddim-baseline" and "random-pivot" are also
  /// accepted. `N` overrides the config's iteration count.
  InversionResult run_variant(const std::string& variant, int N, std::uint64_t seed) const;

 private:
  ExperimentConfig cfg_;
  NoiseSchedule sched_;
  MixtureModel mix_;
  PromptTable table_;
  std::unique_ptr<Denoiser> den_;
  double peak_;
};

inline const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v = {"null-pivotal",    "text-pivotal", "null-global",  "text-stochastic",
                                             "null-stochastic", "ddim-baseline", "random-pivot"};
  return v;
}

/// Rows of string cells, already formatted. Floats use 17 significant digits.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;
  std::string to_csv() const;
  nlohmann::json to_json(const std::vector<std::string>& exclude = {}) const;
  static Table from_csv(const std::string& text);
};

std::string format_real(double x);

/// Calls fn(0..n-1) on up to `workers` threads (0 = hardware concurrency).
/// The first exception thrown by any call is rethrown after all threads join.
void parallel_for(int n, int workers, const std::function<void(int)>& fn);

Table run_ablation(const Experiment& exp);
Table run_guidance_sweep(const Experiment& exp);
Table run_sdedit_eval(const Experiment& exp);

struct Quantiles {
  double q25 = 0.0;
  double median = 0.0;
  double q75 = 0.0;
  int count = 0;
};

/// Linear-interpolation quantiles of a non-empty sample.
double quantile(std::vector<double> xs, double q);
double median(std::vector<double> xs);
Quantiles summarize(const std::vector<double>& xs);

struct Report {
  nlohmann::json summary;
  std::map<std::string, std::string> flags;           // name -> pass | fail | insufficient-data
  std::map<std::string, std::string> plot_files;      // file name -> "x,y,group" CSV text
};

/// Aggregates the three tables. `N_eval` selects the ablation budget used for
/// the ordering flags. A missing table raises ReportError.
Report emit_report(const std::map<std::string, Table>& tables, int N_eval);

/// File names the harness writes under the output directory.
inline constexpr const char* kAblationFile = "ablation";
inline constexpr const char* kGuidanceFile = "guidance";
inline constexpr const char* kSdeditFile = "sdedit";

void write_table(const Table& table, const std::filesystem::path& dir, const std::string& stem,
                 const std::string& format);
Table read_table(const std::filesystem::path& dir, const std::string& stem);
void write_report(const Report& report, const std::filesystem::path& dir);

}  // namespace nti
