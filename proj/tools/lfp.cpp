// Command-line front end: fit, simulate, predict, select-rank, benchmark.
// Exit codes: 0 success, 2 configuration/validation error, 3 numeric failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "lfp/inference.hpp"
#include "lfp/model_selection.hpp"
#include "lfp/simulation.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Config plumbing: flags > config file > defaults; unknown file keys rejected.

class ConfigSource {
 public:
  void load(const std::string& path) {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) throw lfp::ConfigError("cannot open config file " + path);
    try {
      in >> file_;
    } catch (const std::exception& e) {
      throw lfp::ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    if (!file_.is_object()) throw lfp::ConfigError("config file must hold a JSON object");
  }

  template <typename T>
  T pick(const CLI::Option* opt, const T& flag_value, const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (opt != nullptr && opt->count() > 0) return flag_value;
    if (file_.contains(key)) {
      try {
        return file_.at(key).get<T>();
      } catch (const std::exception& e) {
        throw lfp::ConfigError("config key '" + key + "' has the wrong type: " + e.what());
      }
    }
    return fallback;
  }

  void reject_unknown() const {
    for (const auto& item : file_.items())
      if (seen_.find(item.key()) == seen_.end())
        throw lfp::ConfigError("unknown config key '" + item.key() + "'");
  }

 private:
  json file_ = json::object();
  std::set<std::string> seen_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw lfp::DataError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw lfp::DataError("write failed for " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

fs::path prepare_output_dir(const std::string& dir) {
  fs::path p = dir.empty() ? fs::path(".") : fs::path(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw lfp::DataError("cannot create output directory " + p.string());
  return p;
}

json matrix_json(const lfp::Matrix& m) {
  json rows = json::array();
  for (lfp::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (lfp::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vector_json(const lfp::Vector& v) {
  json out = json::array();
  for (lfp::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

void write_scores_csv(const fs::path& path, const std::vector<lfp::ScorePrediction>& preds,
                      int rank) {
  std::string text = "sample_id";
  for (int r = 1; r <= rank; ++r) text += ",u_" + std::to_string(r);
  text += "\n";
  for (const auto& p : preds) {
    text += p.sample_id;
    for (lfp::Index r = 0; r < p.u_hat.size(); ++r) text += "," + format_double(p.u_hat(r));
    text += "\n";
  }
  write_text(path, text);
}

void write_trajectories_csv(const fs::path& path, const lfp::LfParafacModel& model,
                            const std::vector<lfp::ScorePrediction>& preds) {
  const std::vector<double> times(model.grid.data(), model.grid.data() + model.grid.size());
  std::string text = "sample_id,time";
  for (lfp::Index j = 0; j < model.num_entries(); ++j)
    text += "," + lfp::entry_label(j, model.tensor_shape);
  text += "\n";
  for (const auto& p : preds) {
    const lfp::Matrix traj = lfp::reconstruct(model, p.u_hat, times);
    for (lfp::Index t = 0; t < traj.rows(); ++t) {
      text += p.sample_id + "," + format_double(times[static_cast<size_t>(t)]);
      for (lfp::Index j = 0; j < traj.cols(); ++j) text += "," + format_double(traj(t, j));
      text += "\n";
    }
  }
  write_text(path, text);
}

json fit_report_json(const lfp::FitReport& report) {
  json j;
  j["objective_trace"] = report.objective_trace;
  j["update_norms"] = report.update_norms;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["wall_seconds"] = report.wall_seconds;
  j["init_mean_fallbacks"] = report.init_mean_fallbacks;
  j["warnings"] = report.warnings;
  return j;
}

lfp::CovarianceField field_with_cache(const lfp::Dataset& data, const lfp::CovarianceConfig& cov,
                                      const std::string& cache_path) {
  if (!cache_path.empty() && fs::exists(cache_path)) return lfp::load_field(cache_path);
  lfp::CovarianceField field = lfp::assemble(data, cov);
  if (!cache_path.empty()) lfp::save_field(field, cache_path);
  return field;
}

// ---------------------------------------------------------------------------
// simulate presets

void apply_preset(const std::string& preset, lfp::SimConfig& sim, std::vector<int>& ranks,
                  std::vector<double>& sparsities, std::vector<double>& snrs) {
  if (preset.empty()) return;
  if (preset == "d2-r3") {
    sim.dims = {10};
    sim.rank = 3;
  } else if (preset == "d3-r3") {
    sim.dims = {5, 5};
    sim.rank = 3;
  } else if (preset == "misspec") {
    sim.dims = {8, 8};
    sim.rank = 3;
    sim.low_rank = false;
  } else {
    throw lfp::ConfigError("unknown preset '" + preset + "' (expected d2-r3, d3-r3, misspec)");
  }
  sim.n = 100;
  sim.grid_size = 30;
  sim.fourier_size = 5;
  sim.sigma2 = 1.0;
  ranks = {sim.rank};
  sparsities = {0.2, 0.5};
  snrs = {0.5};
}

// ---------------------------------------------------------------------------
// Commands. Each returns the artifacts it wrote after echoing the effective
// config next to them.

struct CommonFlags {
  std::string config_path;
  std::string input;
  std::string output_dir;
  std::uint64_t seed = 1;
  int workers = 0;
};

void run_fit(const CommonFlags& common, ConfigSource& conf, const CLI::Option* o_rank, int rank,
             const CLI::Option* o_grid, int grid_size, const CLI::Option* o_bw_mean,
             double bw_mean, const CLI::Option* o_bw_cov, double bw_cov,
             const CLI::Option* o_eps, double epsilon, const CLI::Option* o_iter, int max_iter,
             const CLI::Option* o_seed, std::uint64_t seed, const CLI::Option* o_workers,
             int workers, const CLI::Option* o_input, const CLI::Option* o_outdir,
             const CLI::Option* o_cache, std::string cache_cov) {
  json effective;
  const std::string input = conf.pick(o_input, common.input, "input", std::string());
  const std::string outdir = conf.pick(o_outdir, common.output_dir, "output_dir", std::string("."));
  lfp::FitConfig fit_cfg;
  fit_cfg.cov.grid_size = conf.pick(o_grid, grid_size, "grid_size", 51);
  fit_cfg.cov.bandwidth_mean = conf.pick(o_bw_mean, bw_mean, "bandwidth_mean", 0.0);
  fit_cfg.cov.bandwidth_cov = conf.pick(o_bw_cov, bw_cov, "bandwidth_cov", 0.0);
  fit_cfg.cov.min_pair_count = conf.pick(nullptr, 0, "min_pair_count", 10);
  fit_cfg.cov.workers = conf.pick(o_workers, workers, "workers", 0);
  fit_cfg.epsilon = conf.pick(o_eps, epsilon, "epsilon", 1e-8);
  fit_cfg.max_iter = conf.pick(o_iter, max_iter, "max_iter", 200);
  fit_cfg.seed = conf.pick(o_seed, seed, "seed", std::uint64_t{1});
  fit_cfg.restarts = conf.pick(nullptr, 0, "restarts", 0);
  const int the_rank = conf.pick(o_rank, rank, "rank", 0);
  const std::string cache = conf.pick(o_cache, cache_cov, "cache_cov", std::string());
  conf.reject_unknown();
  if (input.empty()) throw lfp::ConfigError("fit: --input is required");
  if (the_rank < 1) throw lfp::ConfigError("fit: --rank must be a positive integer");

  effective["command"] = "fit";
  effective["input"] = input;
  effective["output_dir"] = outdir;
  effective["rank"] = the_rank;
  effective["grid_size"] = fit_cfg.cov.grid_size;
  effective["bandwidth_mean"] = fit_cfg.cov.bandwidth_mean;
  effective["bandwidth_cov"] = fit_cfg.cov.bandwidth_cov;
  effective["min_pair_count"] = fit_cfg.cov.min_pair_count;
  effective["workers"] = fit_cfg.cov.workers;
  effective["epsilon"] = fit_cfg.epsilon;
  effective["max_iter"] = fit_cfg.max_iter;
  effective["seed"] = fit_cfg.seed;
  effective["restarts"] = fit_cfg.restarts;
  effective["cache_cov"] = cache;

  const fs::path out = prepare_output_dir(outdir);
  const lfp::Dataset data = lfp::load_csv(input);
  const lfp::CovarianceField field = field_with_cache(data, fit_cfg.cov, cache);
  auto [model, report] = lfp::fit(data, field, the_rank, fit_cfg);
  const std::vector<lfp::ScorePrediction> preds = lfp::predict_scores(model, data);

  const std::string digest = effective.dump();
  lfp::save_model(model, (out / "model.json").string(), digest);
  json rep = fit_report_json(report);
  rep["effective_config"] = effective;
  write_json(out / "fit_report.json", rep);
  write_scores_csv(out / "scores.csv", preds, model.rank);
  write_trajectories_csv(out / "trajectories.csv", model, preds);
  write_json(out / "effective_config.json", effective);
  std::cout << "fit: wrote model.json, fit_report.json, scores.csv, trajectories.csv in "
            << out.string() << "\n"
            << "fit: " << report.iterations << " sweeps, "
            << (report.converged ? "converged" : "hit max_iter") << ", final objective "
            << (report.objective_trace.empty() ? 0.0 : report.objective_trace.back()) << "\n";
  for (const auto& w : report.warnings) std::cout << "fit: warning: " << w << "\n";
}

void run_simulate(const CommonFlags& common, ConfigSource& conf, const CLI::Option* o_outdir,
                  const CLI::Option* o_seed, std::uint64_t seed, const CLI::Option* o_preset,
                  std::string preset, const CLI::Option* o_grid, int grid_size) {
  lfp::SimConfig sim;
  std::vector<int> ranks_unused;
  std::vector<double> sp_unused, snr_unused;
  const std::string preset_name = conf.pick(o_preset, preset, "preset", std::string());
  apply_preset(preset_name, sim, ranks_unused, sp_unused, snr_unused);

  sim.n = conf.pick(nullptr, lfp::Index{0}, "n", sim.n);
  sim.rank = conf.pick(nullptr, 0, "rank", sim.rank);
  {
    std::vector<lfp::Index> dims(sim.dims.begin(), sim.dims.end());
    dims = conf.pick(nullptr, dims, "dims", dims);
    sim.dims = dims;
  }
  sim.grid_size = conf.pick(o_grid, grid_size, "grid_size", sim.grid_size);
  {
    std::vector<double> dom = {sim.domain_lo, sim.domain_hi};
    dom = conf.pick(nullptr, dom, "domain", dom);
    if (dom.size() != 2) throw lfp::ConfigError("simulate: domain must be [lo, hi]");
    sim.domain_lo = dom[0];
    sim.domain_hi = dom[1];
  }
  sim.fourier_size = conf.pick(nullptr, 0, "fourier_size", sim.fourier_size);
  {
    std::vector<double> lam;
    lam = conf.pick(nullptr, lam, "lambda_diag", lam);
    if (!lam.empty()) sim.lambda_diag = Eigen::Map<const lfp::Vector>(lam.data(),
                                                                      static_cast<lfp::Index>(lam.size()));
  }
  sim.sigma2 = conf.pick(nullptr, 0.0, "sigma2", sim.sigma2);
  sim.snr = conf.pick(nullptr, 0.0, "snr", sim.snr);
  sim.sparsity = conf.pick(nullptr, 0.0, "sparsity", sim.sparsity);
  sim.seed = conf.pick(o_seed, seed, "seed", std::uint64_t{1});
  sim.low_rank = conf.pick(nullptr, true, "low_rank", sim.low_rank);
  sim.misspec_order = conf.pick(nullptr, 0, "misspec_order", sim.misspec_order);
  const std::string outdir = conf.pick(o_outdir, common.output_dir, "output_dir", std::string("."));
  conf.reject_unknown();

  json effective;
  effective["command"] = "simulate";
  effective["preset"] = preset_name;
  effective["n"] = sim.n;
  effective["rank"] = sim.rank;
  effective["dims"] = sim.dims;
  effective["grid_size"] = sim.grid_size;
  effective["domain"] = {sim.domain_lo, sim.domain_hi};
  effective["fourier_size"] = sim.fourier_size;
  effective["lambda_diag"] = vector_json(sim.lambda_diag);
  effective["sigma2"] = sim.sigma2;
  effective["snr"] = sim.snr;
  effective["sparsity"] = sim.sparsity;
  effective["seed"] = sim.seed;
  effective["low_rank"] = sim.low_rank;
  effective["misspec_order"] = sim.misspec_order;
  effective["output_dir"] = outdir;

  const fs::path out = prepare_output_dir(outdir);
  auto [data, truth] = lfp::generate(sim);
  lfp::save_csv(data, (out / "dataset.csv").string());

  json tj;
  tj["grid"] = vector_json(truth.grid);
  tj["phi"] = matrix_json(truth.phi);
  tj["phi_coeff"] = matrix_json(truth.phi_coeff);
  json facs = json::array();
  for (const auto& a : truth.factors) facs.push_back(matrix_json(a));
  tj["factors"] = std::move(facs);
  tj["lambda"] = matrix_json(truth.lambda);
  tj["scores"] = matrix_json(truth.scores);
  json trajs = json::array();
  for (const auto& x : truth.trajectories) trajs.push_back(matrix_json(x));
  tj["trajectories"] = std::move(trajs);
  tj["low_rank"] = truth.low_rank;
  tj["effective_config"] = effective;
  write_json(out / "truth.json", tj);
  write_json(out / "effective_config.json", effective);
  std::cout << "simulate: wrote dataset.csv (+ sidecar), truth.json in " << out.string() << "\n";
}

void run_predict(const CommonFlags& common, ConfigSource& conf, const CLI::Option* o_input,
                 const CLI::Option* o_outdir, const CLI::Option* o_model,
                 std::string model_path) {
  const std::string input = conf.pick(o_input, common.input, "input", std::string());
  const std::string outdir = conf.pick(o_outdir, common.output_dir, "output_dir", std::string("."));
  const std::string mpath = conf.pick(o_model, model_path, "model", std::string());
  conf.reject_unknown();
  if (input.empty()) throw lfp::ConfigError("predict: --input is required");
  if (mpath.empty()) throw lfp::ConfigError("predict: --model is required");

  json effective;
  effective["command"] = "predict";
  effective["input"] = input;
  effective["model"] = mpath;
  effective["output_dir"] = outdir;

  const fs::path out = prepare_output_dir(outdir);
  const lfp::LfParafacModel model = lfp::load_model(mpath);
  const lfp::Dataset data = lfp::load_csv(input);
  const std::vector<lfp::ScorePrediction> preds = lfp::predict_scores(model, data);
  write_scores_csv(out / "scores.csv", preds, model.rank);
  write_trajectories_csv(out / "trajectories.csv", model, preds);
  write_json(out / "effective_config.json", effective);
  std::cout << "predict: wrote scores.csv, trajectories.csv in " << out.string() << "\n";
}

void run_select_rank(const CommonFlags& common, ConfigSource& conf, const CLI::Option* o_input,
                     const CLI::Option* o_outdir, const CLI::Option* o_ranks,
                     std::vector<int> ranks, const CLI::Option* o_folds, int folds,
                     const CLI::Option* o_seed, std::uint64_t seed, const CLI::Option* o_grid,
                     int grid_size, const CLI::Option* o_eps, double epsilon,
                     const CLI::Option* o_iter, int max_iter, const CLI::Option* o_workers,
                     int workers, const CLI::Option* o_method, std::string method) {
  const std::string input = conf.pick(o_input, common.input, "input", std::string());
  const std::string outdir = conf.pick(o_outdir, common.output_dir, "output_dir", std::string("."));
  lfp::SelectionConfig sel;
  sel.ranks = conf.pick(o_ranks, ranks, "ranks", std::vector<int>{});
  sel.folds = conf.pick(o_folds, folds, "folds", 5);
  sel.seed = conf.pick(o_seed, seed, "seed", std::uint64_t{1});
  sel.parameter_count_penalty =
      conf.pick(nullptr, false, "parameter_count_penalty", false);
  sel.fit.cov.grid_size = conf.pick(o_grid, grid_size, "grid_size", 51);
  sel.fit.cov.bandwidth_mean = conf.pick(nullptr, 0.0, "bandwidth_mean", 0.0);
  sel.fit.cov.bandwidth_cov = conf.pick(nullptr, 0.0, "bandwidth_cov", 0.0);
  sel.fit.cov.min_pair_count = conf.pick(nullptr, 0, "min_pair_count", 10);
  sel.fit.cov.workers = conf.pick(o_workers, workers, "workers", 0);
  sel.fit.epsilon = conf.pick(o_eps, epsilon, "epsilon", 1e-8);
  sel.fit.max_iter = conf.pick(o_iter, max_iter, "max_iter", 200);
  sel.fit.seed = sel.seed;
  const std::string which = conf.pick(o_method, method, "method", std::string("both"));
  conf.reject_unknown();
  if (input.empty()) throw lfp::ConfigError("select-rank: --input is required");
  if (sel.ranks.empty()) throw lfp::ConfigError("select-rank: --ranks is required");
  const bool want_cv = which == "both" || which == "lcv";
  const bool want_aic = which == "both" || which == "aic";
  if (!want_cv && !want_aic)
    throw lfp::ConfigError("select-rank: method must be lcv, aic, or both");

  json effective;
  effective["command"] = "select-rank";
  effective["input"] = input;
  effective["output_dir"] = outdir;
  effective["ranks"] = sel.ranks;
  effective["folds"] = sel.folds;
  effective["seed"] = sel.seed;
  effective["method"] = which;
  effective["parameter_count_penalty"] = sel.parameter_count_penalty;
  effective["grid_size"] = sel.fit.cov.grid_size;
  effective["bandwidth_mean"] = sel.fit.cov.bandwidth_mean;
  effective["bandwidth_cov"] = sel.fit.cov.bandwidth_cov;
  effective["min_pair_count"] = sel.fit.cov.min_pair_count;
  effective["workers"] = sel.fit.cov.workers;
  effective["epsilon"] = sel.fit.epsilon;
  effective["max_iter"] = sel.fit.max_iter;

  const fs::path out = prepare_output_dir(outdir);
  const lfp::Dataset data = lfp::load_csv(input);

  lfp::SelectionResult cv;
  lfp::SelectionResult aic;
  if (want_cv) cv = lfp::select_rank_cv(data, sel);
  if (want_aic) aic = lfp::select_rank_information(data, sel);

  std::string text = "rank";
  if (want_cv) {
    text += ",lcv,lcv_selected,lcv_seconds,lcv_note";
    for (int k = 1; k <= sel.folds; ++k) text += ",lcv_fold_" + std::to_string(k);
  }
  if (want_aic) text += ",aic,aic_selected,aic_seconds,aic_note";
  text += "\n";
  for (size_t ri = 0; ri < sel.ranks.size(); ++ri) {
    text += std::to_string(sel.ranks[ri]);
    if (want_cv) {
      const lfp::RankScore& sc = cv.scores[ri];
      text += "," + (sc.ok ? format_double(sc.value) : std::string("nan"));
      text += sc.ok && sc.rank == cv.selected_rank ? ",1" : ",0";
      text += "," + format_double(sc.wall_seconds);
      text += "," + sc.note;
      for (double f : sc.fold_values) text += "," + format_double(f);
    }
    if (want_aic) {
      const lfp::RankScore& sc = aic.scores[ri];
      text += "," + (sc.ok ? format_double(sc.value) : std::string("nan"));
      text += sc.ok && sc.rank == aic.selected_rank ? ",1" : ",0";
      text += "," + format_double(sc.wall_seconds);
      text += "," + sc.note;
    }
    text += "\n";
  }
  write_text(out / "rank_curve.csv", text);
  write_json(out / "effective_config.json", effective);
  std::cout << "select-rank: wrote rank_curve.csv in " << out.string() << "\n";
  if (want_cv) std::cout << "select-rank: cross-validation picks rank " << cv.selected_rank << "\n";
  if (want_aic)
    std::cout << "select-rank: information criterion picks rank " << aic.selected_rank << "\n";
}

void run_benchmark(const CommonFlags& common, ConfigSource& conf, const CLI::Option* o_outdir,
                   const CLI::Option* o_seed, std::uint64_t seed, const CLI::Option* o_preset,
                   std::string preset, const CLI::Option* o_workers, int workers,
                   const CLI::Option* o_ranks, std::vector<int> ranks,
                   const CLI::Option* o_repeats, int repeats, const CLI::Option* o_grid,
                   int grid_size, const CLI::Option* o_eps, double epsilon,
                   const CLI::Option* o_iter, int max_iter) {
  lfp::BenchmarkConfig bench;
  std::vector<int> cell_ranks = {3};
  std::vector<double> sparsities = {0.2, 0.5};
  std::vector<double> snrs = {0.5};
  const std::string preset_name = conf.pick(o_preset, preset, "preset", std::string("d2-r3"));
  apply_preset(preset_name, bench.base, cell_ranks, sparsities, snrs);

  bench.base.n = conf.pick(nullptr, lfp::Index{0}, "n", bench.base.n);
  {
    std::vector<lfp::Index> dims(bench.base.dims.begin(), bench.base.dims.end());
    dims = conf.pick(nullptr, dims, "dims", dims);
    bench.base.dims = dims;
  }
  bench.base.grid_size = conf.pick(nullptr, 0, "sim_grid_size", bench.base.grid_size);
  bench.base.sigma2 = conf.pick(nullptr, 0.0, "sigma2", bench.base.sigma2);
  cell_ranks = conf.pick(o_ranks, ranks.empty() ? cell_ranks : ranks, "ranks", cell_ranks);
  sparsities = conf.pick(nullptr, sparsities, "sparsities", sparsities);
  snrs = conf.pick(nullptr, snrs, "snrs", snrs);
  bench.repeats = conf.pick(o_repeats, repeats, "repeats", 1);
  bench.seed = conf.pick(o_seed, seed, "seed", std::uint64_t{1});
  bench.workers = conf.pick(o_workers, workers, "workers", 0);
  bench.fit.cov.grid_size = conf.pick(o_grid, grid_size, "grid_size", 51);
  bench.fit.cov.workers = 1;  // parallelism lives at the job level
  bench.fit.epsilon = conf.pick(o_eps, epsilon, "epsilon", 1e-8);
  bench.fit.max_iter = conf.pick(o_iter, max_iter, "max_iter", 200);
  const std::string outdir = conf.pick(o_outdir, common.output_dir, "output_dir", std::string("."));
  conf.reject_unknown();

  for (int r : cell_ranks)
    for (double s : sparsities)
      for (double sn : snrs) bench.cells.push_back({r, s, sn});

  json effective;
  effective["command"] = "benchmark";
  effective["preset"] = preset_name;
  effective["n"] = bench.base.n;
  effective["dims"] = bench.base.dims;
  effective["sim_grid_size"] = bench.base.grid_size;
  effective["sigma2"] = bench.base.sigma2;
  effective["ranks"] = cell_ranks;
  effective["sparsities"] = sparsities;
  effective["snrs"] = snrs;
  effective["repeats"] = bench.repeats;
  effective["seed"] = bench.seed;
  effective["workers"] = bench.workers;
  effective["grid_size"] = bench.fit.cov.grid_size;
  effective["epsilon"] = bench.fit.epsilon;
  effective["max_iter"] = bench.fit.max_iter;
  effective["output_dir"] = outdir;

  const fs::path out = prepare_output_dir(outdir);
  const std::vector<lfp::BenchmarkRow> rows = lfp::run_benchmark(bench);

  std::string text = "method,rank,sparsity,snr,repeat,metric,value,status\n";
  for (const auto& row : rows) {
    text += row.method + "," + std::to_string(row.rank) + "," + format_double(row.sparsity) +
            "," + format_double(row.snr) + "," + std::to_string(row.repeat) + "," + row.metric +
            "," + format_double(row.value) + ",\"" + row.status + "\"\n";
  }
  write_text(out / "benchmark.csv", text);
  write_json(out / "effective_config.json", effective);
  std::cout << "benchmark: wrote " << rows.size() << " rows to benchmark.csv in " << out.string()
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Latent functional tensor decomposition pipeline"};
  app.require_subcommand(1);

  CommonFlags common;
  std::string cache_cov;
  std::string model_path;
  std::string preset;
  std::string method = "both";
  int rank = 0;
  std::vector<int> ranks;
  int grid_size = 51;
  double bw_mean = 0.0;
  double bw_cov = 0.0;
  double epsilon = 1e-8;
  int max_iter = 200;
  int folds = 5;
  int repeats = 1;
  std::uint64_t seed = 1;
  int workers = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "JSON config file (flags win over it)");
  };

  CLI::App* c_fit = app.add_subcommand("fit", "Fit the decomposition to a dataset CSV");
  add_common(c_fit);
  auto* f_input = c_fit->add_option("--input", common.input, "dataset CSV path");
  auto* f_outdir = c_fit->add_option("--output-dir", common.output_dir, "output directory");
  auto* f_rank = c_fit->add_option("--rank", rank, "number of components");
  auto* f_grid = c_fit->add_option("--grid-size", grid_size, "covariance grid nodes");
  auto* f_bwm = c_fit->add_option("--bandwidth-mean", bw_mean, "mean smoother bandwidth (0=auto)");
  auto* f_bwc = c_fit->add_option("--bandwidth-cov", bw_cov, "surface smoother bandwidth (0=auto)");
  auto* f_eps = c_fit->add_option("--epsilon", epsilon, "relative convergence tolerance");
  auto* f_iter = c_fit->add_option("--max-iter", max_iter, "sweep limit");
  auto* f_seed = c_fit->add_option("--seed", seed, "RNG seed");
  auto* f_workers = c_fit->add_option("--workers", workers, "worker threads (0=auto)");
  auto* f_cache = c_fit->add_option("--cache-cov", cache_cov,
                                    "covariance cache file (load if present, else save)");

  CLI::App* c_sim = app.add_subcommand("simulate", "Draw a synthetic dataset");
  add_common(c_sim);
  auto* s_outdir = c_sim->add_option("--output-dir", common.output_dir, "output directory");
  auto* s_seed = c_sim->add_option("--seed", seed, "RNG seed");
  auto* s_preset = c_sim->add_option("--preset", preset, "d2-r3 | d3-r3 | misspec");
  auto* s_grid = c_sim->add_option("--grid-size", grid_size, "generator grid size");

  CLI::App* c_pred = app.add_subcommand("predict", "Score a dataset with a fitted model");
  add_common(c_pred);
  auto* p_input = c_pred->add_option("--input", common.input, "dataset CSV path");
  auto* p_outdir = c_pred->add_option("--output-dir", common.output_dir, "output directory");
  auto* p_model = c_pred->add_option("--model", model_path, "fitted model JSON");

  CLI::App* c_sel = app.add_subcommand("select-rank", "Score candidate ranks");
  add_common(c_sel);
  auto* r_input = c_sel->add_option("--input", common.input, "dataset CSV path");
  auto* r_outdir = c_sel->add_option("--output-dir", common.output_dir, "output directory");
  auto* r_ranks = c_sel->add_option("--ranks", ranks, "candidate ranks");
  auto* r_folds = c_sel->add_option("--folds", folds, "cross-validation folds");
  auto* r_seed = c_sel->add_option("--seed", seed, "RNG seed");
  auto* r_grid = c_sel->add_option("--grid-size", grid_size, "covariance grid nodes");
  auto* r_eps = c_sel->add_option("--epsilon", epsilon, "relative convergence tolerance");
  auto* r_iter = c_sel->add_option("--max-iter", max_iter, "sweep limit");
  auto* r_workers = c_sel->add_option("--workers", workers, "worker threads (0=auto)");
  auto* r_method = c_sel->add_option("--method", method, "lcv | aic | both");

  CLI::App* c_bench = app.add_subcommand("benchmark", "Generate-and-fit comparison grid");
  add_common(c_bench);
  auto* b_outdir = c_bench->add_option("--output-dir", common.output_dir, "output directory");
  auto* b_seed = c_bench->add_option("--seed", seed, "RNG seed");
  auto* b_preset = c_bench->add_option("--preset", preset, "d2-r3 | d3-r3 | misspec");
  auto* b_workers = c_bench->add_option("--workers", workers, "worker threads (0=auto)");
  auto* b_ranks = c_bench->add_option("--ranks", ranks, "cell ranks");
  auto* b_repeats = c_bench->add_option("--repeats", repeats, "repeats per cell");
  auto* b_grid = c_bench->add_option("--grid-size", grid_size, "solver covariance grid nodes");
  auto* b_eps = c_bench->add_option("--epsilon", epsilon, "relative convergence tolerance");
  auto* b_iter = c_bench->add_option("--max-iter", max_iter, "sweep limit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    ConfigSource conf;
    conf.load(common.config_path);
    if (c_fit->parsed()) {
      run_fit(common, conf, f_rank, rank, f_grid, grid_size, f_bwm, bw_mean, f_bwc, bw_cov,
              f_eps, epsilon, f_iter, max_iter, f_seed, seed, f_workers, workers, f_input,
              f_outdir, f_cache, cache_cov);
    } else if (c_sim->parsed()) {
      run_simulate(common, conf, s_outdir, s_seed, seed, s_preset, preset, s_grid, grid_size);
    } else if (c_pred->parsed()) {
      run_predict(common, conf, p_input, p_outdir, p_model, model_path);
    } else if (c_sel->parsed()) {
      run_select_rank(common, conf, r_input, r_outdir, r_ranks, ranks, r_folds, folds, r_seed,
                      seed, r_grid, grid_size, r_eps, epsilon, r_iter, max_iter, r_workers,
                      workers, r_method, method);
    } else if (c_bench->parsed()) {
      run_benchmark(common, conf, b_outdir, b_seed, seed, b_preset, preset, b_workers, workers,
                    b_ranks, ranks, b_repeats, repeats, b_grid, grid_size, b_eps, epsilon,
                    b_iter, max_iter);
    }
  } catch (const lfp::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lfp::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lfp::InsufficientDataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const lfp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
