// Command-line front end: fit sparse LTS models on CSV data, predict from a
// saved fit report, and drive the simulation benchmark.
//
// Exit codes: 0 success, 1 internal numerical failure, 2 usage/input error.
// Outputs are byte-identical for identical flags and seed; timing goes to
// stderr only.

#include "sparselts/sparselts.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;
using namespace sparselts;

constexpr int kExitNumericalFailure = 1;
constexpr int kExitUsage = 2;

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return std::string(buf);
}

std::string file_digest(const std::string& path) {
  std::ifstream input(path, std::ios::binary);
  if (!input) throw std::invalid_argument("cannot open file: " + path);
  std::ostringstream ss;
  ss << input.rdbuf();
  return hex64(fnv1a64(ss.str()));
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path.string());
  out << content;
}

// Manifest of everything needed to reproduce a run. The digest covers the
// serialized manifest itself.
struct Manifest {
  json body;

  Manifest(const std::string& command, json options, std::uint64_t seed,
           json input_digests) {
    body["command"] = command;
    body["options"] = std::move(options);
    body["seed"] = seed;
    body["version"] = kVersion;
    body["inputs"] = std::move(input_digests);
  }

  std::string digest() const { return hex64(fnv1a64(body.dump())); }
};

json coefficients_json(const Coefficients& coef, const std::vector<std::string>& names) {
  json entries = json::array();
  for (Eigen::Index j = 0; j < coef.slopes.size(); ++j) {
    if (coef.slopes[j] == 0.0) continue;
    json entry;
    entry["index"] = static_cast<int>(j);
    entry["name"] = names[static_cast<std::size_t>(j)];
    entry["value"] = coef.slopes[j];
    entries.push_back(std::move(entry));
  }
  return entries;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

struct FitOptions {
  std::string input;
  std::string response;
  std::string output_dir = ".";
  double alpha = 0.75;
  std::optional<double> fixed_lambda;
  std::string criterion = "bic";
  int folds = 5;
  int repeats = 5;
  int starts = 500;
  int keep = 10;
  double delta = 0.0125;
  std::uint64_t seed = 1;
  int threads = 0;
};

int run_fit(const FitOptions& opt) {
  const CsvTable table = read_csv_file(opt.input);
  const LoadedDataset loaded = dataset_from_csv(table, opt.response);
  if (loaded.data.n() < 6)
    throw std::invalid_argument("need at least 6 observations");

  SelectConfig config;
  config.base.alpha = opt.alpha;
  config.base.n_starts = opt.starts;
  config.base.n_keep = std::min(opt.keep, opt.starts);
  config.base.delta = opt.delta;
  config.base.seed = opt.seed;
  config.base.threads = resolve_threads(opt.threads);
  config.cv_folds = opt.folds;
  config.cv_repetitions = opt.repeats;
  config.fixed_lambda = opt.fixed_lambda;

  const Criterion criterion = opt.criterion == "cv" ? Criterion::kCv : Criterion::kBic;
  const SelectionResult selection = sparselts::select(loaded.data, criterion, config);
  const SparseLtsFit& fit = selection.best_fit;

  json options;
  options["input"] = opt.input;
  options["response"] = opt.response;
  options["output_dir"] = opt.output_dir;
  options["alpha"] = opt.alpha;
  if (opt.fixed_lambda) options["lambda"] = *opt.fixed_lambda;
  options["criterion"] = opt.criterion;
  options["folds"] = opt.folds;
  options["repeats"] = opt.repeats;
  options["starts"] = opt.starts;
  options["keep"] = opt.keep;
  options["delta"] = opt.delta;
  json inputs;
  inputs[opt.input] = file_digest(opt.input);
  const Manifest manifest("fit", options, opt.seed, inputs);

  json report;
  json model;
  model["label"] = opt.alpha >= 1.0 ? "lasso" : "sparse_lts";
  model["response"] = loaded.response_name;
  model["columns"] = loaded.predictor_names;
  model["n_observations"] = loaded.data.n();
  model["alpha"] = opt.alpha;
  model["h"] = fit.h;
  model["lambda"] = fit.lambda;
  json raw;
  raw["intercept"] = fit.raw_coefficients.intercept;
  raw["coefficients"] = coefficients_json(fit.raw_coefficients, loaded.predictor_names);
  raw["center"] = fit.raw_center;
  raw["scale"] = fit.raw_scale;
  model["raw"] = std::move(raw);
  json reweighted;
  reweighted["intercept"] = fit.reweighted_coefficients.intercept;
  reweighted["coefficients"] =
      coefficients_json(fit.reweighted_coefficients, loaded.predictor_names);
  reweighted["center"] = fit.reweighted_center;
  reweighted["scale"] = fit.reweighted_scale;
  model["reweighted"] = std::move(reweighted);
  json outliers = json::array();
  for (Eigen::Index i = 0; i < fit.weights.size(); ++i)
    if (fit.weights[i] == 0.0) outliers.push_back(static_cast<int>(i));
  model["outliers"] = std::move(outliers);
  report["model"] = std::move(model);

  json sel;
  sel["criterion"] = opt.criterion;
  sel["lambda0"] = selection.lambda0;
  sel["grid"] = std::vector<double>(selection.grid.data(),
                                    selection.grid.data() + selection.grid.size());
  sel["scores"] = std::vector<double>(selection.scores.data(),
                                      selection.scores.data() + selection.scores.size());
  sel["best_lambda"] = selection.best_lambda;
  sel["failed_grid_points"] = selection.failed;
  report["selection"] = std::move(sel);

  json diagnostics;
  diagnostics["n_converged_restarts"] = fit.n_converged_restarts;
  diagnostics["exact_fit"] = fit.exact_fit;
  diagnostics["reweight_fallback"] = fit.reweight_fallback;
  report["diagnostics"] = std::move(diagnostics);

  report["manifest"] = manifest.body;
  report["manifest_digest"] = manifest.digest();

  std::filesystem::create_directories(opt.output_dir);
  write_file(std::filesystem::path(opt.output_dir) / "fit.json", report.dump(2) + "\n");
  std::cout << "wrote " << (std::filesystem::path(opt.output_dir) / "fit.json").string()
            << "\n";
  return 0;
}

struct PredictOptions {
  std::string model;
  std::string data;
  std::string output;
  std::string coefficients = "reweighted";
};

int run_predict(const PredictOptions& opt) {
  std::ifstream model_stream(opt.model);
  if (!model_stream) throw std::invalid_argument("cannot open model file: " + opt.model);
  json report;
  try {
    report = json::parse(model_stream);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("model file is not valid JSON: " + std::string(e.what()));
  }
  if (!report.contains("model")) throw std::invalid_argument("model file missing 'model'");
  const json& model = report["model"];
  const std::vector<std::string> columns = model["columns"].get<std::vector<std::string>>();
  const json& block = model[opt.coefficients == "raw" ? "raw" : "reweighted"];
  const double intercept = block["intercept"].get<double>();
  VectorXd slopes = VectorXd::Zero(static_cast<Eigen::Index>(columns.size()));
  for (const json& entry : block["coefficients"])
    slopes[entry["index"].get<int>()] = entry["value"].get<double>();

  const CsvTable table = read_csv_file(opt.data);
  std::vector<int> column_map(columns.size(), -1);
  std::vector<std::string> missing;
  for (std::size_t j = 0; j < columns.size(); ++j) {
    for (int c = 0; c < table.n_cols(); ++c)
      if (table.columns[c] == columns[j]) column_map[j] = c;
    if (column_map[j] < 0) missing.push_back(columns[j]);
  }
  if (!missing.empty()) {
    std::string message = "data file missing model columns:";
    for (const std::string& name : missing) message += " " + name;
    throw std::invalid_argument(message);
  }

  std::string digest = report.contains("manifest_digest")
                           ? report["manifest_digest"].get<std::string>()
                           : std::string("unknown");
  std::string out = "# manifest_digest=" + digest + "\n";
  out += "row,prediction\n";
  for (int i = 0; i < table.n_rows(); ++i) {
    double pred = intercept;
    for (std::size_t j = 0; j < columns.size(); ++j)
      pred += slopes[static_cast<Eigen::Index>(j)] * table.rows[i][column_map[j]];
    out += std::to_string(i) + "," + format_double(pred) + "\n";
  }
  write_file(opt.output, out);
  std::cout << "wrote " << opt.output << "\n";
  return 0;
}

struct SimulateOptions {
  int scheme = 1;
  std::string contamination = "none";
  std::vector<double> eta;
  int runs = 100;
  std::uint64_t seed = 1;
  int threads = 0;
  bool full_p = false;
  std::string output_dir = ".";
  double alpha = 0.75;
  int starts = 500;
};

int run_simulate(const SimulateOptions& opt) {
  Contamination contamination = Contamination::kNone;
  if (opt.contamination == "vertical") {
    contamination = Contamination::kVertical;
  } else if (opt.contamination == "leverage") {
    contamination = Contamination::kLeverage;
  } else if (opt.contamination == "cluster") {
    contamination = Contamination::kDenseClusterLeverage;
  } else if (opt.contamination != "none") {
    throw std::invalid_argument(
        "invalid contamination '" + opt.contamination +
        "'; valid values: none, vertical, leverage, cluster");
  }

  std::vector<SchemeSpec> cells;
  SchemeSpec spec;
  spec.scheme = static_cast<Scheme>(opt.scheme);
  spec.contamination = contamination;
  spec.full_p = opt.full_p;
  if (contamination == Contamination::kDenseClusterLeverage) {
    std::vector<double> etas = opt.eta;
    if (etas.empty()) etas = {1.0, 7.0, 13.0, 19.0, 25.0};
    for (double eta : etas) {
      spec.eta = eta;
      cells.push_back(spec);
    }
  } else {
    cells.push_back(spec);
  }

  ExperimentConfig config;
  config.n_runs = opt.runs;
  config.seed = opt.seed;
  config.threads = resolve_threads(opt.threads);
  config.alpha = opt.alpha;
  config.n_starts = opt.starts;

  const std::vector<Method> methods = {Method::kLasso, Method::kRawSparseLts,
                                       Method::kSparseLts, Method::kOracle};
  const std::vector<MetricsRow> rows = run_experiment(cells, methods, config);

  json options;
  options["scheme"] = opt.scheme;
  options["contamination"] = opt.contamination;
  options["eta"] = opt.eta;
  options["runs"] = opt.runs;
  options["full_p"] = opt.full_p;
  options["output_dir"] = opt.output_dir;
  options["alpha"] = opt.alpha;
  options["starts"] = opt.starts;
  const Manifest manifest("simulate", options, opt.seed, json::object());
  const std::string digest = manifest.digest();

  json table = json::array();
  for (const MetricsRow& row : rows) {
    json r;
    r["scheme"] = row.scheme;
    r["contamination"] = row.contamination;
    r["eta"] = row.eta;
    r["method"] = row.method;
    r["rmspe"] = row.rmspe;
    r["se"] = row.se;
    if (row.fpr)
      r["fpr"] = *row.fpr;
    else
      r["fpr"] = nullptr;
    if (row.fnr)
      r["fnr"] = *row.fnr;
    else
      r["fnr"] = nullptr;
    r["n_runs"] = row.n_runs;
    r["n_failed"] = row.n_failed;
    table.push_back(std::move(r));
  }

  std::filesystem::create_directories(opt.output_dir);
  const std::filesystem::path dir(opt.output_dir);

  write_file(dir / "metrics.csv", "# manifest_digest=" + digest + "\n" + metrics_csv(rows));

  json metrics_doc;
  metrics_doc["rows"] = std::move(table);
  metrics_doc["manifest_digest"] = digest;
  write_file(dir / "metrics.json", metrics_doc.dump(2) + "\n");

  json manifest_doc = manifest.body;
  manifest_doc["manifest_digest"] = digest;
  write_file(dir / "manifest.json", manifest_doc.dump(2) + "\n");

  std::cout << "wrote " << (dir / "metrics.csv").string() << ", "
            << (dir / "metrics.json").string() << ", " << (dir / "manifest.json").string()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse least trimmed squares regression"};
  app.require_subcommand(1);

  FitOptions fit_opt;
  CLI::App* fit = app.add_subcommand("fit", "fit a model to a CSV dataset");
  fit->add_option("--input", fit_opt.input, "input CSV file")->required();
  fit->add_option("--response", fit_opt.response, "response column name")->required();
  fit->add_option("--output-dir", fit_opt.output_dir, "output directory");
  fit->add_option("--alpha", fit_opt.alpha, "trimming fraction in (0.5, 1]")
      ->check(CLI::Range(0.5, 1.0));
  double fixed_lambda = 0.0;
  CLI::Option* lambda_opt =
      fit->add_option("--lambda", fixed_lambda, "fixed penalty, bypasses selection")
          ->check(CLI::NonNegativeNumber);
  fit->add_option("--criterion", fit_opt.criterion, "selection criterion")
      ->check(CLI::IsMember({"bic", "cv"}));
  fit->add_option("--folds", fit_opt.folds, "cross-validation folds")->check(CLI::Range(2, 1000000));
  fit->add_option("--repeats", fit_opt.repeats, "cross-validation repetitions")
      ->check(CLI::PositiveNumber);
  fit->add_option("--starts", fit_opt.starts, "elemental restarts")->check(CLI::PositiveNumber);
  fit->add_option("--keep", fit_opt.keep, "chains iterated to convergence")
      ->check(CLI::PositiveNumber);
  fit->add_option("--delta", fit_opt.delta, "outlier cutoff level")
      ->check(CLI::Range(1e-9, 0.499999));
  fit->add_option("--seed", fit_opt.seed, "random seed");
  fit->add_option("--threads", fit_opt.threads, "worker threads (0 = auto)");

  PredictOptions predict_opt;
  CLI::App* predict = app.add_subcommand("predict", "predict from a fit report");
  predict->add_option("--model", predict_opt.model, "fit report JSON")->required();
  predict->add_option("--data", predict_opt.data, "data CSV file")->required();
  predict->add_option("--output", predict_opt.output, "predictions CSV path")->required();
  predict->add_option("--coefficients", predict_opt.coefficients, "coefficient set")
      ->check(CLI::IsMember({"raw", "reweighted"}));

  SimulateOptions sim_opt;
  CLI::App* simulate = app.add_subcommand("simulate", "run the simulation benchmark");
  simulate->add_option("--scheme", sim_opt.scheme, "sampling scheme")
      ->check(CLI::IsMember({1, 2, 3}))
      ->required();
  simulate->add_option("--contamination", sim_opt.contamination, "contamination setting")
      ->check(CLI::IsMember({"none", "vertical", "leverage", "cluster"}));
  simulate->add_option("--eta", sim_opt.eta, "leverage magnitudes for the cluster setting");
  simulate->add_option("--runs", sim_opt.runs, "simulation runs")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", sim_opt.seed, "random seed");
  simulate->add_option("--threads", sim_opt.threads, "worker threads (0 = auto)");
  simulate->add_flag("--full-p", sim_opt.full_p, "scheme 3 at p = 20,000");
  simulate->add_option("--output-dir", sim_opt.output_dir, "output directory");
  simulate->add_option("--alpha", sim_opt.alpha, "trimming fraction")->check(CLI::Range(0.5, 1.0));
  simulate->add_option("--starts", sim_opt.starts, "elemental restarts")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  }

  const auto started = std::chrono::steady_clock::now();
  int status = 0;
  try {
    if (fit->parsed()) {
      if (lambda_opt->count() > 0) fit_opt.fixed_lambda = fixed_lambda;
      status = run_fit(fit_opt);
    } else if (predict->parsed()) {
      status = run_predict(predict_opt);
    } else if (simulate->parsed()) {
      status = run_simulate(sim_opt);
    }
  } catch (const CsvError& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumericalFailure;
  }
  const auto elapsed = std::chrono::steady_clock::now() - started;
  std::cerr << "wall_clock_seconds="
            << std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() / 1000.0
            << "\n";
  return status;
}
