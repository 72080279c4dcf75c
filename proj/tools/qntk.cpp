// qntk: experiment harness for infinite-width kernel training emulation.
//
// Subcommands: fit-delta, scaling, accuracy, pipeline, ingest-kernel, ntk,
// pattern. Configuration comes from an optional JSON file plus flag
// overrides (flags win). A global --seed pins every stochastic choice, so
// identical invocations produce byte-identical outputs for any QNTK_THREADS.

#include "qntk/qntk.hpp"
#include "qntk/report_json.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using nlohmann::json;
using namespace qntk;

struct MnistSource {
  std::string images, labels;
  std::string test_images, test_labels;  // optional; tail of train files otherwise
  int digit_a = 8, digit_b = 9;
};

struct SphereSource {
  Eigen::Index n = 512;
  int d = 10;
  std::uint64_t seed = 7;
};

struct KernelSourceCfg {
  std::string kernel_path;
  std::string labels_csv;
  Eigen::Index train_n = 0;
};

struct Config {
  bool dump_predictions = false;
  std::optional<MnistSource> mnist;
  std::optional<SphereSource> sphere;
  std::optional<KernelSourceCfg> kernel;

  ActivationSpec activation;
  std::optional<int> depth;
  std::optional<double> depth_fraction;

  double pattern_c = 2.0;
  std::uint64_t pattern_seed = 1;
  double percentile = 0.0;
  bool class_bias = false;

  std::optional<double> precondition_beta;
  double precondition_exponent = 0.9;
  Eigen::Index precondition_reference_n = 16;
  bool precondition_auto = false;

  NoiseModel noise;
  bool noiseless = false;

  std::vector<Eigen::Index> grid = {16, 32, 64, 128, 256, 512};
  std::string output_dir = ".";
  std::uint64_t seed = 1;
  Eigen::Index test_limit = 1024;
  std::optional<double> delta_hat;
  int bootstrap_rounds = 1000;
};

void apply_json(Config& cfg, const json& j) {
  if (j.contains("dataset")) {
    const json& d = j["dataset"];
    if (d.contains("mnist")) {
      MnistSource m;
      m.images = d["mnist"].at("images");
      m.labels = d["mnist"].at("labels");
      if (d["mnist"].contains("test_images")) m.test_images = d["mnist"]["test_images"];
      if (d["mnist"].contains("test_labels")) m.test_labels = d["mnist"]["test_labels"];
      if (d["mnist"].contains("digits")) {
        m.digit_a = d["mnist"]["digits"].at(0);
        m.digit_b = d["mnist"]["digits"].at(1);
      }
      cfg.mnist = m;
    } else if (d.contains("sphere")) {
      SphereSource s;
      if (d["sphere"].contains("n")) s.n = d["sphere"]["n"];
      if (d["sphere"].contains("d")) s.d = d["sphere"]["d"];
      if (d["sphere"].contains("seed")) s.seed = d["sphere"]["seed"];
      cfg.sphere = s;
    } else if (d.contains("kernel")) {
      KernelSourceCfg k;
      k.kernel_path = d["kernel"].at("path");
      k.labels_csv = d["kernel"].at("labels");
      k.train_n = d["kernel"].at("train_n");
      cfg.kernel = k;
    }
  }
  if (j.contains("activation")) {
    const json& a = j["activation"];
    if (a.is_string()) {
      const std::string name = a;
      if (name == "erf") cfg.activation.kind = ActivationKind::erf_normalized;
      else if (name == "relu") cfg.activation.kind = ActivationKind::relu_normalized;
      else throw std::runtime_error("config: unknown activation '" + name + "'");
    } else if (a.contains("hermite")) {
      cfg.activation.kind = ActivationKind::hermite_series;
      cfg.activation.coefficients = a["hermite"].get<std::vector<double>>();
    }
  }
  if (j.contains("depth")) cfg.depth = j["depth"].get<int>();
  if (j.contains("depth_fraction")) cfg.depth_fraction = j["depth_fraction"].get<double>();
  if (j.contains("pattern")) {
    const json& p = j["pattern"];
    if (p.contains("c")) cfg.pattern_c = p["c"];
    if (p.contains("seed")) cfg.pattern_seed = p["seed"];
    if (p.contains("percentile")) cfg.percentile = p["percentile"];
    if (p.contains("class_bias")) cfg.class_bias = p["class_bias"];
  }
  if (j.contains("precondition")) {
    const json& p = j["precondition"];
    if (p.contains("beta")) cfg.precondition_beta = p["beta"].get<double>();
    if (p.contains("exponent")) cfg.precondition_exponent = p["exponent"];
    if (p.contains("reference_n")) cfg.precondition_reference_n = p["reference_n"];
    if (p.contains("auto")) cfg.precondition_auto = p["auto"];
  }
  if (j.contains("noise")) {
    const json& m = j["noise"];
    if (m.contains("ae_iterations")) cfg.noise.ae_iterations = m["ae_iterations"];
    if (m.contains("failure_prob")) cfg.noise.failure_prob = m["failure_prob"];
    if (m.contains("readout_shots")) cfg.noise.readout_shots = m["readout_shots"];
    if (m.contains("seed")) cfg.noise.rng_seed = m["seed"];
  }
  if (j.contains("noiseless")) cfg.noiseless = j["noiseless"];
  if (j.contains("grid")) cfg.grid = j["grid"].get<std::vector<Eigen::Index>>();
  if (j.contains("output_dir")) cfg.output_dir = j["output_dir"];
  if (j.contains("seed")) cfg.seed = j["seed"];
  if (j.contains("test_limit")) cfg.test_limit = j["test_limit"];
  if (j.contains("delta_hat")) cfg.delta_hat = j["delta_hat"].get<double>();
  if (j.contains("bootstrap_rounds")) cfg.bootstrap_rounds = j["bootstrap_rounds"];
}

// Derived seeds: the global seed fans out to every stochastic consumer.
std::uint64_t derived_seed(const Config& cfg, std::uint64_t salt) {
  return detail::mix64(cfg.seed ^ detail::mix64(salt));
}

struct ExperimentData {
  Dataset train_pool;
  Dataset test_pool;
};

ExperimentData load_feature_data(const Config& cfg, Eigen::Index train_needed) {
  ExperimentData out;
  const Eigen::Index test_n = std::max<Eigen::Index>(0, cfg.test_limit);
  if (cfg.mnist) {
    const MnistSource& m = *cfg.mnist;
    if (!m.test_images.empty() && test_n > 0) {
      out.train_pool = load_mnist_idx(m.images, m.labels, m.digit_a, m.digit_b, train_needed);
      out.test_pool =
          load_mnist_idx(m.test_images, m.test_labels, m.digit_a, m.digit_b, test_n);
    } else {
      Dataset all = load_mnist_idx(m.images, m.labels, m.digit_a, m.digit_b,
                                   train_needed + test_n);
      out.train_pool = all.head(train_needed);
      out.test_pool.features = all.features.bottomRows(test_n);
      out.test_pool.labels = all.labels.tail(test_n);
      out.test_pool.name = all.name + "_test";
    }
    return out;
  }
  if (cfg.sphere) {
    const SphereSource& s = *cfg.sphere;
    const Eigen::Index total = std::max(train_needed, s.n) + test_n;
    Dataset all = sample_sphere(total, s.d, s.seed ? s.seed : derived_seed(cfg, 0xda7a));
    out.train_pool = all.head(std::max(train_needed, s.n));
    out.test_pool.features = all.features.bottomRows(test_n);
    out.test_pool.labels = all.labels.tail(test_n);
    out.test_pool.name = all.name + "_test";
    return out;
  }
  throw std::runtime_error("this command requires a feature dataset (mnist or sphere)");
}

DualActivation dual_from_config(const Config& cfg) {
  return DualActivation::from_spec(cfg.activation);
}

// Power-law separability estimate evaluated at n (subsets {16,32,64,128}),
// falling back to the measured value when the pool is too small to fit.
double delta_hat_at(const Config& cfg, const Dataset& train_pool, Eigen::Index n) {
  if (cfg.delta_hat) return *cfg.delta_hat;
  std::vector<double> ns, ds;
  for (Eigen::Index sub : {Eigen::Index(16), Eigen::Index(32), Eigen::Index(64), Eigen::Index(128)})
    if (sub <= train_pool.size()) {
      ns.push_back(static_cast<double>(sub));
      ds.push_back(separability(train_pool.head(sub)).delta);
    }
  if (ns.size() < 3) return separability(train_pool.head(std::min(n, train_pool.size()))).delta;
  const SeparabilityFit fit = fit_power_law(ns, ds);
  return fit.a1 * std::pow(static_cast<double>(n), -fit.a2);
}

int resolve_depth_at(const Config& cfg, const Dataset& subset, const DualActivation& dual) {
  if (cfg.depth.has_value() == cfg.depth_fraction.has_value())
    throw std::runtime_error("exactly one of depth / depth_fraction must be set");
  if (cfg.depth) return *cfg.depth;
  const double delta = separability(subset).delta;
  const double mu = nonlinearity_coefficient(dual);
  return std::max(1, static_cast<int>(std::ceil(*cfg.depth_fraction *
                                                l_conv(subset.size(), delta, mu))));
}

PipelineOptions pipeline_options_at(const Config& cfg, const Dataset& subset,
                                    const DualActivation& dual, const Dataset& train_pool) {
  PipelineOptions opt;
  opt.depth = resolve_depth_at(cfg, subset, dual);
  opt.dual = dual;
  opt.delta_hat = delta_hat_at(cfg, train_pool, subset.size());
  opt.pattern_c = cfg.pattern_c;
  opt.pattern_seed = cfg.pattern_seed ? cfg.pattern_seed : derived_seed(cfg, 0x5ba5);
  opt.class_bias = cfg.class_bias;
  opt.percentile = cfg.percentile;
  opt.noise = cfg.noise;
  opt.noise.rng_seed = cfg.noise.rng_seed ? cfg.noise.rng_seed : derived_seed(cfg, 0x4015e);
  opt.noiseless = cfg.noiseless;
  if (cfg.precondition_beta) {
    PreconditionSpec p;
    p.beta = *cfg.precondition_beta;
    p.exponent = cfg.precondition_exponent;
    p.reference_n = cfg.precondition_reference_n;
    opt.precondition = p;
  }
  return opt;
}

std::ofstream open_output(const Config& cfg, const std::string& name) {
  std::filesystem::create_directories(cfg.output_dir);
  const auto path = std::filesystem::path(cfg.output_dir) / name;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open output file " + path.string());
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::runtime_error("median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return (v.size() % 2 == 1) ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

struct LogFit {
  double a = 0.0, b = 0.0, r_squared = 1.0;  // value ~ a + b ln n
};

LogFit fit_log_curve(const std::vector<double>& ns, const std::vector<double>& vs) {
  const std::size_t m = ns.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double x = std::log(ns[k]);
    sx += x; sy += vs[k]; sxx += x * x; sxy += x * vs[k];
  }
  LogFit f;
  const double denom = m * sxx - sx * sx;
  if (std::abs(denom) < 1e-12) return f;
  f.b = (m * sxy - sx * sy) / denom;
  f.a = (sy - f.b * sx) / m;
  double ss_res = 0, ss_tot = 0;
  const double ybar = sy / m;
  for (std::size_t k = 0; k < m; ++k) {
    const double fit = f.a + f.b * std::log(ns[k]);
    ss_res += (vs[k] - fit) * (vs[k] - fit);
    ss_tot += (vs[k] - ybar) * (vs[k] - ybar);
  }
  f.r_squared = (ss_tot > 0) ? 1.0 - ss_res / ss_tot : 1.0;
  return f;
}

// Test-kernel rows for a batch of points, parallel over points.
Matrix test_kernel_rows(const Dataset& train, const Dataset& test, const NtkParams& params) {
  Matrix rows(test.size(), train.size());
  parallel_for(static_cast<std::size_t>(test.size()), [&](std::size_t t) {
    const Vector x = test.features.row(static_cast<Eigen::Index>(t)).transpose();
    rows.row(static_cast<Eigen::Index>(t)) = test_kernel(train, x, params).transpose();
  }, 4);
  return rows;
}

// ---------------------------------------------------------------------------

int cmd_fit_delta(const Config& cfg) {
  std::vector<double> ns, deltas;
  std::string source_name;
  if (cfg.sphere) {
    source_name = "sphere_d" + std::to_string(cfg.sphere->d);
    for (Eigen::Index n : cfg.grid) {
      std::vector<double> per_seed;
      for (int s = 0; s < 10; ++s) {
        const Dataset data =
            sample_sphere(n, cfg.sphere->d, derived_seed(cfg, 0x5eed00 + s));
        per_seed.push_back(separability(data).delta);
      }
      ns.push_back(static_cast<double>(n));
      deltas.push_back(median(per_seed));
    }
  } else {
    const Eigen::Index max_n = *std::max_element(cfg.grid.begin(), cfg.grid.end());
    Config pool_cfg = cfg;
    pool_cfg.test_limit = 0;
    const ExperimentData data = load_feature_data(pool_cfg, max_n);
    source_name = data.train_pool.name;
    for (Eigen::Index n : cfg.grid) {
      ns.push_back(static_cast<double>(n));
      deltas.push_back(separability(data.train_pool.head(n)).delta);
    }
  }
  const SeparabilityFit fit = fit_power_law(ns, deltas);

  auto csv = open_output(cfg, "fit_delta.csv");
  csv << "n,delta\n";
  for (std::size_t k = 0; k < ns.size(); ++k)
    csv << static_cast<Eigen::Index>(ns[k]) << ',' << fmt_double(deltas[k]) << '\n';
  json j;
  j["source"] = source_name;
  j["a1"] = fit.a1;
  j["a2"] = fit.a2;
  j["r_squared"] = fit.r_squared;
  if (cfg.sphere) j["predicted_exponent"] = predicted_exponent(cfg.sphere->d);
  open_output(cfg, "fit_delta.json") << j.dump(2) << '\n';
  std::cout << "fit-delta: " << source_name << " a1=" << fmt_double(fit.a1)
            << " a2=" << fmt_double(fit.a2) << " r2=" << fmt_double(fit.r_squared) << "\n";
  return 0;
}

int cmd_scaling(const Config& cfg) {
  const DualActivation dual = dual_from_config(cfg);
  const Eigen::Index max_n = *std::max_element(cfg.grid.begin(), cfg.grid.end());
  const ExperimentData data = load_feature_data(cfg, max_n);

  auto csv = open_output(cfg, "scaling.csv");
  csv << "n,median_inv_p,median_readout_shots,kappa,s,kappa_bound\n";
  std::vector<double> ns, inv_ps, shots;
  for (Eigen::Index n : cfg.grid) {
    const Dataset subset = data.train_pool.head(n);
    const PipelineOptions opt = pipeline_options_at(cfg, subset, dual, data.train_pool);
    const PipelineContext ctx = prepare_pipeline(subset, PipelineMode::sparsified, opt);

    std::vector<double> inv_p(data.test_pool.size()), needed(data.test_pool.size());
    parallel_for(static_cast<std::size_t>(data.test_pool.size()), [&](std::size_t t) {
      const Vector x = data.test_pool.features.row(static_cast<Eigen::Index>(t)).transpose();
      const PipelineCostReport r = simulate_pipeline(ctx, subset, x, t);
      inv_p[t] = 1.0 / r.p_norm;
      needed[t] = r.readout_shots_needed;
    }, 4);

    const double med_p = median(inv_p);
    const double med_shots = median(needed);
    ns.push_back(static_cast<double>(n));
    inv_ps.push_back(med_p);
    shots.push_back(med_shots);
    csv << n << ',' << fmt_double(med_p) << ',' << fmt_double(med_shots) << ','
        << fmt_double(ctx.kappa) << ',' << ctx.sparsity << ',' << fmt_double(ctx.kappa_bound)
        << '\n';
  }
  const LogFit fp = fit_log_curve(ns, inv_ps);
  const LogFit fs = fit_log_curve(ns, shots);
  json j;
  j["inv_p_fit"] = {{"a", fp.a}, {"b", fp.b}, {"r_squared", fp.r_squared}};
  j["readout_fit"] = {{"a", fs.a}, {"b", fs.b}, {"r_squared", fs.r_squared}};
  open_output(cfg, "scaling_fit.json") << j.dump(2) << '\n';
  std::cout << "scaling: inv_p fit a=" << fmt_double(fp.a) << " b=" << fmt_double(fp.b)
            << " r2=" << fmt_double(fp.r_squared) << "; readout fit a=" << fmt_double(fs.a)
            << " b=" << fmt_double(fs.b) << " r2=" << fmt_double(fs.r_squared) << "\n";
  return 0;
}

void accuracy_rows_for_kernel(const Config& cfg, std::ostream& csv, Eigen::Index n,
                              const KernelMatrix& k_exact, const KernelMatrix& k_sparse,
                              const Matrix& k_star_rows, const Eigen::VectorXi& train_labels,
                              const Eigen::VectorXi& test_labels) {
  const Vector y = train_labels.cast<double>();
  const Vector w_exact = exact_weights(k_exact, y);
  const Vector w_sparse = sparsified_weights(k_sparse, y);
  const auto tests = k_star_rows.rows();

  for (PredictionMode mode :
       {PredictionMode::exact, PredictionMode::sparsified, PredictionMode::diagonal}) {
    Vector scores(tests);
    for (Eigen::Index t = 0; t < tests; ++t) {
      const Vector k_star = k_star_rows.row(t).transpose();
      switch (mode) {
        case PredictionMode::exact: scores[t] = k_star.dot(w_exact); break;
        case PredictionMode::sparsified: scores[t] = k_star.dot(w_sparse); break;
        case PredictionMode::diagonal: scores[t] = predict_diagonal(k_star, y); break;
      }
    }
    const PredictionBatch batch = make_prediction_batch(std::move(scores), mode);
    const AccuracyEstimate acc =
        evaluate_accuracy(batch, test_labels, cfg.bootstrap_rounds, derived_seed(cfg, 0xb007));
    csv << n << ',' << to_string(mode) << ',' << fmt_double(acc.accuracy) << ','
        << fmt_double(acc.two_sigma) << '\n';
    if (cfg.dump_predictions)
      open_output(cfg, "predictions_n" + std::to_string(n) + "_" + to_string(mode) + ".csv")
          << prediction_batch_csv(batch, test_labels);
  }
}

int cmd_accuracy(const Config& cfg) {
  auto csv = open_output(cfg, "accuracy.csv");
  csv << "n,mode,accuracy,two_sigma\n";

  if (cfg.kernel) {
    IngestReport report;
    const KernelMatrix all = read_kernel_qntk(cfg.kernel->kernel_path, &report);
    const Eigen::VectorXi labels = read_labels_csv(cfg.kernel->labels_csv);
    if (labels.size() != all.size())
      throw std::runtime_error("accuracy: kernel size and label count differ");
    const Eigen::Index train_n = cfg.kernel->train_n;
    if (train_n < 1 || train_n >= all.size())
      throw std::runtime_error("accuracy: train_n must split the ingested kernel");
    KernelMatrix k_train;
    k_train.entries = all.entries.topLeftCorner(train_n, train_n);
    k_train.source = KernelSource::ingested;
    k_train.diag_value = detail::shared_diagonal(k_train.entries);
    const Eigen::VectorXi train_labels = labels.head(train_n);
    const Eigen::VectorXi test_labels = labels.tail(all.size() - train_n);
    const Matrix k_star_rows = all.entries.bottomLeftCorner(all.size() - train_n, train_n);

    SparsityPattern pattern =
        generate_pattern(static_cast<std::size_t>(train_n), cfg.pattern_c,
                         cfg.pattern_seed ? cfg.pattern_seed : derived_seed(cfg, 0x5ba5),
                         cfg.class_bias ? &train_labels : nullptr);
    if (cfg.percentile > 0.0) {
      const Eigen::Index sub = std::min<Eigen::Index>(cfg.precondition_reference_n, train_n);
      KernelMatrix subset;
      subset.entries = k_train.entries.topLeftCorner(sub, sub);
      subset.source = KernelSource::ingested;
      pattern = percentile_bias(pattern, k_train, subset, cfg.percentile);
    }
    KernelMatrix k_sparse = sparsify(k_train, pattern);
    if (cfg.precondition_auto) {
      const Eigen::Index ref = std::min<Eigen::Index>(cfg.precondition_reference_n, train_n);
      KernelMatrix k_ref;
      k_ref.entries = k_sparse.entries.topLeftCorner(ref, ref);
      k_ref.source = KernelSource::ingested;
      const PreconditionSpec spec =
          calibrate_precondition(k_ref, cfg.precondition_exponent, 1.5, ref);
      k_sparse = precondition(k_sparse, spec, train_n);
    } else if (cfg.precondition_beta) {
      PreconditionSpec spec{*cfg.precondition_beta, cfg.precondition_exponent,
                            cfg.precondition_reference_n};
      k_sparse = precondition(k_sparse, spec, train_n);
    }
    accuracy_rows_for_kernel(cfg, csv, train_n, k_train, k_sparse, k_star_rows, train_labels,
                             test_labels);
    std::cout << "accuracy: ingested kernel, train_n=" << train_n << "\n";
    return 0;
  }

  const DualActivation dual = dual_from_config(cfg);
  const Eigen::Index max_n = *std::max_element(cfg.grid.begin(), cfg.grid.end());
  const ExperimentData data = load_feature_data(cfg, max_n);
  for (Eigen::Index n : cfg.grid) {
    const Dataset subset = data.train_pool.head(n);
    const NtkParams params{resolve_depth_at(cfg, subset, dual), dual};
    const KernelMatrix k_exact = assemble_kernel(subset, params);
    const SparsityPattern pattern =
        generate_pattern(static_cast<std::size_t>(n), cfg.pattern_c,
                         cfg.pattern_seed ? cfg.pattern_seed : derived_seed(cfg, 0x5ba5),
                         cfg.class_bias ? &subset.labels : nullptr);
    const KernelMatrix k_sparse = sparsify(k_exact, pattern);
    const Matrix k_star_rows = test_kernel_rows(subset, data.test_pool, params);
    accuracy_rows_for_kernel(cfg, csv, n, k_exact, k_sparse, k_star_rows, subset.labels,
                             data.test_pool.labels);
  }
  std::cout << "accuracy: grid done (" << cfg.grid.size() << " sizes, 3 modes)\n";
  return 0;
}

int cmd_pipeline(const Config& cfg, std::optional<Eigen::Index> test_index,
                 const std::string& mode_name) {
  std::vector<PipelineMode> modes;
  if (mode_name == "diagonal") modes = {PipelineMode::diagonal};
  else if (mode_name == "sparsified") modes = {PipelineMode::sparsified};
  else modes = {PipelineMode::diagonal, PipelineMode::sparsified};

  auto csv = open_output(cfg, "pipeline.csv");
  csv << pipeline_report_csv_header() << '\n';
  json summary;

  auto emit = [&](PipelineMode mode, const PipelineContext& ctx,
                  std::vector<PipelineCostReport> reports) {
    std::vector<double> inv_p, shots;
    for (const auto& r : reports) {
      csv << pipeline_report_csv_row(r) << '\n';
      inv_p.push_back(1.0 / r.p_norm);
      shots.push_back(r.readout_shots_needed);
    }
    summary[to_string(mode)] = {{"median_inv_p", median(inv_p)},
                                {"median_readout_shots", median(shots)},
                                {"kappa", ctx.kappa},
                                {"s", ctx.sparsity}};
  };

  if (cfg.kernel) {
    // external kernel: test kernel rows come from the file's cross block
    const KernelMatrix all = read_kernel_qntk(cfg.kernel->kernel_path);
    const Eigen::VectorXi labels = read_labels_csv(cfg.kernel->labels_csv);
    if (labels.size() != all.size())
      throw std::runtime_error("pipeline: kernel size and label count differ");
    const Eigen::Index train_n = cfg.kernel->train_n;
    if (train_n < 1 || train_n >= all.size())
      throw std::runtime_error("pipeline: train_n must split the ingested kernel");
    KernelMatrix k_train;
    k_train.entries = all.entries.topLeftCorner(train_n, train_n);
    k_train.source = KernelSource::ingested;
    k_train.diag_value = detail::shared_diagonal(k_train.entries);

    PipelineOptions opt;
    opt.depth = 1;  // unused by the kernel path; keeps the option contract satisfied
    opt.pattern_c = cfg.pattern_c;
    opt.pattern_seed = cfg.pattern_seed ? cfg.pattern_seed : derived_seed(cfg, 0x5ba5);
    opt.class_bias = cfg.class_bias;
    opt.percentile = cfg.percentile;
    opt.noise = cfg.noise;
    opt.noise.rng_seed = cfg.noise.rng_seed ? cfg.noise.rng_seed : derived_seed(cfg, 0x4015e);
    opt.noiseless = cfg.noiseless;
    if (cfg.precondition_beta)
      opt.precondition = PreconditionSpec{*cfg.precondition_beta, cfg.precondition_exponent,
                                          cfg.precondition_reference_n};
    const Eigen::VectorXi train_labels = labels.head(train_n);
    const Eigen::Index t_begin = test_index.value_or(0);
    const Eigen::Index t_end = test_index ? *test_index + 1 : all.size() - train_n;
    if (t_begin < 0 || t_end > all.size() - train_n)
      throw std::runtime_error("pipeline: test index out of range");
    for (PipelineMode mode : modes) {
      const PipelineContext ctx =
          prepare_pipeline_from_kernel(k_train, train_labels, mode, opt);
      std::vector<PipelineCostReport> reports(t_end - t_begin);
      parallel_for(static_cast<std::size_t>(t_end - t_begin), [&](std::size_t k) {
        const Eigen::Index t = t_begin + static_cast<Eigen::Index>(k);
        const Vector k_star = all.entries.row(train_n + t).head(train_n).transpose();
        reports[k] = simulate_from_test_kernel(ctx, k_star, static_cast<std::uint64_t>(t));
      }, 4);
      emit(mode, ctx, std::move(reports));
    }
    std::cout << summary.dump() << "\n";
    return 0;
  }

  const DualActivation dual = dual_from_config(cfg);
  const Eigen::Index n = *std::max_element(cfg.grid.begin(), cfg.grid.end());
  const ExperimentData data = load_feature_data(cfg, n);
  const Dataset subset = data.train_pool.head(n);
  const PipelineOptions opt = pipeline_options_at(cfg, subset, dual, data.train_pool);

  for (PipelineMode mode : modes) {
    const PipelineContext ctx = prepare_pipeline(subset, mode, opt);
    const Eigen::Index t_begin = test_index.value_or(0);
    const Eigen::Index t_end = test_index ? *test_index + 1 : data.test_pool.size();
    if (t_begin < 0 || t_end > data.test_pool.size())
      throw std::runtime_error("pipeline: test index out of range");
    std::vector<PipelineCostReport> reports(t_end - t_begin);
    parallel_for(static_cast<std::size_t>(t_end - t_begin), [&](std::size_t k) {
      const Eigen::Index t = t_begin + static_cast<Eigen::Index>(k);
      const Vector x = data.test_pool.features.row(t).transpose();
      reports[k] = simulate_pipeline(ctx, subset, x, static_cast<std::uint64_t>(t));
    }, 4);
    emit(mode, ctx, std::move(reports));
  }
  const QramCost qram = qram_cost_model(n, subset.dim());
  summary["qram"] = {{"insert_cost_per_entry", qram.insert_cost},
                     {"query_cost", qram.query_cost},
                     {"entries", n * subset.dim()}};
  std::cout << summary.dump() << "\n";
  return 0;
}

int cmd_ingest_kernel(const std::string& path) {
  IngestReport report;
  const KernelMatrix k = read_kernel_qntk(path, &report);
  std::cout << "ingest-kernel: ok n=" << report.n
            << " max_asymmetry=" << fmt_double(report.max_asymmetry)
            << " min_eigenvalue=" << fmt_double(report.min_eigenvalue)
            << " diag=[" << fmt_double(report.diag_min) << ", " << fmt_double(report.diag_max)
            << "] shared_diagonal=" << (report.shared_diagonal ? "yes" : "no") << "\n";
  (void)k;
  return 0;
}

int cmd_ntk(const Config& cfg, const std::string& out_path, Eigen::Index n) {
  const DualActivation dual = dual_from_config(cfg);
  const ExperimentData data = load_feature_data(cfg, n);
  const Dataset subset = data.train_pool.head(n);
  const NtkParams params{resolve_depth_at(cfg, subset, dual), dual};
  const KernelMatrix k = assemble_kernel(subset, params);
  write_kernel_qntk(out_path, k);
  std::cout << "ntk: wrote " << out_path << " n=" << n << " depth=" << params.depth << "\n";
  return 0;
}

int cmd_pattern(const Config& cfg, const std::string& out_path, Eigen::Index n) {
  std::optional<Dataset> subset;
  const Eigen::VectorXi* labels = nullptr;
  if (cfg.class_bias) {
    const ExperimentData data = load_feature_data(cfg, n);
    subset = data.train_pool.head(n);
    labels = &subset->labels;
  }
  const SparsityPattern p =
      generate_pattern(static_cast<std::size_t>(n), cfg.pattern_c,
                       cfg.pattern_seed ? cfg.pattern_seed : derived_seed(cfg, 0x5ba5), labels);
  write_pattern_qspr(out_path, p);
  std::cout << "pattern: wrote " << out_path << " n=" << n << " max_degree=" << p.max_degree()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Infinite-width kernel training emulation harness"};
  app.require_subcommand(1);

  Config cfg;
  std::string config_path;
  std::string mnist_images, mnist_labels, mnist_test_images, mnist_test_labels;
  std::vector<int> digits;
  Eigen::Index sphere_n = -1;
  int sphere_d = -1;
  std::string kernel_path_cfg, kernel_labels_cfg;
  Eigen::Index kernel_train_n = -1;
  std::vector<Eigen::Index> grid_flag;
  std::string activation_name;
  std::vector<double> hermite_coeffs;
  double depth_fraction_flag = -1.0;
  int depth_flag = -1;
  double delta_hat_flag = -1.0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", cfg.seed, "global seed for all stochastic behavior");
    sub->add_option("--out", cfg.output_dir, "output directory");
    sub->add_option("--grid", grid_flag, "training-set sizes (doubling grid)");
    sub->add_option("--mnist-images", mnist_images, "IDX image file");
    sub->add_option("--mnist-labels", mnist_labels, "IDX label file");
    sub->add_option("--mnist-test-images", mnist_test_images, "IDX test image file");
    sub->add_option("--mnist-test-labels", mnist_test_labels, "IDX test label file");
    sub->add_option("--digits", digits, "digit pair, e.g. --digits 8 9")->expected(2);
    sub->add_option("--sphere-n", sphere_n, "sphere dataset size");
    sub->add_option("--sphere-d", sphere_d, "sphere dimension (>= 3)");
    sub->add_option("--kernel-file", kernel_path_cfg, "ingested QNTK kernel");
    sub->add_option("--kernel-labels", kernel_labels_cfg, "labels CSV for ingested kernel");
    sub->add_option("--train-n", kernel_train_n, "training block size of ingested kernel");
    sub->add_option("--activation", activation_name, "erf | relu");
    sub->add_option("--hermite", hermite_coeffs, "Hermite coefficients a_1 a_2 ...");
    sub->add_option("--depth", depth_flag, "hidden-layer count");
    sub->add_option("--depth-fraction", depth_fraction_flag, "depth as a fraction of L_conv");
    sub->add_option("--pattern-c", cfg.pattern_c, "sparsity constant in s = ceil(c ln n)");
    sub->add_option("--pattern-seed", cfg.pattern_seed, "sparsity pattern seed");
    sub->add_option("--percentile", cfg.percentile, "drop pattern entries below this percentile");
    sub->add_flag("--class-bias", cfg.class_bias, "zero cross-class pattern entries");
    sub->add_option("--precondition-beta", [&cfg](const std::vector<std::string>& v) {
      cfg.precondition_beta = std::stod(v.at(0));
      return true;
    }, "off-diagonal suppression beta");
    sub->add_option("--precondition-exponent", cfg.precondition_exponent, "suppression exponent");
    sub->add_option("--precondition-reference-n", cfg.precondition_reference_n,
                    "calibration size");
    sub->add_flag("--precondition-auto", cfg.precondition_auto,
                  "calibrate beta at the reference size (ingested kernels)");
    sub->add_flag("--noiseless", cfg.noiseless, "disable sampling noise");
    sub->add_option("--ae-iterations", cfg.noise.ae_iterations, "amplitude estimation iterations");
    sub->add_option("--failure-prob", cfg.noise.failure_prob, "median-evaluation Delta");
    sub->add_option("--readout-shots", cfg.noise.readout_shots, "readout shots m");
    sub->add_option("--test-limit", cfg.test_limit, "number of test points");
    sub->add_option("--delta-hat", delta_hat_flag, "separability estimate override");
    sub->add_option("--bootstrap-rounds", cfg.bootstrap_rounds, "Poisson bootstrap rounds");
    sub->add_flag("--dump-predictions", cfg.dump_predictions,
                  "write per-test prediction CSVs (accuracy command)");
  };

  auto* sc_fit = app.add_subcommand("fit-delta", "separability power-law fit");
  auto* sc_scaling = app.add_subcommand("scaling", "measurement-cost scaling over the grid");
  auto* sc_accuracy = app.add_subcommand("accuracy", "exact vs approximate accuracy");
  auto* sc_pipeline = app.add_subcommand("pipeline", "full training-pipeline emulation");
  auto* sc_ingest = app.add_subcommand("ingest-kernel", "validate a QNTK kernel file");
  auto* sc_ntk = app.add_subcommand("ntk", "dump a kernel matrix in QNTK format");
  auto* sc_pattern = app.add_subcommand("pattern", "dump a QSPR sparsity pattern");
  for (auto* sub : {sc_fit, sc_scaling, sc_accuracy, sc_pipeline, sc_ntk, sc_pattern})
    add_common(sub);

  Eigen::Index pipeline_test_index = -1;
  std::string pipeline_mode = "both";
  sc_pipeline->add_option("--test-index", pipeline_test_index, "single test point");
  sc_pipeline->add_option("--mode", pipeline_mode, "diagonal | sparsified | both");

  std::string ingest_path;
  sc_ingest->add_option("path", ingest_path, "QNTK file")->required();

  std::string dump_path = "kernel.qntk";
  Eigen::Index dump_n = 64;
  sc_ntk->add_option("--file", dump_path, "output QNTK path");
  sc_ntk->add_option("--n", dump_n, "kernel size");

  std::string pattern_path = "pattern.qspr";
  Eigen::Index pattern_n = 64;
  sc_pattern->add_option("--file", pattern_path, "output QSPR path");
  sc_pattern->add_option("--n", pattern_n, "pattern size");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw std::runtime_error("cannot open config " + config_path);
      json j;
      in >> j;
      apply_json(cfg, j);
    }
    // Flags override the config file.
    if (!mnist_images.empty()) {
      MnistSource m = cfg.mnist.value_or(MnistSource{});
      m.images = mnist_images;
      m.labels = mnist_labels;
      if (!mnist_test_images.empty()) m.test_images = mnist_test_images;
      if (!mnist_test_labels.empty()) m.test_labels = mnist_test_labels;
      cfg.mnist = m;
      cfg.sphere.reset();
      cfg.kernel.reset();
    }
    if (!digits.empty() && cfg.mnist) {
      cfg.mnist->digit_a = digits.at(0);
      cfg.mnist->digit_b = digits.at(1);
    }
    if (sphere_d > 0 || sphere_n > 0) {
      SphereSource s = cfg.sphere.value_or(SphereSource{});
      if (sphere_n > 0) s.n = sphere_n;
      if (sphere_d > 0) s.d = sphere_d;
      s.seed = 0;  // derive from the global seed
      cfg.sphere = s;
      cfg.mnist.reset();
      cfg.kernel.reset();
    }
    if (!kernel_path_cfg.empty()) {
      KernelSourceCfg k;
      k.kernel_path = kernel_path_cfg;
      k.labels_csv = kernel_labels_cfg;
      k.train_n = kernel_train_n;
      cfg.kernel = k;
      cfg.mnist.reset();
      cfg.sphere.reset();
    }
    if (!activation_name.empty()) {
      cfg.activation.coefficients.clear();
      if (activation_name == "erf") cfg.activation.kind = ActivationKind::erf_normalized;
      else if (activation_name == "relu") cfg.activation.kind = ActivationKind::relu_normalized;
      else throw std::runtime_error("unknown activation '" + activation_name + "'");
    }
    if (!hermite_coeffs.empty()) {
      cfg.activation.kind = ActivationKind::hermite_series;
      cfg.activation.coefficients = hermite_coeffs;
    }
    if (depth_flag > 0) { cfg.depth = depth_flag; cfg.depth_fraction.reset(); }
    if (depth_fraction_flag > 0) { cfg.depth_fraction = depth_fraction_flag; cfg.depth.reset(); }
    if (!cfg.depth && !cfg.depth_fraction) cfg.depth_fraction = 0.1;
    if (delta_hat_flag > 0) cfg.delta_hat = delta_hat_flag;
    if (!grid_flag.empty()) cfg.grid = grid_flag;
    if (cfg.grid.empty()) throw std::runtime_error("empty size grid");

    if (*sc_fit) return cmd_fit_delta(cfg);
    if (*sc_scaling) return cmd_scaling(cfg);
    if (*sc_accuracy) return cmd_accuracy(cfg);
    if (*sc_pipeline)
      return cmd_pipeline(cfg,
                          pipeline_test_index >= 0
                              ? std::optional<Eigen::Index>(pipeline_test_index)
                              : std::nullopt,
                          pipeline_mode);
    if (*sc_ingest) return cmd_ingest_kernel(ingest_path);
    if (*sc_ntk) return cmd_ntk(cfg, dump_path, dump_n);
    if (*sc_pattern) return cmd_pattern(cfg, pattern_path, pattern_n);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
