// ddl_cli: train / eval / sweep / synth front end.
//
// Exit codes: 0 success, 2 configuration error, 3 data or dimension error,
// 4 numeric failure, 1 anything else.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ddl/ddl.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "1.0.0";
constexpr int kCsvSchemaVersion = 1;

// ---------------------------------------------------------------- helpers

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ddl::DataError(ddl::DataErrorKind::Io, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string digest_hex(const std::vector<unsigned char>& bytes) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(ddl::fnv1a64(bytes.data(), bytes.size())));
  return buf;
}

json file_record(const std::string& path) {
  const auto bytes = read_bytes(path);
  return json{{"path", fs::absolute(path).lexically_normal().string()},
              {"bytes", bytes.size()},
              {"fnv1a64", digest_hex(bytes)}};
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ddl::DataError(ddl::DataErrorKind::Io, "cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw ddl::DataError(ddl::DataErrorKind::Io, "failed writing '" + path.string() + "'");
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ddl::DataError(ddl::DataErrorKind::Io, "cannot create '" + dir + "': " + ec.message());
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what, T (*conv)(const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = ddl::detail::trim(item);
    if (item.empty()) continue;
    out.push_back(conv(item));
  }
  if (out.empty()) throw ddl::ConfigError(std::string(what) + ": empty list");
  return out;
}

long long to_ll(const std::string& s) { return ddl::detail::to_integer("grid", s); }
std::string to_str(const std::string& s) { return s; }

// ------------------------------------------------------------------- data

struct DataArgs {
  std::string data;
  std::string labels;
  std::string format;  // idx | csv | "" (idx when --labels is given)
  int label_column = 0;
  std::string delimiter = ",";
  bool center = false;

  std::string resolved_format() const {
    if (!format.empty()) return format;
    return labels.empty() ? "csv" : "idx";
  }

  json to_json() const {
    return json{{"data", data.empty() ? "" : fs::absolute(data).lexically_normal().string()},
                {"labels", labels.empty() ? "" : fs::absolute(labels).lexically_normal().string()},
                {"format", resolved_format()},
                {"label_column", label_column},
                {"delimiter", delimiter},
                {"center", center}};
  }

  static DataArgs from_json(const json& j) {
    DataArgs a;
    a.data = j.at("data").get<std::string>();
    a.labels = j.at("labels").get<std::string>();
    a.format = j.at("format").get<std::string>();
    a.label_column = j.at("label_column").get<int>();
    a.delimiter = j.at("delimiter").get<std::string>();
    a.center = j.at("center").get<bool>();
    return a;
  }

  json input_records() const {
    json arr = json::array();
    arr.push_back(file_record(data));
    if (!labels.empty()) arr.push_back(file_record(labels));
    return arr;
  }
};

void add_data_options(CLI::App* cmd, DataArgs& a, bool required = true) {
  auto* d = cmd->add_option("--data", a.data, "Samples: IDX image file or delimited table");
  if (required) d->required();
  cmd->add_option("--labels", a.labels, "IDX label file (IDX format only)");
  cmd->add_option("--format", a.format, "idx or csv (default: idx when --labels is given)")
      ->check(CLI::IsMember({"idx", "csv"}));
  cmd->add_option("--label-column", a.label_column, "Label column of a delimited table")->capture_default_str();
  cmd->add_option("--delimiter", a.delimiter, "Field separator of a delimited table ('tab' for tabs)")
      ->capture_default_str();
  cmd->add_flag("--center", a.center, "Subtract each sample's mean from its entries");
}

ddl::Dataset load_dataset(const DataArgs& a) {
  const std::string format = a.resolved_format();
  ddl::Dataset ds;
  if (format == "idx") {
    if (a.labels.empty()) throw ddl::ConfigError("IDX input needs --labels");
    ds = ddl::load_idx(a.data, a.labels);
  } else {
    if (!a.labels.empty()) throw ddl::ConfigError("--labels applies to IDX input only; delimited tables carry labels");
    const std::string delim = a.delimiter == "tab" ? "\t" : a.delimiter;
    if (delim.size() != 1) throw ddl::ConfigError("--delimiter must be a single character");
    ds = ddl::load_delimited(a.data, delim[0], a.label_column);
  }
  if (a.center) {
    for (ddl::Index i = 0; i < ds.size(); ++i) ds.samples.col(i).array() -= ds.samples.col(i).mean();
  }
  ds.validate();
  return ds;
}

// ----------------------------------------------------------------- config

// Options that overlay TrainConfig; unset ones leave the config file value.
struct TrainFlags {
  std::optional<long long> k;
  std::optional<int> t;
  std::optional<std::string> loss;
  std::optional<double> rho;
  std::optional<double> eps;
  std::optional<int> q_max;
  std::optional<int> p_max;
  std::optional<std::uint64_t> seed;
  std::optional<double> ridge;
  std::optional<std::string> init;
  std::string config_path;
  std::string mask_path;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f, bool with_kt) {
  if (with_kt) {
    cmd->add_option("--k", f.k, "Dictionary size K");
    cmd->add_option("--t", f.t, "Sparsity budget T");
    cmd->add_option("--loss", f.loss, "square, exp, logistic or hinge");
  }
  cmd->add_option("--rho", f.rho, "Smooth hinge band half-width");
  cmd->add_option("--eps", f.eps, "Smooth hinge quadratic tail weight");
  cmd->add_option("--q-max", f.q_max, "Outer iterations");
  cmd->add_option("--p-max", f.p_max, "Newton iterations per discriminative coding solve");
  cmd->add_option("--seed", f.seed, "Seed for every random choice");
  cmd->add_option("--ridge", f.ridge, "Classifier ridge (default 1e-6 per labeled sample)");
  cmd->add_option("--init", f.init, "Dictionary initialization: samples or gaussian");
  cmd->add_option("--config", f.config_path, "key = value file; flags override it");
  cmd->add_option("--semi-supervised-mask", f.mask_path, "File with one 0/1 per sample (1 = labeled)");
}

std::vector<char> read_mask(const std::string& path) {
  const auto bytes = read_bytes(path);
  std::vector<char> mask;
  std::string line;
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  while (std::getline(in, line)) {
    line = ddl::detail::trim(line);
    if (line.empty()) continue;
    if (line != "0" && line != "1") {
      throw ddl::DataError(ddl::DataErrorKind::Format, "mask file lines must be 0 or 1, got '" + line + "'");
    }
    mask.push_back(static_cast<char>(line == "1"));
  }
  return mask;
}

// Keys a config file may carry besides TrainConfig fields.
const std::vector<std::string> kSweepKeys{"k_grid", "t_grid", "losses", "test_fraction"};

ddl::TrainConfig resolve_config(const TrainFlags& f, ddl::KeyValues* extras) {
  ddl::TrainConfig cfg;
  if (!f.config_path.empty()) {
    const auto bytes = read_bytes(f.config_path);
    for (const auto& [key, value] : ddl::parse_key_values(std::string(bytes.begin(), bytes.end()))) {
      if (ddl::apply_config_key(cfg, key, value)) continue;
      if (extras && std::find(kSweepKeys.begin(), kSweepKeys.end(), key) != kSweepKeys.end()) {
        (*extras)[key] = value;
        continue;
      }
      throw ddl::ConfigError("unknown config key '" + key + "' in " + f.config_path);
    }
  }
  if (f.k) cfg.K = *f.k;
  if (f.t) cfg.T = *f.t;
  if (f.loss) ddl::apply_config_key(cfg, "loss", *f.loss);
  if (f.rho) cfg.loss.rho = *f.rho;
  if (f.eps) cfg.loss.eps = *f.eps;
  if (f.q_max) cfg.q_max = *f.q_max;
  if (f.p_max) cfg.p_max = *f.p_max;
  if (f.seed) cfg.seed = *f.seed;
  if (f.ridge) cfg.ridge = *f.ridge;
  if (f.init) cfg.init = ddl::parse_init(*f.init);
  if (!f.mask_path.empty()) cfg.labeled_mask = read_mask(f.mask_path);
  return cfg;
}

json config_json(const ddl::TrainConfig& cfg) {
  json j;
  for (const auto& [key, value] : ddl::parse_key_values(ddl::config_to_text(cfg))) j[key] = value;
  return j;
}

json manifest_head(const std::string& command) {
  return json{{"tool", "ddl_cli"},
              {"tool_version", kToolVersion},
              {"model_format_version", ddl::kModelFormatVersion},
              {"csv_schema_version", kCsvSchemaVersion},
              {"command", command},
              {"started_at", utc_now()}};
}

void finish_manifest(json& m, const fs::path& dir, const std::vector<std::string>& outputs) {
  m["finished_at"] = utc_now();
  json out = json::object();
  for (const auto& name : outputs) {
    const fs::path p = dir / name;
    out[name] = json{{"path", fs::absolute(p).lexically_normal().string()}, {"fnv1a64", digest_hex(read_bytes(p.string()))}};
  }
  m["outputs"] = out;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

std::string trace_csv(const ddl::DdlModel& m) {
  std::ostringstream out;
  out << "iter,objective,rep_cost,cls_cost,log_prior_terms\n";
  for (std::size_t q = 0; q < m.trace.size(); ++q) {
    const auto& t = m.trace[q];
    out << q << ',' << fmt(t.total()) << ',' << fmt(t.representation) << ',' << fmt(t.classification) << ','
        << fmt(t.log_prior_terms()) << '\n';
  }
  return out.str();
}

ddl::DdlModel fit(const ddl::Dataset& ds, ddl::TrainConfig cfg, bool baseline, int threads) {
  cfg.threads = threads;
  const ddl::LabelMatrix L = ds.label_matrix();
  return baseline ? ddl::train_baseline(ds.samples, L, cfg) : ddl::train(ds.samples, L, cfg);
}

// ------------------------------------------------------------------ train

struct TrainArgs {
  DataArgs data;
  TrainFlags flags;
  bool baseline = false;
  std::string out_dir;
  std::string manifest;
  int threads = 1;
};

int cmd_train(const TrainArgs& a, const CLI::App& cmd) {
  DataArgs data = a.data;
  ddl::TrainConfig cfg;
  bool baseline = a.baseline;
  json inputs;
  if (!a.manifest.empty()) {
    for (const char* opt : {"--data", "--labels", "--format", "--label-column", "--delimiter", "--center", "--k",
                            "--t", "--loss", "--rho", "--eps", "--q-max", "--p-max", "--seed", "--ridge", "--init",
                            "--config", "--semi-supervised-mask", "--baseline"}) {
      if (cmd.count(opt) > 0) {
        throw ddl::ConfigError(std::string(opt) + " cannot be combined with --manifest (the manifest fixes it)");
      }
    }
    const auto bytes = read_bytes(a.manifest);
    json m;
    try {
      m = json::parse(bytes.begin(), bytes.end());
      data = DataArgs::from_json(m.at("data"));
      cfg = ddl::config_from_text(m.at("config_text").get<std::string>());
      baseline = m.at("baseline").get<bool>();
      inputs = m.at("inputs");
    } catch (const json::exception& e) {
      throw ddl::DataError(ddl::DataErrorKind::Format, "manifest '" + a.manifest + "': " + e.what());
    }
    for (const auto& rec : inputs) {
      const std::string path = rec.at("path").get<std::string>();
      if (file_record(path).at("fnv1a64") != rec.at("fnv1a64")) {
        throw ddl::DataError(ddl::DataErrorKind::Format, "input '" + path + "' changed since the manifest was written");
      }
    }
  } else {
    if (a.data.data.empty()) throw ddl::ConfigError("train needs --data (or --manifest)");
    cfg = resolve_config(a.flags, nullptr);
    inputs = data.input_records();
    if (!a.flags.mask_path.empty()) inputs.push_back(file_record(a.flags.mask_path));
    if (!a.flags.config_path.empty()) inputs.push_back(file_record(a.flags.config_path));
  }
  cfg.validate();

  json manifest = manifest_head("train");
  const ddl::Dataset ds = load_dataset(data);
  const auto t0 = std::chrono::steady_clock::now();
  const ddl::DdlModel model = fit(ds, cfg, baseline, a.threads);
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  ddl::save_model(model, (dir / "model.ddl").string());
  write_text_file(dir / "trace.csv", trace_csv(model));

  manifest["seed"] = cfg.seed;
  manifest["baseline"] = baseline;
  manifest["threads"] = a.threads;
  manifest["data"] = data.to_json();
  manifest["inputs"] = inputs;
  manifest["config"] = config_json(cfg);
  manifest["config_text"] = ddl::config_to_text(cfg);
  manifest["csv_schemas"] = json{{"trace.csv", "iter,objective,rep_cost,cls_cost,log_prior_terms"}};
  manifest["summary"] = json{{"samples", ds.size()},
                             {"dimension", ds.dim()},
                             {"classes", ds.class_count},
                             {"iterations", model.trace.size() - 1},
                             {"best_iteration", model.best_iteration},
                             {"initial_objective", model.trace.front().total()},
                             {"best_objective", model.trace[static_cast<std::size_t>(model.best_iteration)].total()},
                             {"train_ms", ms}};
  finish_manifest(manifest, dir, {"model.ddl", "trace.csv"});

  std::printf("%s: %lld samples, d=%lld, C=%d, K=%lld, T=%d, loss=%s\n", baseline ? "baseline" : "ddl",
              static_cast<long long>(ds.size()), static_cast<long long>(ds.dim()), ds.class_count,
              static_cast<long long>(cfg.K), cfg.T, std::string(ddl::loss_name(cfg.loss)).c_str());
  std::printf("objective %s -> %s (%s iteration %d of %zu), %.0f ms\n", fmt(model.trace.front().total()).c_str(),
              fmt(model.trace[static_cast<std::size_t>(model.best_iteration)].total()).c_str(),
              baseline ? "final" : "best at", model.best_iteration, model.trace.size() - 1, ms);
  std::printf("wrote %s\n", (dir / "model.ddl").string().c_str());
  return 0;
}

// ------------------------------------------------------------------- eval

struct EvalArgs {
  std::vector<std::string> models;
  DataArgs data;
  std::string mode = "fast";
  bool robust = false;
  int e_budget = 0;
  int t_test = 0;
  std::string dataset_name;
  std::string out_dir;
  int threads = 1;
};

ddl::PredictOptions predict_options(const std::string& mode, bool robust, int e_budget, int t_test) {
  ddl::PredictOptions o;
  o.mode = ddl::parse_mode(mode);
  o.robust = robust;
  o.e_budget = e_budget;
  o.T_test = t_test;
  o.validate();
  return o;
}

int cmd_eval(const EvalArgs& a) {
  json manifest = manifest_head("eval");
  const ddl::PredictOptions opts = predict_options(a.mode, a.robust, a.e_budget, a.t_test);
  const ddl::Dataset ds = load_dataset(a.data);
  const std::string name = a.dataset_name.empty() ? fs::path(a.data.data).stem().string() : a.dataset_name;

  std::ostringstream csv;
  json inputs = a.data.input_records();
  json results = json::array();
  for (std::size_t i = 0; i < a.models.size(); ++i) {
    const ddl::DdlModel model = ddl::load_model(a.models[i]);
    inputs.push_back(file_record(a.models[i]));
    if (model.classifiers.classes() < ds.class_count) {
      throw ddl::DimensionError("test labels reach class " + std::to_string(ds.class_count - 1) + " but the model has " +
                                std::to_string(model.classifiers.classes()) + " classes");
    }
    const ddl::Metrics m = ddl::evaluate(model, ds.samples, ds.labels, opts, a.threads);
    if (i == 0) ddl::write_metrics_header(csv, model.classifiers.classes());
    ddl::write_metrics_row(csv, name, opts, model, m);
    results.push_back(json{{"model", a.models[i]},
                           {"baseline", model.baseline},
                           {"error_rate", m.error_rate},
                           {"mean_residual", m.mean_residual},
                           {"runtime_ms", m.runtime_ms}});
  }
  std::cout << csv.str();
  if (!a.out_dir.empty()) {
    ensure_dir(a.out_dir);
    const fs::path dir(a.out_dir);
    write_text_file(dir / "metrics.csv", csv.str());
    manifest["data"] = a.data.to_json();
    manifest["inputs"] = inputs;
    manifest["predict"] = json{{"mode", a.mode}, {"robust", a.robust}, {"e_budget", a.e_budget}, {"t_test", a.t_test}};
    manifest["results"] = results;
    finish_manifest(manifest, dir, {"metrics.csv"});
  }
  return 0;
}

// ------------------------------------------------------------------ sweep

struct SweepArgs {
  DataArgs data;
  DataArgs test;
  TrainFlags flags;
  std::string k_grid;
  std::string t_grid;
  std::string losses;
  double test_fraction = 0.0;
  std::string mode = "fast";
  std::string dataset_name;
  std::string out_dir;
  int threads = 1;
};

int cmd_sweep(const SweepArgs& a) {
  json manifest = manifest_head("sweep");
  ddl::KeyValues extras;
  const ddl::TrainConfig base = resolve_config(a.flags, &extras);
  auto pick = [&](const std::string& flag, const std::string& key, const std::string& fallback) {
    if (!flag.empty()) return flag;
    if (extras.count(key)) return extras[key];
    return fallback;
  };
  const auto Ks = parse_list<long long>(pick(a.k_grid, "k_grid", std::to_string(base.K)), "k_grid", to_ll);
  const auto Ts = parse_list<long long>(pick(a.t_grid, "t_grid", std::to_string(base.T)), "t_grid", to_ll);
  const auto losses = parse_list<std::string>(pick(a.losses, "losses", std::string(ddl::loss_name(base.loss))),
                                              "losses", to_str);
  double test_fraction = a.test_fraction;
  if (test_fraction == 0.0 && extras.count("test_fraction")) {
    test_fraction = ddl::detail::to_double("test_fraction", extras["test_fraction"]);
  }
  const ddl::PredictOptions opts = predict_options(a.mode, false, 0, 0);

  const ddl::Dataset all = load_dataset(a.data);
  ddl::Dataset train_set, test_set;
  json inputs = a.data.input_records();
  if (!a.test.data.empty()) {
    if (test_fraction != 0.0) throw ddl::ConfigError("use either --test-data or --test-fraction, not both");
    DataArgs t = a.test;
    t.format = t.format.empty() ? a.data.format : t.format;
    t.label_column = a.data.label_column;
    t.delimiter = a.data.delimiter;
    t.center = a.data.center;
    train_set = all;
    test_set = load_dataset(t);
    for (const auto& r : t.input_records()) inputs.push_back(r);
  } else {
    if (test_fraction == 0.0) test_fraction = 0.3;
    const ddl::Split s = ddl::split(all, test_fraction, base.seed, /*stratified=*/true);
    train_set = s.train;
    test_set = s.test;
  }
  if (test_set.dim() != train_set.dim()) throw ddl::DimensionError("train and test samples differ in dimension");

  std::ostringstream csv;
  const std::string dataset = a.dataset_name.empty() ? fs::path(a.data.data).stem().string() : a.dataset_name;
  csv << "dataset,K,T,loss,method,error_rate,train_ms,eval_ms\n";
  struct Best {
    double err = 2.0;
    long long K = 0, T = 0;
  };
  std::map<std::pair<std::string, std::string>, Best> best;
  int cells = 0, ddl_wins = 0;
  for (const auto& loss : losses) {
    for (long long K : Ks) {
      for (long long T : Ts) {
        ddl::TrainConfig cfg = base;
        cfg.K = K;
        cfg.T = static_cast<int>(T);
        ddl::apply_config_key(cfg, "loss", loss);
        cfg.validate();
        double err[2] = {0, 0};
        for (int method = 0; method < 2; ++method) {
          const bool baseline = method == 0;
          const auto t0 = std::chrono::steady_clock::now();
          const ddl::DdlModel model = fit(train_set, cfg, baseline, a.threads);
          const double train_ms =
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
          const ddl::Metrics m = ddl::evaluate(model, test_set.samples, test_set.labels, opts, a.threads);
          const std::string method_name = baseline ? "baseline" : "ddl";
          const std::string loss_name(ddl::loss_name(cfg.loss));
          csv << dataset << ',' << K << ',' << T << ',' << loss_name << ',' << method_name << ',' << fmt(m.error_rate) << ','
              << fmt(train_ms) << ',' << fmt(m.runtime_ms) << '\n';
          Best& b = best[{loss_name, method_name}];
          if (m.error_rate < b.err) b = Best{m.error_rate, K, T};
          err[method] = m.error_rate;
          std::fprintf(stderr, "K=%lld T=%lld loss=%s %s: error %.4f\n", K, T, loss_name.c_str(),
                       method_name.c_str(), m.error_rate);
        }
        ++cells;
        ddl_wins += err[1] <= err[0];
      }
    }
  }

  std::ostringstream summary;
  summary << "loss,method,K,T,error_rate\n";
  for (const auto& [key, b] : best) {
    summary << key.first << ',' << key.second << ',' << b.K << ',' << b.T << ',' << fmt(b.err) << '\n';
  }
  std::cout << summary.str();
  std::printf("ddl <= baseline in %d of %d cells\n", ddl_wins, cells);

  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  write_text_file(dir / "sweep.csv", csv.str());
  write_text_file(dir / "sweep_best.csv", summary.str());
  manifest["seed"] = base.seed;
  manifest["data"] = a.data.to_json();
  manifest["inputs"] = inputs;
  manifest["config_text"] = ddl::config_to_text(base);
  manifest["grid"] = json{{"K", Ks}, {"T", Ts}, {"losses", losses}};
  manifest["test_fraction"] = a.test.data.empty() ? test_fraction : 0.0;
  manifest["mode"] = a.mode;
  manifest["csv_schemas"] = json{{"sweep.csv", "dataset,K,T,loss,method,error_rate,train_ms,eval_ms"},
                                 {"sweep_best.csv", "loss,method,K,T,error_rate"}};
  manifest["ddl_not_worse_cells"] = ddl_wins;
  manifest["cells"] = cells;
  finish_manifest(manifest, dir, {"sweep.csv", "sweep_best.csv"});
  return 0;
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  ddl::SyntheticSpec spec;
  std::string out_dir;
};

int cmd_synth(const SynthArgs& a) {
  json manifest = manifest_head("synth");
  const ddl::SyntheticBundle b = ddl::generate_synthetic(a.spec);
  ensure_dir(a.out_dir);
  const fs::path dir(a.out_dir);
  ddl::write_delimited(b.data, (dir / "data.csv").string());

  const auto& D = b.dictionary.atoms();
  std::ostringstream dict;
  for (ddl::Index k = 0; k < D.cols(); ++k) dict << (k ? "," : "") << "atom" << k;
  dict << '\n';
  for (ddl::Index r = 0; r < D.rows(); ++r) {
    for (ddl::Index k = 0; k < D.cols(); ++k) dict << (k ? "," : "") << fmt(D(r, k));
    dict << '\n';
  }
  write_text_file(dir / "dictionary.csv", dict.str());

  std::ostringstream codes;
  codes << "sample,atom,value\n";
  for (std::size_t i = 0; i < b.codes.size(); ++i) {
    for (std::size_t s = 0; s < b.codes[i].nnz(); ++s) {
      codes << i << ',' << b.codes[i].indices[s] << ',' << fmt(b.codes[i].values[s]) << '\n';
    }
  }
  write_text_file(dir / "codes.csv", codes.str());

  std::ostringstream cls;
  cls << "row";
  for (int j = 0; j < a.spec.C; ++j) cls << ",class" << j;
  cls << '\n';
  for (ddl::Index k = 0; k < b.classifiers.weights.rows(); ++k) {
    cls << "w" << k;
    for (int j = 0; j < a.spec.C; ++j) cls << ',' << fmt(b.classifiers.weights(k, j));
    cls << '\n';
  }
  cls << "bias";
  for (int j = 0; j < a.spec.C; ++j) cls << ',' << fmt(b.classifiers.biases[j]);
  cls << '\n';
  write_text_file(dir / "classifiers.csv", cls.str());

  std::ostringstream labels;
  labels << "sample,clean_label,label\n";
  int flips = 0;
  for (std::size_t i = 0; i < b.clean_labels.size(); ++i) {
    labels << i << ',' << b.clean_labels[i] << ',' << b.data.labels[i] << '\n';
    flips += b.clean_labels[i] != b.data.labels[i];
  }
  write_text_file(dir / "labels.csv", labels.str());

  const auto& s = a.spec;
  manifest["seed"] = s.seed;
  manifest["spec"] = json{{"d", s.d},         {"k_true", s.K_true},         {"classes", s.C},
                          {"n", s.N},         {"t_true", s.T_true},         {"noise_std", s.noise_std},
                          {"label_noise", s.label_noise_rate}, {"margin", s.margin}};
  manifest["label_flips"] = flips;
  manifest["csv_schemas"] = json{{"data.csv", "label,f0,...,f{d-1}"},
                                 {"dictionary.csv", "atom0,...,atom{K-1} (one row per dimension)"},
                                 {"codes.csv", "sample,atom,value"},
                                 {"classifiers.csv", "row,class0,...,class{C-1} (rows w0..w{K-1}, bias)"},
                                 {"labels.csv", "sample,clean_label,label"}};
  finish_manifest(manifest, dir, {"data.csv", "dictionary.csv", "codes.csv", "classifiers.csv", "labels.csv"});
  std::printf("wrote %lld samples (d=%lld, C=%d, %d label flips) to %s\n", static_cast<long long>(s.N),
              static_cast<long long>(s.d), s.C, flips, a.out_dir.c_str());
  return 0;
}

int report(const char* kind, const std::exception& e, int code) {
  std::fprintf(stderr, "error (%s): %s\n", kind, e.what());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discriminative dictionary learning: train, evaluate, sweep, generate data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a DDL (or baseline) model");
  add_data_options(train, ta.data, false);
  add_train_flags(train, ta.flags, true);
  train->add_flag("--baseline", ta.baseline, "Decoupled K-SVD + classifier pipeline instead of DDL");
  train->add_option("--out-dir", ta.out_dir, "Output directory")->required();
  train->add_option("--manifest", ta.manifest, "Rerun exactly from a manifest.json written by train");
  train->add_option("--threads", ta.threads, "Worker threads (results do not depend on it)")->check(CLI::PositiveNumber);

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Evaluate models on a labeled test set");
  eval->add_option("--model", ea.models, "Model file (repeatable: one CSV row per model)")->required();
  add_data_options(eval, ea.data);
  eval->add_option("--mode", ea.mode, "fast or full")->check(CLI::IsMember({"fast", "full"}))->capture_default_str();
  eval->add_flag("--robust", ea.robust, "Encode over [D | I] to absorb sparse gross errors");
  eval->add_option("--e-budget", ea.e_budget, "Extra identity atoms allowed in robust mode");
  eval->add_option("--t-test", ea.t_test, "Test-time sparsity (default: the model's T)");
  eval->add_option("--dataset-name", ea.dataset_name, "Value of the dataset column (default: data file stem)");
  eval->add_option("--out-dir", ea.out_dir, "Write metrics.csv and manifest.json here");
  eval->add_option("--threads", ea.threads, "Worker threads")->check(CLI::PositiveNumber);

  SweepArgs sa;
  auto* sweep = app.add_subcommand("sweep", "Grid over K, T and loss for DDL and the baseline");
  add_data_options(sweep, sa.data);
  add_train_flags(sweep, sa.flags, false);
  sweep->add_option("--test-data", sa.test.data, "Separate test samples (same format as --data)");
  sweep->add_option("--test-labels", sa.test.labels, "Separate IDX test labels");
  sweep->add_option("--test-fraction", sa.test_fraction, "Stratified hold-out fraction (default 0.3)");
  sweep->add_option("--k-grid", sa.k_grid, "Comma-separated K values");
  sweep->add_option("--t-grid", sa.t_grid, "Comma-separated T values");
  sweep->add_option("--losses", sa.losses, "Comma-separated losses");
  sweep->add_option("--mode", sa.mode, "fast or full")->check(CLI::IsMember({"fast", "full"}));
  sweep->add_option("--dataset-name", sa.dataset_name, "Value of the dataset column (default: data file stem)");
  sweep->add_option("--out-dir", sa.out_dir, "Output directory")->required();
  sweep->add_option("--threads", sa.threads, "Worker threads")->check(CLI::PositiveNumber);

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Write a planted synthetic dataset and its ground truth");
  synth->add_option("--d", ya.spec.d, "Signal dimension")->capture_default_str();
  synth->add_option("--k-true", ya.spec.K_true, "Planted atoms")->capture_default_str();
  synth->add_option("--classes", ya.spec.C, "Classes")->capture_default_str();
  synth->add_option("--n", ya.spec.N, "Samples")->capture_default_str();
  synth->add_option("--t-true", ya.spec.T_true, "Planted sparsity")->capture_default_str();
  synth->add_option("--noise", ya.spec.noise_std, "Gaussian noise std")->capture_default_str();
  synth->add_option("--label-noise", ya.spec.label_noise_rate, "Label flip probability")->capture_default_str();
  synth->add_option("--margin", ya.spec.margin, "Minimum top-two score gap")->capture_default_str();
  synth->add_option("--seed", ya.spec.seed, "Seed")->capture_default_str();
  synth->add_option("--out-dir", ya.out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (train->parsed()) return cmd_train(ta, *train);
    if (eval->parsed()) return cmd_eval(ea);
    if (sweep->parsed()) return cmd_sweep(sa);
    if (synth->parsed()) return cmd_synth(ya);
  } catch (const ddl::ConfigError& e) {
    return report("config", e, 2);
  } catch (const ddl::DimensionError& e) {
    return report("dimension", e, 3);
  } catch (const ddl::DataError& e) {
    return report("data", e, 3);
  } catch (const ddl::NumericError& e) {
    return report("numeric", e, 4);
  } catch (const std::invalid_argument& e) {
    return report("config", e, 2);
  } catch (const std::exception& e) {
    return report("internal", e, 1);
  }
  return 1;
}
