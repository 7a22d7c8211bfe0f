#include "gabor_adapt/cli.hpp"

#include "gabor_adapt/errors.hpp"
#include "gabor_adapt/fitstats.hpp"
#include "gabor_adapt/genmodel.hpp"
#include "gabor_adapt/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

namespace gabor_adapt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long n = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(n);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Member>
Field dbl(Member m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { std::invoke(m, c) = to_double(k, v); },
          [m](const RunConfig& c) { return fmt_double(std::invoke(m, const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field integer(Member m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { std::invoke(m, c) = to_int(k, v); },
          [m](const RunConfig& c) { return std::to_string(std::invoke(m, const_cast<RunConfig&>(c))); }};
}

template <typename Member>
Field boolean(Member m) {
  return {[m](RunConfig& c, const std::string& k, const std::string& v) { std::invoke(m, c) = to_bool(k, v); },
          [m](const RunConfig& c) { return std::string(std::invoke(m, const_cast<RunConfig&>(c)) ? "true" : "false"); }};
}

const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"patch_size", integer([](RunConfig& c) -> int& { return c.pipeline.patch_size; })},
      {"batch_size", integer([](RunConfig& c) -> int& { return c.pipeline.batch_size; })},
      {"whitening_cutoff", dbl([](RunConfig& c) -> double& { return c.pipeline.whitening_cutoff; })},
      {"standardize", boolean([](RunConfig& c) -> bool& { return c.pipeline.standardize; })},
      {"train_patches", integer([](RunConfig& c) -> int& { return c.train_patches; })},
      {"test_patches", integer([](RunConfig& c) -> int& { return c.test_patches; })},
      {"scale", dbl([](RunConfig& c) -> double& { return c.scale; })},
      {"lambda_sparse", dbl([](RunConfig& c) -> double& { return c.inference.lambda_sparse; })},
      {"cg_tol", dbl([](RunConfig& c) -> double& { return c.inference.cg_tol; })},
      {"cg_max_iters", integer([](RunConfig& c) -> int& { return c.inference.cg_max_iters; })},
      {"eta_phi", dbl([](RunConfig& c) -> double& { return c.learning.eta.phi; })},
      {"eta_phase", dbl([](RunConfig& c) -> double& { return c.learning.eta.phase; })},
      {"eta_sigma_x", dbl([](RunConfig& c) -> double& { return c.learning.eta.sigma_x; })},
      {"eta_sigma_y", dbl([](RunConfig& c) -> double& { return c.learning.eta.sigma_y; })},
      {"eta_k", dbl([](RunConfig& c) -> double& { return c.learning.eta.k; })},
      {"alpha", dbl([](RunConfig& c) -> double& { return c.learning.alpha; })},
      {"sigma_goal_sq", dbl([](RunConfig& c) -> double& { return c.learning.sigma_goal_sq; })},
      {"iterations", integer([](RunConfig& c) -> int& { return c.learning.iterations; })},
      {"variance_rescale", boolean([](RunConfig& c) -> bool& { return c.learning.variance_rescale; })},
      {"sigma_min", dbl([](RunConfig& c) -> double& { return c.learning.clamps.sigma_min; })},
      {"sigma_max", dbl([](RunConfig& c) -> double& { return c.learning.clamps.sigma_max; })},
      {"min_wavelength_px", dbl([](RunConfig& c) -> double& { return c.learning.clamps.min_wavelength_px; })},
      {"snapshot_every", integer([](RunConfig& c) -> int& { return c.learning.snapshot_every; })},
      {"swap_rates", boolean([](RunConfig& c) -> bool& { return c.swap_rates; })},
      {"nonparam_eta", dbl([](RunConfig& c) -> double& { return c.nonparam.eta; })},
      {"nonparam_alpha", dbl([](RunConfig& c) -> double& { return c.nonparam.alpha; })},
      {"nonparam_sigma_goal_sq", dbl([](RunConfig& c) -> double& { return c.nonparam.sigma_goal_sq; })},
      {"nonparam_iterations", integer([](RunConfig& c) -> int& { return c.nonparam.iterations; })},
      {"nonparam_gain_adapt", boolean([](RunConfig& c) -> bool& { return c.nonparam.gain_adapt; })},
      {"sweep_lambda_start", dbl([](RunConfig& c) -> double& { return c.sweep.lambda_start; })},
      {"sweep_lambda_factor", dbl([](RunConfig& c) -> double& { return c.sweep.lambda_factor; })},
      {"sweep_ratio_min", dbl([](RunConfig& c) -> double& { return c.sweep.ratio_min; })},
      {"sweep_ratio_max", dbl([](RunConfig& c) -> double& { return c.sweep.ratio_max; })},
      {"sweep_max_points", integer([](RunConfig& c) -> int& { return c.sweep.max_points; })},
      {"histogram_bins", integer([](RunConfig& c) -> int& { return c.histogram_bins; })},
  };
  return table;
}

std::string utc_timestamp() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

const std::string& single(const Invocation& inv, const std::string& key) {
  auto it = inv.args.find(key);
  if (it == inv.args.end() || it->second.size() != 1) {
    throw ArgumentError(inv.command + ": exactly one '" + key + "' argument is required");
  }
  return it->second.front();
}

const std::vector<std::string>* optional_list(const Invocation& inv, const std::string& key) {
  auto it = inv.args.find(key);
  return it == inv.args.end() || it->second.empty() ? nullptr : &it->second;
}

/// Output recorder; paths are relative to the output directory.
class Outputs {
 public:
  Outputs(const Invocation& inv) : inv_(inv) {
    if (inv.out.empty()) throw ArgumentError(inv.command + ": an output directory is required");
    fs::create_directories(inv.out);
  }
  fs::path path(const std::string& rel) const {
    fs::path p = inv_.out / rel;
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    return p;
  }
  void add(const std::string& rel) { files_.push_back(rel); }
  std::vector<std::string> inputs;

  RunManifest finish() const {
    RunManifest m;
    m.command = inv_.command;
    m.seed = inv_.seed;
    m.config = inv_.config.entries();
    m.args = inv_.args;
    m.inputs = inputs;
    for (const auto& f : files_) m.outputs.push_back({f, file_digest(inv_.out / f)});
    m.timestamp = utc_timestamp();
    m.version = kArtifactVersion;
    write_manifest(inv_.out / kManifestName, m);
    return m;
  }

 private:
  const Invocation& inv_;
  std::vector<std::string> files_;
};

PatchBatch load_cache(const std::string& path, const RunConfig& cfg) {
  PatchBatch b = read_patch_cache(path);
  if (b.patch_size != cfg.pipeline.patch_size) {
    throw ConfigError("patch cache " + path + " has patch size " + std::to_string(b.patch_size) +
                      ", config expects " + std::to_string(cfg.pipeline.patch_size));
  }
  return b;
}

GaborBasis load_basis(const std::string& path, const RunConfig& cfg) {
  GaborBasis b = read_basis_csv(path);
  if (b.patch_size != cfg.pipeline.patch_size) {
    throw ConfigError("basis " + path + " has patch size " + std::to_string(b.patch_size) + ", config expects " +
                      std::to_string(cfg.pipeline.patch_size));
  }
  return b;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm" || ext == ".pnm" || ext == ".png";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

}  // namespace

RunConfig::RunConfig() {
  sweep.inference = inference;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [name, f] : fields()) {
    if (name == key) {
      f.set(*this, key, trim(value));
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [name, f] : fields()) out.emplace_back(name, f.get(*this));
  return out;
}

void RunConfig::validate() const {
  pipeline.validate();
  inference.validate();
  learning.validate();
  nonparam.validate();
  if (train_patches < 1) throw ConfigError("train_patches must be >= 1");
  if (test_patches < 1) throw ConfigError("test_patches must be >= 1");
  if (!(scale > 0.0)) throw ConfigError("scale must be > 0");
  if (!(sweep.lambda_start > 0.0) || !(sweep.lambda_factor > 1.0)) {
    throw ConfigError("sweep_lambda_start must be > 0 and sweep_lambda_factor > 1");
  }
  if (sweep.max_points < 1) throw ConfigError("sweep_max_points must be >= 1");
  if (histogram_bins < 1) throw ConfigError("histogram_bins must be >= 1");
}

RunConfig load_config(const fs::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return base;
}

void write_config(const fs::path& path, const RunConfig& cfg) {
  std::ostringstream s;
  for (const auto& [k, v] : cfg.entries()) s << k << " = " << v << "\n";
  write_text(path, s.str());
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  char out[17];
  std::snprintf(out, sizeof out, "%016llx", static_cast<unsigned long long>(h));
  return out;
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  json j;
  j["command"] = m.command;
  j["seed"] = m.seed;
  json cfg = json::array();
  for (const auto& [k, v] : m.config) cfg.push_back({k, v});
  j["config"] = cfg;
  j["args"] = m.args;
  j["inputs"] = m.inputs;
  json outs = json::array();
  for (const auto& o : m.outputs) outs.push_back({{"path", o.path}, {"digest", o.digest}});
  j["outputs"] = outs;
  j["timestamp"] = m.timestamp;
  j["version"] = m.version;
  write_text(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  RunManifest m;
  try {
    json j = json::parse(in);
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& e : j.at("config")) m.config.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
    m.args = j.at("args").get<std::map<std::string, std::vector<std::string>>>();
    m.inputs = j.at("inputs").get<std::vector<std::string>>();
    for (const auto& o : j.at("outputs")) m.outputs.push_back({o.at("path"), o.at("digest")});
    m.timestamp = j.value("timestamp", "");
    m.version = j.value("version", "");
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

RunManifest cmd_preprocess(const Invocation& inv) {
  const RunConfig& cfg = inv.config;
  cfg.validate();
  fs::path corpus = single(inv, "corpus");
  if (!fs::is_directory(corpus)) throw IoError("corpus directory not found: " + corpus.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(corpus)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IoError("corpus " + corpus.string() + " contains 0 readable inputs");

  Outputs out(inv);
  std::vector<RawImage> images;
  std::ostringstream used, skipped;
  for (const auto& f : files) {
    out.inputs.push_back(f.string());
    try {
      images.push_back(whiten(load_grayscale(f), cfg.pipeline));
      used << images.size() - 1 << "," << f.filename().string() << "\n";
    } catch (const std::exception& e) {
      skipped << f.filename().string() << ": " << e.what() << "\n";
      std::clog << "warning: skipping " << f.string() << ": " << e.what() << "\n";
    }
  }
  write_text(out.path("images.csv"), "index,file\n" + used.str());
  out.add("images.csv");
  write_text(out.path("skipped.txt"), skipped.str());
  out.add("skipped.txt");
  if (images.empty()) {
    throw IoError("corpus " + corpus.string() + ": all " + std::to_string(files.size()) + " inputs were skipped");
  }

  PipelineConfig train = cfg.pipeline;
  train.batch_size = cfg.train_patches;
  train.rng_seed = derive_seed(inv.seed, 0);
  write_patch_cache(out.path("patches.bin"), sample_patches(images, train));
  out.add("patches.bin");

  PipelineConfig test = cfg.pipeline;
  test.batch_size = cfg.test_patches;
  test.rng_seed = derive_seed(inv.seed, 1);
  write_patch_cache(out.path("test_patches.bin"), sample_patches(images, test));
  out.add("test_patches.bin");
  return out.finish();
}

RunManifest cmd_learn(const Invocation& inv) {
  const RunConfig& cfg = inv.config;
  cfg.validate();
  const std::string& patches = single(inv, "patches");
  PatchBatch pool = load_cache(patches, cfg);
  Outputs out(inv);
  out.inputs.push_back(patches);

  GaborBasis init;
  if (const auto* init_arg = optional_list(inv, "init")) {
    init = load_basis(init_arg->front(), cfg);
    out.inputs.push_back(init_arg->front());
  } else {
    init = uniform_init(cfg.pipeline.patch_size, cfg.scale, derive_seed(inv.seed, 2));
  }
  LearningConfig lcfg = cfg.learning;
  if (cfg.swap_rates) lcfg.eta = lcfg.eta.swapped_sigma();

  LearningResult r = em_learn(pool_batches(pool, cfg.pipeline.batch_size, derive_seed(inv.seed, 3)), cfg.inference,
                              lcfg, init);

  write_basis_csv(out.path("init.csv"), init);
  out.add("init.csv");
  write_basis_csv(out.path("basis.csv"), r.basis);
  out.add("basis.csv");
  write_mosaic_pgm(out.path("mosaic.pgm"), render(r.basis), r.basis.patch_size);
  out.add("mosaic.pgm");
  std::ostringstream trace;
  trace << "iteration,mean_energy,mean_coeff_variance\n";
  for (const auto& rec : r.trace.records) {
    trace << rec.iteration << "," << fmt_double(rec.mean_energy) << "," << fmt_double(rec.mean_coeff_variance) << "\n";
  }
  write_text(out.path("trace.csv"), trace.str());
  out.add("trace.csv");
  for (const auto& [it, b] : r.trace.snapshots) {
    char name[64];
    std::snprintf(name, sizeof name, "checkpoints/basis_%05d.csv", it);
    write_basis_csv(out.path(name), b);
    out.add(name);
  }
  return out.finish();
}

RunManifest cmd_bench(const Invocation& inv) {
  const RunConfig& cfg = inv.config;
  cfg.validate();
  auto bases_it = inv.args.find("basis");
  if (bases_it == inv.args.end() || bases_it->second.empty()) throw ArgumentError("bench: at least one basis is required");
  const std::string& patches = single(inv, "patches");
  Eigen::MatrixXd test = load_cache(patches, cfg).columns();

  std::vector<std::pair<std::string, GaborBasis>> bases;
  for (const auto& p : bases_it->second) {
    if (!fs::exists(p)) throw IoError("basis file not found: " + p);
    bases.emplace_back(fs::path(p).stem().string(), load_basis(p, cfg));
  }
  Outputs out(inv);
  out.inputs.push_back(patches);
  for (const auto& p : bases_it->second) out.inputs.push_back(p);

  SweepConfig sweep = cfg.sweep;
  sweep.inference = cfg.inference;
  std::vector<double> lambdas;
  if (const auto* l = optional_list(inv, "lambdas")) {
    for (const auto& s : *l) lambdas.push_back(to_double("lambdas", s));
  }
  std::vector<BenchCurve> curves;
  for (const auto& [id, b] : bases) {
    FieldMatrix g = render(b);
    curves.push_back(lambdas.empty() ? sweep_lambda(g, test, sweep, id)
                                     : sweep_lambda(g, test, cfg.inference, lambdas, id));
  }
  write_bench_csv(out.path("bench.csv"), curves);
  out.add("bench.csv");
  write_matched_csv(out.path("matched.csv"), curves, {0.5, 0.6, 0.7, 0.8, 0.9});
  out.add("matched.csv");
  return out.finish();
}

RunManifest cmd_generate(const Invocation& inv) {
  const RunConfig& cfg = inv.config;
  cfg.validate();
  const std::string& variant = single(inv, "variant");
  GaborBasis basis;
  std::vector<std::string> inputs;
  if (variant == "uniform") {
    basis = uniform_init(cfg.pipeline.patch_size, cfg.scale, inv.seed);
  } else {
    ModelVariant v = parse_model_variant(variant);
    GenModelSpec spec = GenModelSpec::defaults(v);
    if (const auto* fit = optional_list(inv, "fit")) {
      spec = GenModelSpec::from_fit(read_fit_report(fit->front()), v);
      inputs.push_back(fit->front());
    }
    spec.validate();
    basis = generate_basis(spec, cfg.pipeline.patch_size, inv.seed, cfg.scale);
  }
  Outputs out(inv);
  out.inputs = inputs;
  write_basis_csv(out.path("basis.csv"), basis);
  out.add("basis.csv");
  write_mosaic_pgm(out.path("mosaic.pgm"), render(basis), basis.patch_size);
  out.add("mosaic.pgm");
  return out.finish();
}

RunManifest cmd_fit(const Invocation& inv) {
  const RunConfig& cfg = inv.config;
  cfg.validate();
  const std::string& path = single(inv, "basis");
  GaborBasis basis = read_basis_csv(path);
  FitReport report = fit_basis(basis);
  Outputs out(inv);
  out.inputs.push_back(path);
  write_fit_report(out.path("fit_report.json"), report);
  out.add("fit_report.json");
  std::vector<GaborParams> kept = filter_for_stats(basis);
  write_histograms_csv(out.path("histograms.csv"), export_histograms(kept, cfg.histogram_bins));
  out.add("histograms.csv");
  write_scatter_csv(out.path("scatter.csv"), kept);
  out.add("scatter.csv");
  return out.finish();
}

RunManifest cmd_probe(const Invocation& inv) {
  const RunConfig& cfg = inv.config;
  cfg.validate();
  const std::string& basis_path = single(inv, "basis");
  const std::string& patches = single(inv, "patches");
  GaborBasis basis = load_basis(basis_path, cfg);
  PatchBatch pool = load_cache(patches, cfg);
  Outputs out(inv);
  out.inputs = {basis_path, patches};

  ProbeResult r = stability_probe(basis, pool_batches(pool, cfg.pipeline.batch_size, derive_seed(inv.seed, 4)),
                                  cfg.inference, cfg.nonparam);
  json j;
  j["drift"] = r.drift;
  j["iterations"] = cfg.nonparam.iterations;
  j["atoms"] = basis.size();
  write_text(out.path("probe.json"), j.dump(2) + "\n");
  out.add("probe.json");
  write_mosaic_pgm(out.path("before.pgm"), r.before, basis.patch_size);
  out.add("before.pgm");
  write_mosaic_pgm(out.path("after.pgm"), r.after, basis.patch_size);
  out.add("after.pgm");
  return out.finish();
}

RunManifest run(const Invocation& inv) {
  if (inv.command == "preprocess") return cmd_preprocess(inv);
  if (inv.command == "learn") return cmd_learn(inv);
  if (inv.command == "bench") return cmd_bench(inv);
  if (inv.command == "generate") return cmd_generate(inv);
  if (inv.command == "fit") return cmd_fit(inv);
  if (inv.command == "probe") return cmd_probe(inv);
  throw ArgumentError("unknown command '" + inv.command + "'");
}

ReplayResult replay(const fs::path& manifest_path, const fs::path& out) {
  ReplayResult res;
  res.original = read_manifest(manifest_path);
  Invocation inv;
  inv.command = res.original.command;
  inv.seed = res.original.seed;
  for (const auto& [k, v] : res.original.config) inv.config.set(k, v);
  inv.args = res.original.args;
  inv.out = out;
  res.replayed = run(inv);
  for (const auto& o : res.original.outputs) {
    auto it = std::find_if(res.replayed.outputs.begin(), res.replayed.outputs.end(),
                           [&](const OutputFile& r) { return r.path == o.path; });
    if (it == res.replayed.outputs.end() || it->digest != o.digest) res.mismatched.push_back(o.path);
  }
  for (const auto& r : res.replayed.outputs) {
    bool known = std::any_of(res.original.outputs.begin(), res.original.outputs.end(),
                             [&](const OutputFile& o) { return o.path == r.path; });
    if (!known) res.mismatched.push_back(r.path);
  }
  return res;
}

}  // namespace gabor_adapt::cli
