#include "gabor_adapt/fitstats.hpp"

#include "gabor_adapt/errors.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>

namespace gabor_adapt {

using std::numbers::pi;

std::vector<GaborParams> filter_for_stats(const GaborBasis& basis) {
  std::vector<GaborParams> out;
  std::copy_if(basis.atoms.begin(), basis.atoms.end(), std::back_inserter(out),
               [](const GaborParams& g) { return g.sigma_x <= 1.0; });
  if (out.empty() && !basis.atoms.empty()) {
    std::clog << "warning: no atoms with sigma_x <= 1 in a basis of " << basis.atoms.size() << "\n";
  }
  return out;
}

namespace {

void require_positive(std::span<const double> samples, const char* what) {
  if (samples.size() < 2) throw ArgumentError(std::string(what) + " needs at least two samples");
  for (double x : samples) {
    if (!(x > 0.0) || !std::isfinite(x)) throw DomainError(std::string(what) + " needs finite positive samples");
  }
}

double mean(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace

MarginalFit fit_lognormal(std::span<const double> samples) {
  require_positive(samples, "fit_lognormal");
  std::vector<double> logs(samples.size());
  std::transform(samples.begin(), samples.end(), logs.begin(), [](double x) { return std::log(x); });
  const double mu = mean(logs);
  double ss = 0.0;
  for (double l : logs) ss += (l - mu) * (l - mu);
  const double sigma = std::sqrt(ss / static_cast<double>(logs.size()));
  return {LogNormalDist{mu, sigma}, samples.size(), !(sigma > 0.0)};
}

MarginalFit fit_pareto(std::span<const double> samples) {
  require_positive(samples, "fit_pareto");
  const double beta = *std::min_element(samples.begin(), samples.end());
  double s = 0.0;
  for (double x : samples) s += std::log(x / beta);
  if (!(s > 0.0)) return {ParetoDist{std::numeric_limits<double>::infinity(), beta}, samples.size(), true};
  return {ParetoDist{static_cast<double>(samples.size()) / s, beta}, samples.size(), false};
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("pearson needs two equal-length samples");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DomainError("correlation undefined for a zero-variance variable");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ArgumentError("fit_line needs two equal-length samples");
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw DomainError("line fit undefined for a constant regressor");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  if (x.size() > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - (fit.slope * x[i] + fit.intercept);
      rss += e * e;
    }
    fit.slope_stderr = std::sqrt(rss / static_cast<double>(x.size() - 2) / sxx);
  }
  return fit;
}

CorrelationReport correlations(const std::vector<GaborParams>& params) {
  if (params.size() < 3) throw ArgumentError("correlations need at least three atoms");
  std::vector<double> sx, sy, lam;
  for (const auto& g : params) {
    sx.push_back(g.sigma_x);
    sy.push_back(g.sigma_y);
    lam.push_back(g.wavelength());
  }
  CorrelationReport r;
  r.n = params.size();
  r.rho1 = pearson(sx, sy);
  r.rho2 = pearson(sx, lam);
  r.rho3 = pearson(sy, lam);
  r.sigma_x_on_wavelength = fit_line(lam, sx);
  r.sigma_y_on_wavelength = fit_line(lam, sy);
  Eigen::Matrix3d c;
  c << 1.0, r.rho1, r.rho2, r.rho1, 1.0, r.rho3, r.rho2, r.rho3, 1.0;
  r.positive_semidefinite = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(c).eigenvalues().minCoeff() >= -1e-12;
  return r;
}

std::vector<double> Histogram::density() const {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  std::vector<double> out(counts.size(), 0.0);
  if (total == 0) return out;
  const double scale = 1.0 / (static_cast<double>(total) * bin_width());
  for (std::size_t i = 0; i < counts.size(); ++i) out[i] = static_cast<double>(counts[i]) * scale;
  return out;
}

namespace {

Histogram bin_values(std::string name, const std::vector<double>& v, double lo, double hi, int bins) {
  Histogram h{std::move(name), lo, hi, std::vector<std::size_t>(bins, 0)};
  for (double x : v) {
    auto b = static_cast<long>(std::floor((x - lo) / (hi - lo) * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    ++h.counts[b];
  }
  return h;
}

Histogram bin_data_range(std::string name, const std::vector<double>& v, int bins) {
  double lo = 0.0, hi = 1.0;
  if (!v.empty()) {
    lo = *std::min_element(v.begin(), v.end());
    hi = *std::max_element(v.begin(), v.end());
    if (hi <= lo) {
      const double pad = lo == 0.0 ? 0.5 : 0.5 * std::abs(lo);
      lo -= pad;
      hi += pad;
    }
  }
  return bin_values(std::move(name), v, lo, hi, bins);
}

}  // namespace

std::vector<Histogram> export_histograms(const std::vector<GaborParams>& params, int bins) {
  if (bins < 1) throw ArgumentError("bins must be >= 1");
  std::vector<double> phi, phase, sx, sy, lam, aspect;
  for (const auto& raw : params) {
    const GaborParams g = canonicalize(raw);
    phi.push_back(g.phi);
    phase.push_back(g.phase);
    sx.push_back(g.sigma_x);
    sy.push_back(g.sigma_y);
    lam.push_back(g.wavelength());
    aspect.push_back(g.sigma_y / g.sigma_x);
  }
  return {bin_values("phi", phi, 0.0, pi, bins),
          bin_values("phase", phase, -pi, pi, bins),
          bin_data_range("sigma_x", sx, bins),
          bin_data_range("sigma_y", sy, bins),
          bin_data_range("wavelength", lam, bins),
          bin_data_range("aspect", aspect, bins)};
}

void write_histograms_csv(const std::filesystem::path& path, const std::vector<Histogram>& hists) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "parameter,bin,lo,hi,count,density\n";
  char buf[256];
  for (const auto& h : hists) {
    const auto dens = h.density();
    for (std::size_t i = 0; i < h.counts.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%.17g,%zu,%.17g\n", h.name.c_str(), i,
                    h.lo + static_cast<double>(i) * h.bin_width(), h.lo + static_cast<double>(i + 1) * h.bin_width(),
                    h.counts[i], dens[i]);
      out << buf;
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_scatter_csv(const std::filesystem::path& path, const std::vector<GaborParams>& params) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "sigma_x,sigma_y,wavelength,aspect,n_x,n_y,phi,phase\n";
  char buf[512];
  for (const auto& raw : params) {
    const GaborParams g = canonicalize(raw);
    const ShapeStats s = shape_stats(g);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", g.sigma_x, g.sigma_y,
                  g.wavelength(), s.aspect, s.n_x, s.n_y, g.phi, g.phase);
    out << buf;
  }
  if (!out) throw IoError("write failed: " + path.string());
}

FitReport fit_basis(const GaborBasis& basis) {
  const auto kept = filter_for_stats(basis);
  FitReport r;
  r.total_atoms = basis.atoms.size();
  r.retained_atoms = kept.size();
  std::vector<double> sx, sy, lam;
  double aspect = 0.0;
  for (const auto& g : kept) {
    sx.push_back(g.sigma_x);
    sy.push_back(g.sigma_y);
    lam.push_back(g.wavelength());
    aspect += g.sigma_y / g.sigma_x;
  }
  r.sigma_x = fit_lognormal(sx);
  r.sigma_y = fit_pareto(sy);
  r.wavelength = fit_pareto(lam);
  r.correlation = correlations(kept);
  r.mean_aspect = aspect / static_cast<double>(kept.size());
  return r;
}

namespace {

using nlohmann::json;

json marginal_json(const MarginalFit& f) {
  json j;
  j["kind"] = std::string(kind_name(f.dist));
  j["n"] = f.n;
  j["degenerate"] = f.degenerate;
  std::visit(
      [&j](const auto& d) {
        using T = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<T, UniformDist>) {
          j["lo"] = d.lo;
          j["hi"] = d.hi;
        } else if constexpr (std::is_same_v<T, LogNormalDist>) {
          j["mu"] = d.mu;
          j["sigma"] = d.sigma;
        } else {
          // Degenerate fits carry alpha = inf, which JSON cannot hold.
          j["alpha"] = std::isfinite(d.alpha) ? json(d.alpha) : json(nullptr);
          j["beta"] = d.beta;
        }
      },
      f.dist);
  return j;
}

MarginalFit marginal_from_json(const json& j) {
  MarginalFit f;
  f.n = j.at("n").get<std::size_t>();
  f.degenerate = j.at("degenerate").get<bool>();
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "Uniform") {
    f.dist = UniformDist{j.at("lo").get<double>(), j.at("hi").get<double>()};
  } else if (kind == "LogNormal") {
    f.dist = LogNormalDist{j.at("mu").get<double>(), j.at("sigma").get<double>()};
  } else if (kind == "Pareto") {
    const auto& a = j.at("alpha");
    f.dist = ParetoDist{a.is_null() ? std::numeric_limits<double>::infinity() : a.get<double>(),
                        j.at("beta").get<double>()};
  } else {
    throw FormatError("unknown marginal kind '" + kind + "'");
  }
  return f;
}

json line_json(const LineFit& l) { return {{"slope", l.slope}, {"intercept", l.intercept}, {"slope_stderr", l.slope_stderr}}; }

LineFit line_from_json(const json& j) {
  return {j.at("slope").get<double>(), j.at("intercept").get<double>(), j.at("slope_stderr").get<double>()};
}

}  // namespace

void write_fit_report(const std::filesystem::path& path, const FitReport& r) {
  json j;
  j["total_atoms"] = r.total_atoms;
  j["retained_atoms"] = r.retained_atoms;
  j["filter"] = "sigma_x <= 1";
  j["pareto_estimator"] = r.pareto_estimator;
  j["marginals"] = {{"sigma_x", marginal_json(r.sigma_x)},
                    {"sigma_y", marginal_json(r.sigma_y)},
                    {"wavelength", marginal_json(r.wavelength)}};
  const auto& c = r.correlation;
  j["correlation"] = {{"rho1_sigma_x_sigma_y", c.rho1},
                      {"rho2_sigma_x_wavelength", c.rho2},
                      {"rho3_sigma_y_wavelength", c.rho3},
                      {"n", c.n},
                      {"positive_semidefinite", c.positive_semidefinite},
                      {"sigma_x_on_wavelength", line_json(c.sigma_x_on_wavelength)},
                      {"sigma_y_on_wavelength", line_json(c.sigma_y_on_wavelength)}};
  j["mean_aspect"] = r.mean_aspect;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

FitReport read_fit_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    const json j = json::parse(in);
    FitReport r;
    r.total_atoms = j.at("total_atoms").get<std::size_t>();
    r.retained_atoms = j.at("retained_atoms").get<std::size_t>();
    r.pareto_estimator = j.at("pareto_estimator").get<std::string>();
    const auto& m = j.at("marginals");
    r.sigma_x = marginal_from_json(m.at("sigma_x"));
    r.sigma_y = marginal_from_json(m.at("sigma_y"));
    r.wavelength = marginal_from_json(m.at("wavelength"));
    const auto& c = j.at("correlation");
    r.correlation.rho1 = c.at("rho1_sigma_x_sigma_y").get<double>();
    r.correlation.rho2 = c.at("rho2_sigma_x_wavelength").get<double>();
    r.correlation.rho3 = c.at("rho3_sigma_y_wavelength").get<double>();
    r.correlation.n = c.at("n").get<std::size_t>();
    r.correlation.positive_semidefinite = c.at("positive_semidefinite").get<bool>();
    r.correlation.sigma_x_on_wavelength = line_from_json(c.at("sigma_x_on_wavelength"));
    r.correlation.sigma_y_on_wavelength = line_from_json(c.at("sigma_y_on_wavelength"));
    r.mean_aspect = j.at("mean_aspect").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad fit report " + path.string() + ": " + e.what());
  }
}

}  // namespace gabor_adapt
