#include "defcor/calib.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include "defcor/error.hpp"

namespace defcor {

StiffnessFit fit_global_stiffness(const PalpationTrace& trace) {
  const auto& s = trace.samples;
  if (s.size() < 3) throw DegenerateError("palpation trace needs at least 3 samples");
  const double n = static_cast<double>(s.size());
  double mx = 0, my = 0;
  for (const auto& p : s) {
    if (!std::isfinite(p.lambda_z_mm) || !std::isfinite(p.force_n) || p.force_n < 0)
      throw ConfigError("palpation trace has a non-finite or negative sample");
    mx += p.lambda_z_mm;
    my += p.force_n;
  }
  mx /= n;
  my /= n;
  // Centred sums keep the fit well conditioned for large displacement offsets.
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& p : s) {
    const double dx = p.lambda_z_mm - mx, dy = p.force_n - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0)) throw DegenerateError("palpation trace has zero displacement variance");

  StiffnessFit fit;
  fit.c2_slope = sxy / sxx;
  fit.c1_intercept = my - fit.c2_slope * mx;
  if (syy > 0) {
    double sse = 0;
    for (const auto& p : s) {
      const double r = p.force_n - (fit.c2_slope * p.lambda_z_mm + fit.c1_intercept);
      sse += r * r;
    }
    fit.r_squared = std::clamp(1.0 - sse / syy, 0.0, 1.0);
  } else {
    fit.r_squared = 1.0;
  }
  return fit;
}

StiffnessPopulation make_population(std::span<const double> k_g) {
  if (k_g.empty()) throw DegenerateError("stiffness population is empty");
  StiffnessPopulation p;
  p.n = static_cast<int>(k_g.size());
  for (double k : k_g) p.mu_g += k;
  p.mu_g /= p.n;
  double ss = 0;
  for (double k : k_g) ss += (k - p.mu_g) * (k - p.mu_g);
  p.delta_g = std::sqrt(ss / p.n);
  return p;
}

double zscore(double k_g, const StiffnessPopulation& pop) {
  if (!(pop.delta_g > 0)) throw DegenerateError("zscore: population standard deviation is zero");
  return (k_g - pop.mu_g) / pop.delta_g;
}

PalpationTrace read_palpation_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open palpation trace: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty palpation trace: " + path.string());
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t_s,lambda_z_mm,force_n") throw FormatError("unexpected palpation header in " + path.string());
  PalpationTrace trace;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::istringstream ss(line);
    PalpationSample s;
    char c1 = 0, c2 = 0;
    if (!(ss >> s.time_s >> c1 >> s.lambda_z_mm >> c2 >> s.force_n) || c1 != ',' || c2 != ',')
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed row");
    trace.samples.push_back(s);
  }
  return trace;
}

void write_palpation_csv(const std::filesystem::path& path, const PalpationTrace& trace) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write palpation trace: " + path.string());
  out << "t_s,lambda_z_mm,force_n\n" << std::setprecision(17);
  for (const auto& s : trace.samples) out << s.time_s << ',' << s.lambda_z_mm << ',' << s.force_n << '\n';
}

}  // namespace defcor
