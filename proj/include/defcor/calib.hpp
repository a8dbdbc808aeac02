#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace defcor {

struct PalpationSample {
  double time_s = 0;
  double lambda_z_mm = 0;  // probe tip displacement along the force axis
  double force_n = 0;
};

struct PalpationTrace {
  std::vector<PalpationSample> samples;
};

/// Line force = c2 * lambda + c1. The slope is the global stiffness K_g (N/mm).
struct StiffnessFit {
  double c2_slope = 0;
  double c1_intercept = 0;
  double r_squared = 0;
};

struct StiffnessPopulation {
  double mu_g = 0;
  double delta_g = 0;  // population SD (divide by N)
  int n = 0;
};

StiffnessFit fit_global_stiffness(const PalpationTrace& trace);

StiffnessPopulation make_population(std::span<const double> k_g);

// (k_g - mu_g) / delta_g
double zscore(double k_g, const StiffnessPopulation& pop);

// CSV with header `t_s,lambda_z_mm,force_n`.
PalpationTrace read_palpation_csv(const std::filesystem::path& path);
void write_palpation_csv(const std::filesystem::path& path, const PalpationTrace& trace);

}  // namespace defcor
