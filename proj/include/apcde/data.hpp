#pragma once
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "apcde/posterior.hpp"
#include "apcde/rng.hpp"
#include "apcde/tensor.hpp"

namespace apcde {

/// One covariate column group: a categorical label column with K levels or
/// m continuous columns, aligned with one predictive head.
struct ColumnSpec {
  HeadKind kind = HeadKind::categorical;
  int K = 0;
  int m = 0;
};

struct Provenance {
  std::string source;
  std::uint64_t seed = 0;
  double bayes_error = std::nan("");
  int label_base = 1;  // label convention in the source file (0 or 1)
  std::string spec_text;
};

struct Dataset {
  Tensor y;  // n x p responses
  Tensor x;  // n x x_dim covariates; labels stored internally as 1..K
  std::vector<ColumnSpec> schema;
  Provenance prov;

  int n() const { return y.rank() == 2 ? static_cast<int>(y.rows()) : 0; }
  int p() const { return y.rank() == 2 ? static_cast<int>(y.cols()) : 0; }
  int x_dim() const { return x.rank() == 2 ? static_cast<int>(x.cols()) : 0; }
  Tensor row_y(int i) const;
  std::vector<double> row_x(int i) const;
  Example example(int i) const { return {row_y(i), row_x(i)}; }
};

std::vector<ColumnSpec> schema_from_heads(const std::vector<HeadSpec>& heads);

/// CSV with a header: columns y0..y{p-1} then covariate columns in schema
/// order. Labels may be 0- or 1-based in the file (detected by the presence
/// of a 0); internally they are always 1..K. Missing or malformed cells
/// raise located errors.
Dataset load_dataset(const std::string& path, const std::vector<ColumnSpec>& schema);
void save_dataset(const Dataset& ds, const std::string& path);

/// Maps integer-valued data with the given maximum onto the 0..255
/// convention (rounding v * 255 / source_max).
Tensor map_to_byte_range(const Tensor& values, double source_max);

/// Integer pixels in [0,255] -> (0,1): for bit depth b < 8 quantize to
/// floor(v / 2^(8-b)) * 2^(8-b), then (v + u)/256 with u ~ Uniform(0,1).
Tensor dequantize(const Tensor& values, int bit_depth, Rng& rng);
double dequantize_value(double v, int bit_depth, Rng& rng);

/// Isotropic Gaussian mixture with known geometry; ground-truth oracle for
/// the end-to-end tests. Optional continuous covariate
/// x_B = slope * y_0 + tau * noise.
struct MixtureSpec {
  int K = 2;
  std::vector<Tensor> means;  // K vectors in R^p
  double sigma = 1.0;
  std::vector<double> probs;  // sums to 1
  bool with_xb = false;
  double xb_slope = 1.0;
  double xb_tau = 0.1;
};

MixtureSpec parse_mixture_spec(const std::string& text);
Dataset synth_conditional_mixture(const MixtureSpec& spec, int n, std::uint64_t seed);

/// Standard normal CDF, used for the generator's Bayes-error record.
double normal_cdf(double t);

}  // namespace apcde
