#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace beamforge {

/// Adaptive-part FLOP counts per pixel. Time-of-flight correction and the
/// final weighted sum are common to all beamformers and not counted.

/// I (3N + 5): variance estimates plus the MAP update per iteration.
std::uint64_t flops_imap(std::uint64_t n, std::uint64_t iterations);

/// N^3 (inversion) + 2N^2 + 3N (weight calculation).
std::uint64_t flops_mv(std::uint64_t n);

/// flops_mv + N^3 (eigendecomposition) + kN^2 + N^2 (projection). The kN^2
/// term uses the kept eigenvector count ceil(k N), so it is exact in integers.
std::uint64_t flops_ebmv(std::uint64_t n, double eigen_fraction);

enum class AbleAccounting {
  /// Input layer 2 N0 N1 + N1, FC layers 4 N_i N_{i+1} + N_{i+1} for
  /// i = 1..L-1, activations 4 N_i for i = 1..L-1.
  literal,
  /// literal plus one more 4 N_1 activation term after the first layer;
  /// gives 71,232 for widths [128, 128, 32, 32, 128].
  first_layer_activation,
};

std::string_view accounting_name(AbleAccounting a);
AbleAccounting parse_accounting(std::string_view s);

/// widths = [N0, N1, ..., NL] as in able_widths().
std::uint64_t flops_able(std::span<const std::size_t> widths,
                         AbleAccounting accounting);

/// N^2 log2 N.
double flops_lower_bound_inversion(double n);

enum class FlopMethod { imap, mv, ebmv, able, lower_bound };

std::string_view method_name(FlopMethod m);
FlopMethod parse_method(std::string_view s);

struct FlopReport {
  FlopMethod method = FlopMethod::mv;
  std::uint64_t n = 0;
  std::string parameters;
  std::uint64_t flops = 0;   ///< exact count (rounded for lower_bound)
  double flops_real = 0.0;   ///< same value as a real number
};

struct SweepOptions {
  std::uint64_t imap_iterations = 2;
  double eigen_fraction = 0.5;
  AbleAccounting accounting = AbleAccounting::first_layer_activation;
};

FlopReport flop_report(FlopMethod method, std::uint64_t n,
                       const SweepOptions &opts = {});

/// One report per (method, N), method-major.
std::vector<FlopReport> sweep(std::span<const FlopMethod> methods,
                              std::span<const std::uint64_t> ns,
                              const SweepOptions &opts = {});

/// CSV with header method,n,parameters,flops.
void write_sweep_csv(std::ostream &os, std::span<const FlopReport> rows);

} // namespace beamforge
