#include "beamforge/complexity.hpp"

#include "beamforge/error.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace beamforge {

std::uint64_t flops_imap(std::uint64_t n, std::uint64_t iterations) {
  return iterations * (3 * n + 5);
}

std::uint64_t flops_mv(std::uint64_t n) { return n * n * n + 2 * n * n + 3 * n; }

std::uint64_t flops_ebmv(std::uint64_t n, double eigen_fraction) {
  if (!(eigen_fraction >= 0.0 && eigen_fraction <= 1.0))
    throw InvalidInput("eigen fraction must lie in [0, 1]");
  const auto kept = static_cast<std::uint64_t>(
      std::ceil(eigen_fraction * static_cast<double>(n) - 1e-9));
  return flops_mv(n) + n * n * n + kept * n + n * n;
}

std::string_view accounting_name(AbleAccounting a) {
  return a == AbleAccounting::literal ? "literal" : "first_layer_activation";
}

AbleAccounting parse_accounting(std::string_view s) {
  if (s == "a" || s == "literal")
    return AbleAccounting::literal;
  if (s == "b" || s == "first_layer_activation")
    return AbleAccounting::first_layer_activation;
  throw ConfigError("unknown FLOP accounting '" + std::string(s) + "'");
}

std::uint64_t flops_able(std::span<const std::size_t> widths,
                         AbleAccounting accounting) {
  if (widths.size() < 2)
    throw InvalidInput("flops_able needs at least [N0, N1]");
  std::uint64_t total = 2 * widths[0] * widths[1] + widths[1];
  for (std::size_t i = 1; i + 1 < widths.size(); ++i)
    total += 4 * widths[i] * widths[i + 1] + widths[i + 1] + 4 * widths[i];
  if (accounting == AbleAccounting::first_layer_activation)
    total += 4 * widths[1];
  return total;
}

double flops_lower_bound_inversion(double n) {
  if (!(n >= 1.0))
    throw InvalidInput("lower bound needs N >= 1");
  return n * n * std::log2(n);
}

std::string_view method_name(FlopMethod m) {
  switch (m) {
  case FlopMethod::imap:
    return "imap";
  case FlopMethod::mv:
    return "mv";
  case FlopMethod::ebmv:
    return "ebmv";
  case FlopMethod::able:
    return "able";
  case FlopMethod::lower_bound:
    return "lower_bound";
  }
  return "mv";
}

FlopMethod parse_method(std::string_view s) {
  if (s == "imap")
    return FlopMethod::imap;
  if (s == "mv")
    return FlopMethod::mv;
  if (s == "ebmv")
    return FlopMethod::ebmv;
  if (s == "able")
    return FlopMethod::able;
  if (s == "lower_bound" || s == "bound")
    return FlopMethod::lower_bound;
  throw ConfigError("unknown FLOP method '" + std::string(s) + "'");
}

FlopReport flop_report(FlopMethod method, std::uint64_t n,
                       const SweepOptions &opts) {
  FlopReport r;
  r.method = method;
  r.n = n;
  std::ostringstream params;
  switch (method) {
  case FlopMethod::imap:
    r.flops = flops_imap(n, opts.imap_iterations);
    params << "I=" << opts.imap_iterations;
    break;
  case FlopMethod::mv:
    r.flops = flops_mv(n);
    break;
  case FlopMethod::ebmv:
    r.flops = flops_ebmv(n, opts.eigen_fraction);
    params << "k=" << opts.eigen_fraction;
    break;
  case FlopMethod::able: {
    const std::size_t inner = std::max<std::uint64_t>(1, n / 4);
    const std::size_t widths[] = {n, n, inner, inner, n};
    r.flops = flops_able(widths, opts.accounting);
    params << "widths=" << n << "/" << n << "/" << inner << "/" << inner << "/"
           << n << " accounting=" << accounting_name(opts.accounting);
    break;
  }
  case FlopMethod::lower_bound:
    r.flops_real = flops_lower_bound_inversion(static_cast<double>(n));
    r.flops = static_cast<std::uint64_t>(std::llround(r.flops_real));
    r.parameters = "N^2 log2 N";
    return r;
  }
  r.flops_real = static_cast<double>(r.flops);
  r.parameters = params.str();
  return r;
}

std::vector<FlopReport> sweep(std::span<const FlopMethod> methods,
                              std::span<const std::uint64_t> ns,
                              const SweepOptions &opts) {
  std::vector<FlopReport> rows;
  rows.reserve(methods.size() * ns.size());
  for (FlopMethod m : methods)
    for (std::uint64_t n : ns)
      rows.push_back(flop_report(m, n, opts));
  return rows;
}

void write_sweep_csv(std::ostream &os, std::span<const FlopReport> rows) {
  os << "method,n,parameters,flops\n";
  for (const auto &r : rows) {
    os << method_name(r.method) << ',' << r.n << ",\"" << r.parameters << "\",";
    if (r.method == FlopMethod::lower_bound)
      os << std::fixed << std::setprecision(3) << r.flops_real
         << std::defaultfloat;
    else
      os << r.flops;
    os << '\n';
  }
}

} // namespace beamforge
