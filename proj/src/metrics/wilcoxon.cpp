#include <algorithm>
#include <cmath>
#include <numeric>

#include "splice/errors.hpp"
#include "splice/metrics/metrics.hpp"

namespace splice::metrics {

namespace {

// Rank |d| ascending with ties averaged; returned doubled so ranks stay integral.
std::vector<long> doubled_ranks(const std::vector<double>& absd) {
  std::vector<std::size_t> order(absd.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return absd[i] < absd[j]; });
  std::vector<long> r(absd.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && absd[order[j + 1]] == absd[order[i]]) ++j;
    // positions i..j (0-based) share rank (i+1 + j+1)/2
    const long doubled = static_cast<long>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = doubled;
    i = j + 1;
  }
  return r;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_one_sided(std::span<const double> a, std::span<const double> b, Tail tail) {
  if (a.size() != b.size()) throw DimensionError("wilcoxon_one_sided: paired samples differ in length");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  WilcoxonResult res;
  res.n = d.size();
  if (d.empty()) {
    res.undefined = true;
    return res;
  }
  res.small_sample = res.n < 5;
  std::vector<double> absd(d.size());
  std::transform(d.begin(), d.end(), absd.begin(), [](double x) { return std::abs(x); });
  const auto r2 = doubled_ranks(absd);
  long w2 = 0;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0) w2 += r2[i];
  res.w_plus = static_cast<double>(w2) / 2.0;

  if (res.n <= 20) {
    res.exact = true;
    const long total2 = std::accumulate(r2.begin(), r2.end(), 0L);
    // count[s] = number of sign assignments with doubled W+ == s
    std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (long r : r2) {
      for (long s = reach; s >= 0; --s)
        if (count[s] != 0.0) count[s + r] += count[s];
      reach += r;
    }
    const double all = std::ldexp(1.0, static_cast<int>(res.n));
    double tailmass = 0.0;
    if (tail == Tail::Less) {
      for (long s = 0; s <= w2; ++s) tailmass += count[s];
    } else {
      for (long s = w2; s <= total2; ++s) tailmass += count[s];
    }
    res.p = tailmass / all;
    return res;
  }

  const double n = static_cast<double>(res.n);
  const double mean = n * (n + 1) / 4.0;
  double var = n * (n + 1) * (2 * n + 1) / 24.0;
  // tie correction: sum (t^3 - t) / 48 over tie groups
  std::vector<double> sorted = absd;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    var -= (t * t * t - t) / 48.0;
    i = j;
  }
  const double sd = std::sqrt(var);
  if (tail == Tail::Less)
    res.p = normal_cdf((res.w_plus - mean + 0.5) / sd);
  else
    res.p = 1.0 - normal_cdf((res.w_plus - mean - 0.5) / sd);
  return res;
}

}  // namespace splice::metrics
