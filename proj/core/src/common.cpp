#include "flywheel/common.hpp"

#include <algorithm>
#include <numbers>

namespace flywheel {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage: return "usage";
    case ErrorCode::precondition: return "precondition";
    case ErrorCode::out_of_domain: return "out_of_domain";
    case ErrorCode::data: return "data";
    case ErrorCode::fit_failure: return "fit_failure";
    case ErrorCode::unsupported: return "unsupported";
    case ErrorCode::monotonicity: return "monotonicity";
    case ErrorCode::verification: return "verification";
    case ErrorCode::conflict: return "conflict";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::exhausted: return "exhausted";
  }
  return "unknown";
}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

DomainBox DomainBox::unit(std::size_t dims) {
  return DomainBox{std::vector<double>(dims, 0.0), std::vector<double>(dims, 1.0)};
}

void DomainBox::validate() const {
  require(!lo.empty(), ErrorCode::usage, "domain box has no dimensions");
  require(lo.size() == hi.size(), ErrorCode::usage, "domain box lo/hi length mismatch");
  for (std::size_t i = 0; i < lo.size(); ++i) {
    require(std::isfinite(lo[i]) && std::isfinite(hi[i]) && lo[i] < hi[i],
            ErrorCode::usage,
            "domain box bound " + std::to_string(i) + " is not ordered (lo < hi)");
  }
}

bool DomainBox::contains(std::span<const double> x) const {
  if (x.size() != lo.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
  }
  return true;
}

std::vector<double> DomainBox::center() const {
  std::vector<double> c(lo.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (lo[i] + hi[i]);
  return c;
}

double DomainBox::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < lo.size(); ++i) v *= hi[i] - lo[i];
  return v;
}

double DomainBox::diagonal() const { return distance(lo, hi); }

std::vector<double> DomainBox::clamp(std::vector<double> x) const {
  for (std::size_t i = 0; i < x.size() && i < lo.size(); ++i) {
    x[i] = std::clamp(x[i], lo[i], hi[i]);
  }
  return x;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

std::size_t Rng::index(std::size_t n) {
  require(n > 0, ErrorCode::precondition, "Rng::index on empty range");
  // Lemire-free modulo is fine here: n is tiny compared to 2^64.
  return static_cast<std::size_t>(engine_() % n);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::vector<double> Rng::direction(std::size_t dims) {
  std::vector<double> v(dims);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = normal();
      norm += x * x;
    }
  } while (norm < 1e-24);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the combined words.
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

double quantile(std::vector<double> v, double q) {
  require(!v.empty(), ErrorCode::precondition, "quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + frac * (v[i + 1] - v[i]);
}

}  // namespace flywheel
