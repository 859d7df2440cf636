#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flywheel {

/// Error categories. The CLI maps these onto process exit codes.
enum class ErrorCode {
  usage,          // malformed request or argument
  precondition,   // operation called outside its contract
  out_of_domain,  // state outside the domain box
  data,           // corrupt or inconsistent persisted data
  fit_failure,    // training did not separate expert from negatives
  unsupported,    // operation not available for this scorer kind
  monotonicity,   // mapping edit would break monotonicity
  verification,   // merge refused by the verification gate
  conflict,       // stale state or double labelling
  not_found,
  exhausted,      // rejection sampling or search ran out of attempts
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

using Context = std::map<std::string, std::string>;

/// A point in state space plus optional categorical context.
struct StateVec {
  std::vector<double> values;
  Context context;

  StateVec() = default;
  StateVec(std::vector<double> v) : values(std::move(v)) {}  // NOLINT
  StateVec(std::vector<double> v, Context c)
      : values(std::move(v)), context(std::move(c)) {}

  std::size_t dims() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  double& operator[](std::size_t i) { return values[i]; }

  friend bool operator==(const StateVec&, const StateVec&) = default;
};

struct DomainBox {
  std::vector<double> lo;
  std::vector<double> hi;

  static DomainBox unit(std::size_t dims);

  std::size_t dims() const { return lo.size(); }
  void validate() const;
  bool contains(std::span<const double> x) const;
  bool contains(const std::vector<double>& x) const { return contains(std::span<const double>(x)); }
  bool contains(const StateVec& s) const { return contains(s.values); }
  std::vector<double> center() const;
  double volume() const;
  double diagonal() const;
  /// Clamp a point onto the box.
  std::vector<double> clamp(std::vector<double> x) const;

  friend bool operator==(const DomainBox&, const DomainBox&) = default;
};

double squared_distance(std::span<const double> a, std::span<const double> b);
double distance(std::span<const double> a, std::span<const double> b);
inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
  return distance(std::span<const double>(a), std::span<const double>(b));
}
inline double distance(const StateVec& a, const StateVec& b) {
  return distance(a.values, b.values);
}

/// Seeded generator. Wraps mt19937_64 (whose output sequence is fixed by the
/// standard) and does its own real conversions, so streams are identical
/// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform direction on the unit sphere in `dims` dimensions.
  std::vector<double> direction(std::size_t dims);

  /// Derive an independent child seed from a parent seed and a stream tag.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// FNV-1a 64-bit, rendered as 16 hex characters.
std::string content_hash(std::string_view bytes);

double median(std::vector<double> v);
/// Linear-interpolated quantile, q in [0, 1].
double quantile(std::vector<double> v, double q);

}  // namespace flywheel
