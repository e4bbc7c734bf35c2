#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "ipbt/random.hpp"

namespace ipbt {

enum class DimKind { real, integer };

inline const char* to_string(DimKind k) { return k == DimKind::real ? "real" : "integer"; }

/// One search dimension. For log-scaled dims `low`/`high` are exponents and
/// native values are `log_base^exponent`.
struct Dimension {
  std::string name;
  DimKind kind = DimKind::real;
  double low = 0.0;
  double high = 1.0;
  std::optional<double> log_base;

  bool is_log() const { return log_base.has_value(); }

  void validate() const {
    if (name.empty()) throw std::invalid_argument("dimension name must not be empty");
    if (!std::isfinite(low) || !std::isfinite(high) || !(low < high))
      throw std::invalid_argument("dimension '" + name + "': require low < high");
    if (log_base && !(*log_base > 1.0))
      throw std::invalid_argument("dimension '" + name + "': log_base must be > 1");
    if (kind == DimKind::integer && (low != std::round(low) || high != std::round(high)))
      throw std::invalid_argument("dimension '" + name + "': integer bounds must be integers");
  }

  /// Native value -> encoded coordinate (exponent for log dims).
  double encode(double native) const {
    if (!is_log()) return native;
    return std::log(native) / std::log(*log_base);
  }

  /// Encoded coordinate -> native value. Integer log dims decode to the exact
  /// integer power.
  double decode(double encoded) const {
    if (!is_log()) return encoded;
    double v = std::pow(*log_base, encoded);
    return kind == DimKind::integer ? std::round(v) : v;
  }

  double native_low() const { return decode(low); }
  double native_high() const { return decode(high); }

  /// Snaps an encoded coordinate onto the admissible set (lattice for integer
  /// dims, nearest with ties up) and clamps to the range.
  double snap_encoded(double e) const {
    if (kind == DimKind::integer) e = std::floor(e + 0.5);
    return std::min(high, std::max(low, e));
  }
};

struct HPVector {
  std::vector<double> values;  ///< native units, canonical dim order
  std::uint64_t space_id = 0;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
  bool operator==(const HPVector&) const = default;
};

class HyperparameterSpace {
 public:
  HyperparameterSpace() = default;

  explicit HyperparameterSpace(std::vector<Dimension> dims) : dims_(std::move(dims)) {
    if (dims_.empty()) throw std::invalid_argument("search space needs at least one dimension");
    std::unordered_set<std::string> seen;
    for (const auto& d : dims_) {
      d.validate();
      if (!seen.insert(d.name).second)
        throw std::invalid_argument("duplicate dimension name '" + d.name + "'");
    }
    id_ = fingerprint();
  }

  std::size_t size() const { return dims_.size(); }
  const std::vector<Dimension>& dims() const { return dims_; }
  const Dimension& dim(std::size_t i) const { return dims_.at(i); }
  std::uint64_t id() const { return id_; }

  std::optional<std::size_t> index_of(const std::string& name) const {
    for (std::size_t i = 0; i < dims_.size(); ++i)
      if (dims_[i].name == name) return i;
    return std::nullopt;
  }

  std::size_t require(const std::string& name) const {
    auto idx = index_of(name);
    if (!idx) throw std::invalid_argument("search space lacks required dimension '" + name + "'");
    return *idx;
  }

  HPVector make(std::vector<double> native) const {
    HPVector v{std::move(native), id_};
    check(v);
    return v;
  }

  /// Throws std::out_of_range when a coordinate leaves its dimension's range or
  /// an integer dim is off-lattice.
  void check(const HPVector& v) const {
    if (v.space_id != id_) throw std::invalid_argument("HP vector belongs to a different space");
    if (v.size() != dims_.size()) throw std::invalid_argument("HP vector has wrong length");
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      const auto& d = dims_[i];
      double x = v.values[i];
      if (!std::isfinite(x)) throw std::out_of_range("non-finite value for '" + d.name + "'");
      if (d.kind == DimKind::integer && x != std::round(x))
        throw std::out_of_range("non-integer value for integer dim '" + d.name + "'");
      double u = unit_coordinate(d, x);
      if (u < -kRangeSlack || u > 1.0 + kRangeSlack)
        throw std::out_of_range("value out of range for '" + d.name + "'");
    }
  }

  /// Encoded coordinates mapped affinely onto [0,1].
  std::vector<double> normalize(const HPVector& v) const {
    check(v);
    std::vector<double> u(dims_.size());
    for (std::size_t i = 0; i < dims_.size(); ++i)
      u[i] = std::min(1.0, std::max(0.0, unit_coordinate(dims_[i], v.values[i])));
    return u;
  }

  HPVector denormalize(const std::vector<double>& u) const {
    if (u.size() != dims_.size()) throw std::invalid_argument("unit vector has wrong length");
    HPVector v{std::vector<double>(dims_.size()), id_};
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      const auto& d = dims_[i];
      double ui = std::min(1.0, std::max(0.0, u[i]));
      double e = d.snap_encoded(d.low + ui * (d.high - d.low));
      v.values[i] = clamp_native(d, d.decode(e));
    }
    return v;
  }

  /// Uniform in encoded units; integer dims uniform over the lattice.
  HPVector sample_uniform(Rng& rng) const {
    HPVector v{std::vector<double>(dims_.size()), id_};
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      const auto& d = dims_[i];
      double e;
      if (d.kind == DimKind::integer) {
        auto lo = static_cast<long long>(d.low), hi = static_cast<long long>(d.high);
        e = static_cast<double>(std::uniform_int_distribution<long long>(lo, hi)(rng));
      } else {
        e = std::uniform_real_distribution<double>(d.low, d.high)(rng);
      }
      v.values[i] = clamp_native(d, d.decode(e));
    }
    return v;
  }

 private:
  static constexpr double kRangeSlack = 1e-9;

  static double unit_coordinate(const Dimension& d, double native) {
    if (d.is_log() && !(native > 0.0)) return -1.0;
    return (d.encode(native) - d.low) / (d.high - d.low);
  }

  // pow/log round-off can push a decoded bound a hair outside the range.
  static double clamp_native(const Dimension& d, double x) {
    double lo = d.native_low(), hi = d.native_high();
    return std::min(hi, std::max(lo, x));
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    auto mix = [&h](const void* p, std::size_t n) {
      auto b = static_cast<const unsigned char*>(p);
      for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ull;
    };
    for (const auto& d : dims_) {
      mix(d.name.data(), d.name.size());
      int k = static_cast<int>(d.kind);
      mix(&k, sizeof k);
      mix(&d.low, sizeof d.low);
      mix(&d.high, sizeof d.high);
      double b = d.log_base.value_or(0.0);
      mix(&b, sizeof b);
    }
    return h;
  }

  std::vector<Dimension> dims_;
  std::uint64_t id_ = 0;
};

}  // namespace ipbt
