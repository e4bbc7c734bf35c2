#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipbt/hpspace.hpp"
#include "ipbt/random.hpp"

namespace ipbt {

/// Opaque per-member training state. Trainables decide what goes in here
/// (parameters, optimizer buffers, ...).
struct WeightState {
  std::vector<double> values;
  bool crashed = false;  ///< training diverged; evaluate returns the sentinel

  std::size_t dim() const { return values.size(); }
  bool operator==(const WeightState&) const = default;
};

/// Contract every trainable implements. Scores are "higher is better".
/// Implementations hold only read-only state after construction, so distinct
/// members may be trained concurrently.
class Trainable {
 public:
  virtual ~Trainable() = default;

  virtual std::string kind() const = 0;
  virtual std::size_t weight_dim() const = 0;
  virtual WeightState fresh_init(Rng& rng) const = 0;
  virtual WeightState train(const WeightState& w, const HPVector& h, std::size_t inner_steps,
                            std::size_t global_step, Rng& rng) const = 0;
  virtual double evaluate(const WeightState& w) const = 0;
  /// Held-out score reported for the selected model. Defaults to evaluate.
  virtual double test_score(const WeightState& w) const { return evaluate(w); }
  /// Finite and strictly below every legitimate score.
  virtual double sentinel_score() const = 0;
};

namespace detail {

inline void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("truncated weight state");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f64(std::ostream& os, double d) { write_u64(os, std::bit_cast<std::uint64_t>(d)); }
inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline constexpr char kWeightMagic[8] = {'I', 'P', 'B', 'T', 'W', 'S', '0', '1'};

}  // namespace detail

/// Binary layout: magic "IPBTWS01", u64 kind length, kind bytes, u64 flags
/// (bit 0 = crashed), u64 dim, dim little-endian IEEE-754 doubles.
inline void write_weight_state(std::ostream& os, const std::string& kind, const WeightState& w) {
  os.write(detail::kWeightMagic, sizeof detail::kWeightMagic);
  detail::write_u64(os, kind.size());
  os.write(kind.data(), static_cast<std::streamsize>(kind.size()));
  detail::write_u64(os, w.crashed ? 1u : 0u);
  detail::write_u64(os, w.values.size());
  for (double v : w.values) detail::write_f64(os, v);
}

inline WeightState read_weight_state(std::istream& is, const std::string& expected_kind) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, detail::kWeightMagic, 8) != 0)
    throw std::runtime_error("bad weight state magic");
  auto klen = detail::read_u64(is);
  if (klen > 256) throw std::runtime_error("corrupt weight state header");
  std::string kind(klen, '\0');
  if (!is.read(kind.data(), static_cast<std::streamsize>(klen))) throw std::runtime_error("truncated weight state");
  if (kind != expected_kind)
    throw std::runtime_error("weight state kind '" + kind + "' does not match '" + expected_kind + "'");
  WeightState w;
  auto flags = detail::read_u64(is);
  if (flags > 1) throw std::runtime_error("corrupt weight state flags");
  w.crashed = flags == 1;
  auto dim = detail::read_u64(is);
  if (dim > (std::uint64_t{1} << 32)) throw std::runtime_error("corrupt weight state dimension");
  w.values.resize(dim);
  for (auto& v : w.values) v = detail::read_f64(is);
  return w;
}

inline bool all_finite(const std::vector<double>& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace ipbt
