#ifndef RSM_PARAM_VECTOR_HPP
#define RSM_PARAM_VECTOR_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

namespace rsm {

// Flat ordered sequence of network parameters: the unit of segmentation,
// transmission and mixing. Ordering is layer-major, row-major within a
// layer's weight matrix, bias after weights, log-std entries last.
using ParameterVector = std::vector<double>;
using Gradient = std::vector<double>;

inline bool all_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

namespace detail {
inline void put_u64_le(std::ostream& out, std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffU);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

inline std::uint64_t get_u64_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw std::runtime_error("parameter stream truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return v;
}
}  // namespace detail

// Checkpoint format: u64 little-endian length header, then each value as a
// little-endian IEEE-754 binary64.
inline void save_parameters(std::ostream& out, const ParameterVector& params) {
    detail::put_u64_le(out, params.size());
    for (double v : params) detail::put_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

inline ParameterVector load_parameters(std::istream& in) {
    const std::uint64_t n = detail::get_u64_le(in);
    ParameterVector params(n);
    for (std::uint64_t i = 0; i < n; ++i) params[i] = std::bit_cast<double>(detail::get_u64_le(in));
    return params;
}

}  // namespace rsm

#endif  // RSM_PARAM_VECTOR_HPP
