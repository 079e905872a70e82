#pragma once

// Scalar type used by every numeric container in the library. Double unless
// the build defines CD3NET_SINGLE_PRECISION. The precision is folded into an
// inline namespace so float and double builds can be linked side by side.

#if defined(CD3NET_SINGLE_PRECISION)
#define CD3NET_ABI f32
#else
#define CD3NET_ABI f64
#endif

namespace cd3net {
inline namespace CD3NET_ABI {

#if defined(CD3NET_SINGLE_PRECISION)
using Real = float;
#else
using Real = double;
#endif

inline constexpr int kSampleRate = 16000;

}  // namespace CD3NET_ABI
}  // namespace cd3net
