#pragma once

// Scalar precision of the whole library. The default build is single precision;
// the gradient-check targets compile the same sources with PBRL_DOUBLE_PRECISION
// so finite differences are meaningful. Each precision lives in its own inline
// namespace, so both variants can be linked into one binary.

#if defined(PBRL_DOUBLE_PRECISION)
#define PBRL_PRECISION_NS f64
#else
#define PBRL_PRECISION_NS f32
#endif

#define PBRL_NAMESPACE_BEGIN \
  namespace pbrl {           \
  inline namespace PBRL_PRECISION_NS {
#define PBRL_NAMESPACE_END \
  }                        \
  }

PBRL_NAMESPACE_BEGIN

#if defined(PBRL_DOUBLE_PRECISION)
using Real = double;
#else
using Real = float;
#endif

PBRL_NAMESPACE_END
