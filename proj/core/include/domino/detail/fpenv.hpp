#pragma once

#if defined(__SSE__) || defined(_M_X64)
#include <xmmintrin.h>
#define DOMINO_HAS_MXCSR 1
#endif

namespace domino::detail {

// Flushes subnormal results and operands to zero for the current thread
// while alive. Far off-diagonal kernel entries and their Cholesky factors
// decay through the subnormal range, where x86 arithmetic is ~100x slower.
class ScopedFlushDenormals {
 public:
  ScopedFlushDenormals() noexcept {
#ifdef DOMINO_HAS_MXCSR
    saved_ = _mm_getcsr();
    _mm_setcsr(saved_ | 0x8040u);  // FTZ | DAZ
#endif
  }
  ~ScopedFlushDenormals() {
#ifdef DOMINO_HAS_MXCSR
    _mm_setcsr(saved_);
#endif
  }
  ScopedFlushDenormals(const ScopedFlushDenormals&) = delete;
  ScopedFlushDenormals& operator=(const ScopedFlushDenormals&) = delete;

 private:
  unsigned saved_ = 0;
};

}  // namespace domino::detail
