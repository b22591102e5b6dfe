#pragma once

#include <cstddef>
#include <cstdint>

// Hot-spot helpers for int16 graphs. Both paths accumulate exactly in int64, so enabling or
// disabling the vector path never changes a result. Define QNN_NO_SIMD to force the scalar path.
#if defined(__AVX2__) && !defined(QNN_NO_SIMD)
#include <immintrin.h>
#define QNN_SIMD_AVX2 1
#else
#define QNN_SIMD_AVX2 0
#endif

namespace qnn::simd {

inline constexpr bool avx2 = QNN_SIMD_AVX2 != 0;

/// acc[i] += x * w[i] for i < n.
inline void axpy(std::int64_t* acc, const std::int16_t* w, std::int32_t x, std::size_t n) {
  std::size_t i = 0;
#if QNN_SIMD_AVX2
  const __m256i xv = _mm256_set1_epi32(x);
  for (; i + 8 <= n; i += 8) {
    const __m256i w32 = _mm256_cvtepi16_epi32(_mm_loadu_si128(reinterpret_cast<const __m128i*>(w + i)));
    const __m256i p = _mm256_mullo_epi32(w32, xv);
    const __m256i lo = _mm256_cvtepi32_epi64(_mm256_castsi256_si128(p));
    const __m256i hi = _mm256_cvtepi32_epi64(_mm256_extracti128_si256(p, 1));
    auto* a = reinterpret_cast<__m256i*>(acc + i);
    _mm256_storeu_si256(a, _mm256_add_epi64(_mm256_loadu_si256(a), lo));
    _mm256_storeu_si256(a + 1, _mm256_add_epi64(_mm256_loadu_si256(a + 1), hi));
  }
#endif
  for (; i < n; ++i) acc[i] += static_cast<std::int64_t>(x) * w[i];
}

/// Sum of a[i] * b[i] for i < n.
inline std::int64_t dot(const std::int16_t* a, const std::int16_t* b, std::size_t n) {
  std::size_t i = 0;
  std::int64_t sum = 0;
#if QNN_SIMD_AVX2
  __m256i acc = _mm256_setzero_si256();
  for (; i + 8 <= n; i += 8) {
    const __m256i a32 = _mm256_cvtepi16_epi32(_mm_loadu_si128(reinterpret_cast<const __m128i*>(a + i)));
    const __m256i b32 = _mm256_cvtepi16_epi32(_mm_loadu_si128(reinterpret_cast<const __m128i*>(b + i)));
    const __m256i p = _mm256_mullo_epi32(a32, b32);
    acc = _mm256_add_epi64(acc, _mm256_cvtepi32_epi64(_mm256_castsi256_si128(p)));
    acc = _mm256_add_epi64(acc, _mm256_cvtepi32_epi64(_mm256_extracti128_si256(p, 1)));
  }
  alignas(32) std::int64_t lanes[4];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), acc);
  sum = lanes[0] + lanes[1] + lanes[2] + lanes[3];
#endif
  for (; i < n; ++i) sum += static_cast<std::int64_t>(a[i]) * b[i];
  return sum;
}

}  // namespace qnn::simd
