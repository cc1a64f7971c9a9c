#pragma once

#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>

namespace blowlab {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double sqrt3 = std::numbers::sqrt3;

// omega = e^{2 pi i / 3} and its square, fixed once in double precision
inline constexpr cplx omega{-0.5, sqrt3 / 2};
inline constexpr cplx omega2{-0.5, -sqrt3 / 2};
inline constexpr cplx I{0.0, 1.0};

inline constexpr std::string_view version = "1.0.0";

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "Error"; }
};

#define BLOWLAB_ERROR(Name)                                              \
    struct Name : Error {                                                \
        using Error::Error;                                              \
        const char* kind() const noexcept override { return #Name; }     \
    };

BLOWLAB_ERROR(DomainError)
BLOWLAB_ERROR(ParamError)
BLOWLAB_ERROR(ConvergenceError)
BLOWLAB_ERROR(PoleError)
BLOWLAB_ERROR(BudgetError)
BLOWLAB_ERROR(SingularityError)
BLOWLAB_ERROR(NormBoundViolation)
BLOWLAB_ERROR(DivergenceGuard)
BLOWLAB_ERROR(IntegrabilityError)
BLOWLAB_ERROR(WindowError)
BLOWLAB_ERROR(FitError)
BLOWLAB_ERROR(ConfigError)
BLOWLAB_ERROR(CacheError)
BLOWLAB_ERROR(RealnessError)

#undef BLOWLAB_ERROR

// 64-bit FNV-1a, used as a stable content hash for cache keys
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t fnv1a_bytes(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    return fnv1a(std::string_view(static_cast<const char*>(data), n), h);
}

inline std::string hex64(std::uint64_t h) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, h >>= 4) s[i] = digits[h & 0xf];
    return s;
}

}  // namespace blowlab
