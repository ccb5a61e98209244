#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace trec {

// --- error types -----------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MalformedLine : Error {
    int line_no;
    explicit MalformedLine(int line)
        : Error("malformed line " + std::to_string(line)), line_no(line) {}
};
struct EmptyInput : Error {
    EmptyInput() : Error("empty input") {}
};
struct TimestampOutOfGrid : Error {
    using Error::Error;
};
struct RatioError : Error {
    using Error::Error;
};
struct MissingItem : Error {
    std::string raw_id;
    explicit MissingItem(std::string id)
        : Error("feature file missing item: " + id), raw_id(std::move(id)) {}
};
struct NonFiniteEntry : Error {
    using Error::Error;
};
struct HeaderMismatch : Error {
    using Error::Error;
};
struct IndexOutOfRange : Error {
    using Error::Error;
};
struct FeatureDimMismatch : Error {
    using Error::Error;
};
struct VariantMismatch : Error {
    using Error::Error;
};
struct NoNegativesAvailable : Error {
    NoNegativesAvailable() : Error("no negative items available") {}
};
struct DivergedError : Error {
    using Error::Error;
};
struct EmptyRelevant : Error {
    EmptyRelevant() : Error("relevant set is empty") {}
};
struct CutoffMismatch : Error {
    using Error::Error;
};
struct VocabMismatch : Error {
    using Error::Error;
};
struct UnknownUser : Error {
    using Error::Error;
};
struct UnknownInterval : Error {
    using Error::Error;
};
struct ArgumentError : Error {
    using Error::Error;
};

// --- deterministic rng -----------------------------------------------------

// Wraps mt19937_64 but derives doubles and bounded ints by hand so that
// streams are identical across standard libraries.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // uniform in [0, n)
    int next_int(int n) {
        // rejection sampling on the top bits; n is small in practice
        uint64_t bound = static_cast<uint64_t>(n);
        uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return static_cast<int>(x % bound);
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Box-Muller, caches the second deviate
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1, u2;
        do {
            u1 = next_double();
        } while (u1 <= 0.0);
        u2 = next_double();
        double radius = std::sqrt(-2.0 * std::log(u1));
        double angle = 2.0 * 3.14159265358979323846 * u2;
        cached_ = radius * std::sin(angle);
        has_cached_ = true;
        return radius * std::cos(angle);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(next_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 gen_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

// splitmix64; used for hash-based deterministic scoring
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace trec
