#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace fmgan {

// Thrown on any contract violation (bad shapes, invalid arguments, broken
// file formats). Messages carry enough context to locate the call site.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] void raise(const std::string& msg);

namespace detail {
struct MsgStream {
    std::ostringstream os;
    template <typename T>
    MsgStream& operator<<(const T& v) {
        os << v;
        return *this;
    }
    std::string str() const { return os.str(); }
};
}  // namespace detail

#define FMGAN_CHECK(cond, expr)                         \
    do {                                                \
        if (!(cond)) {                                  \
            ::fmgan::detail::MsgStream ms__;            \
            ms__ << expr;                               \
            ::fmgan::raise(ms__.str());                 \
        }                                               \
    } while (0)

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool shape_eq(const Shape& a, const Shape& b);

// Deterministic random source. Gaussian draws use Box-Muller without the
// usual spare-value cache so the stream state is exactly the engine state
// and serializes losslessly.
class Rng {
public:
    explicit Rng(uint64_t seed = 0) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal.
    double normal() {
        double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n).
    int64_t index(int64_t n) {
        FMGAN_CHECK(n > 0, "Rng::index: n must be positive, got " << n);
        return static_cast<int64_t>(eng_() % static_cast<uint64_t>(n));
    }

    std::string serialize() const {
        std::ostringstream os;
        os << eng_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> eng_;
        FMGAN_CHECK(!is.fail(), "Rng::deserialize: malformed engine state");
    }

    bool operator==(const Rng& other) const { return eng_ == other.eng_; }

private:
    std::mt19937_64 eng_;
};

// Kernel-level parallelism. Work is split into chunks with disjoint output
// ranges; results are bitwise independent of the worker count. Thread count
// is capped by the FMGAN_THREADS environment variable (read once).
int max_threads();

// Runs body(begin, end) over a partition of [0, n). The body for distinct
// chunks must write disjoint outputs. `grain` is the minimum chunk size
// below which everything runs inline on the calling thread.
void parallel_for(int64_t n, int64_t grain, const std::function<void(int64_t, int64_t)>& body);

}  // namespace fmgan
