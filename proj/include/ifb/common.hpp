#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ifb {

/// Raised when a remote service cannot be reached or times out.
class TransportError : public std::runtime_error {
public:
    TransportError(const std::string& endpoint, const std::string& what)
        : std::runtime_error(endpoint + ": " + what), endpoint_(endpoint) {}

    const std::string& endpoint() const { return endpoint_; }

private:
    std::string endpoint_;
};

/// Raised when a remote service answers with something outside its contract.
class ProtocolError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ─── Text helpers ──────────────────────────────────────────────

/// Number of maximal whitespace-separated runs in `text`.
std::size_t count_words(std::string_view text);

std::vector<std::string> split_words(std::string_view text);

std::string to_lower(std::string_view text);

std::string_view trim_right(std::string_view text);

std::string_view trim(std::string_view text);

/// printf-style "%.1f" with negative zero normalized.
std::string format_fixed(double value, int decimals = 1);

/// Signed form, e.g. "+12.0" / "-1.0".
std::string format_signed(double value, int decimals = 1);

// ─── Deterministic RNG ─────────────────────────────────────────
// mt19937_64 output is fixed by the standard; the draws below avoid the
// implementation-defined std:: distributions so runs are portable.

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform01();

    /// Uniform in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace ifb
