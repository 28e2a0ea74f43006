#include "ofp/hash.hpp"

#include <bit>
#include <charconv>

#include "ofp/error.hpp"

namespace ofp {

Fnv1a& Fnv1a::bytes(std::span<const std::byte> data) noexcept {
    for (auto b : data) {
        state_ ^= static_cast<std::uint64_t>(b);
        state_ *= 0x100000001b3ULL;
    }
    return *this;
}

Fnv1a& Fnv1a::str(std::string_view s) noexcept {
    u64(s.size());
    return bytes(std::as_bytes(std::span(s.data(), s.size())));
}

Fnv1a& Fnv1a::u64(std::uint64_t x) noexcept {
    std::byte buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<std::byte>((x >> (8 * i)) & 0xffU);
    return bytes(buf);
}

Fnv1a& Fnv1a::f64(double x) noexcept { return u64(std::bit_cast<std::uint64_t>(x)); }

std::uint64_t hash_sequence(const PulseSequence& seq) {
    Fnv1a h;
    h.str("pulse-sequence/1").f64(seq.delay_t).u64(seq.pulses.size());
    for (const auto& p : seq.pulses) h.f64(p.theta_x).f64(p.theta_y);
    return h.digest();
}

std::uint64_t hash_ensemble_spec(const EnsembleSpec& spec) {
    Fnv1a h;
    h.str("ensemble-spec/1")
        .f64(spec.relaxation.t1)
        .f64(spec.relaxation.t2)
        .f64(spec.center)
        .f64(spec.fwhm)
        .u64(static_cast<std::uint64_t>(spec.n_points))
        .f64(spec.support_halfwidth)
        .f64(spec.rf_scale);
    return h.digest();
}

std::string hex64(std::uint64_t x) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, x >>= 4) out[static_cast<std::size_t>(i)] = kDigits[x & 0xfU];
    return out;
}

std::uint64_t parse_hex64(std::string_view s) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (s.size() != 16 || ec != std::errc{} || ptr != s.data() + s.size())
        throw ParseError("malformed 64-bit hex digest '" + std::string(s) + "'");
    return v;
}

}  // namespace ofp
