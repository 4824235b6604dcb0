#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace bubblecast {

/// 64-bit FNV-1a; stable across platforms, used for cache keys and config digests.
[[nodiscard]] std::uint64_t fnv1a64(std::string_view bytes,
                                    std::uint64_t basis = 0xcbf29ce484222325ULL);

[[nodiscard]] std::string hex_digest(std::uint64_t value);

/// splitmix64 finalizer.
[[nodiscard]] std::uint64_t mix64(std::uint64_t x);

/// Derives an independent stream seed from a root seed and a stage label.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t root, std::string_view label);

/// Days since 1970-01-01 for an ISO-8601 calendar day, or nullopt if invalid.
[[nodiscard]] std::optional<std::int64_t> parse_iso_day(std::string_view text);

[[nodiscard]] std::string format_iso_day(std::int64_t days_since_epoch);

}  // namespace bubblecast
