#pragma once

#include <compare>
#include <vector>

namespace bubblecast {

/**
 * Inclusive day range of one bubble, 1-based. Inside a prediction window the
 * days run 1..T over the lookahead; on a full series they index its rows.
 * A valid span has start < end (at least two days).
 */
struct BubbleSpan {
    int start = 0;
    int end = 0;

    [[nodiscard]] int length() const noexcept { return end - start + 1; }
    [[nodiscard]] bool contains(int day) const noexcept { return day >= start && day <= end; }

    friend auto operator<=>(const BubbleSpan&, const BubbleSpan&) = default;
};

/// Number of days shared by two inclusive spans.
[[nodiscard]] inline int overlap_days(const BubbleSpan& a, const BubbleSpan& b) noexcept {
    const int lo = a.start > b.start ? a.start : b.start;
    const int hi = a.end < b.end ? a.end : b.end;
    return hi >= lo ? hi - lo + 1 : 0;
}

using SpanList = std::vector<BubbleSpan>;

}  // namespace bubblecast
