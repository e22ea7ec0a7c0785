#pragma once

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <map>

namespace halo::rma {

// Half-open byte intervals mapped to values. Unassigned bytes are absent.
template <class T>
class IntervalMap {
public:
    struct Segment {
        std::size_t end;
        T value;
    };

    void assign(std::size_t lo, std::size_t hi, const T& value)
    {
        if (lo >= hi) return;
        erase(lo, hi);
        auto it = m_segments.emplace(lo, Segment{hi, value}).first;
        // Coalesce with equal neighbours.
        if (it != m_segments.begin()) {
            auto prev = std::prev(it);
            if (prev->second.end == lo && prev->second.value == value) {
                prev->second.end = hi;
                m_segments.erase(it);
                it = prev;
            }
        }
        auto next = std::next(it);
        if (next != m_segments.end() && next->first == it->second.end && next->second.value == value) {
            it->second.end = next->second.end;
            m_segments.erase(next);
        }
    }

    void erase(std::size_t lo, std::size_t hi)
    {
        if (lo >= hi) return;
        split(lo);
        split(hi);
        m_segments.erase(m_segments.lower_bound(lo), m_segments.lower_bound(hi));
    }

    // Calls fn(begin, end, value) for the parts of stored segments inside [lo, hi).
    template <class Fn>
    void for_each(std::size_t lo, std::size_t hi, Fn&& fn) const
    {
        if (lo >= hi) return;
        auto it = m_segments.upper_bound(lo);
        if (it != m_segments.begin()) --it;
        for (; it != m_segments.end() && it->first < hi; ++it) {
            const auto b = std::max(lo, it->first);
            const auto e = std::min(hi, it->second.end);
            if (b < e) fn(b, e, it->second.value);
        }
    }

    template <class Fn>
    void for_each(Fn&& fn) const
    {
        for (const auto& [b, seg] : m_segments) fn(b, seg.end, seg.value);
    }

    bool intersects(std::size_t lo, std::size_t hi) const
    {
        bool hit = false;
        for_each(lo, hi, [&](std::size_t, std::size_t, const T&) { hit = true; });
        return hit;
    }

    void clear() { m_segments.clear(); }
    bool empty() const { return m_segments.empty(); }
    std::size_t segment_count() const { return m_segments.size(); }

private:
    void split(std::size_t at)
    {
        auto it = m_segments.upper_bound(at);
        if (it == m_segments.begin()) return;
        --it;
        if (it->first < at && at < it->second.end) {
            Segment tail{it->second.end, it->second.value};
            it->second.end = at;
            m_segments.emplace(at, tail);
        }
    }

    std::map<std::size_t, Segment> m_segments;
};

struct Unit {
    bool operator==(const Unit&) const = default;
};

using IntervalSet = IntervalMap<Unit>;

} // namespace halo::rma
