#pragma once

#include "halo/sim/world.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace halo::rma {

using sim::RankId;

// A read that observed bytes it had no guarantee to see (or a lock misuse).
struct Violation {
    RankId rank = 0;            // the reading (or acquiring) rank
    std::uint64_t window = 0;
    std::size_t offset = 0;
    std::size_t len = 0;
    std::uint64_t read_seq = 0; // per-rank event-log sequence of the read
    std::string missing_sync;

    bool operator==(const Violation&) const = default;
};

struct SyncEvent {
    RankId rank;
    std::uint64_t window;
    std::string_view kind;
    sim::SimTime time;
};

// World-global, append-only sink for violations and observed sync points.
class VisibilityLedger {
public:
    void flag(Violation v) { m_violations.push_back(std::move(v)); }
    void observe(SyncEvent e) { m_syncs.push_back(e); }

    const std::vector<Violation>& violations() const { return m_violations; }
    const std::vector<SyncEvent>& sync_events() const { return m_syncs; }

private:
    std::vector<Violation> m_violations;
    std::vector<SyncEvent> m_syncs;
};

// `rank,window,offset,len,read_seq,missing_sync` per line.
void write_violations(std::ostream& os, const std::vector<Violation>& vs);

// Every violation recorded during a finished world.
std::vector<Violation> consistency_report(const sim::WorldResult& world);

} // namespace halo::rma
