#pragma once

#include "halo/engine/halo_swap.hpp"
#include "halo/grid/field.hpp"
#include "halo/rma/ledger.hpp"
#include "halo/sim/world.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace halo::grid {

using sim::SimTime;

// Simulated compute before each step's swaps, drawn per (seed, rank, step).
struct Imbalance {
    enum class Kind { none, uniform } kind = Kind::none;
    SimTime lo = 0;
    SimTime hi = 0;

    // "none" or "uniform:LO:HI" with optional ns/us/ms/s suffixes (default ns).
    static Imbalance parse(std::string_view s);
    std::string to_string() const;
    SimTime draw(std::uint64_t seed, RankId rank, int step) const;
};

SimTime parse_duration(std::string_view s);

struct TimestepConfig {
    int fields = 1;
    int timesteps = 1;
    int rounds_per_step = 1;
    Imbalance imbalance{};
    engine::HaloOptions halo{};
    // Throw on the first step whose halos fail verification.
    bool abort_on_mismatch = true;
};

struct StepStats {
    SimTime comm_time = 0;
    SimTime initiate_block = 0;
    SimTime complete_block = 0;
    std::uint64_t sync_msgs = 0;
    std::uint64_t bytes = 0;
    std::size_t mismatches = 0;
};

struct RankRun {
    std::vector<StepStats> steps;
    std::uint64_t field_digest = 0;
    std::uint64_t allocations = 0;
};

class OracleFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Runs on one rank: init, timesteps x rounds swaps over every field, finalise.
RankRun run_timesteps(sim::Comm& comm, const DecompositionPlan& plan, const TimestepConfig& cfg);

struct WorldRun {
    std::vector<RankRun> ranks;
    sim::WorldResult world;
    std::vector<rma::Violation> violations;

    std::size_t mismatches() const;
    // Combined digest of every rank's fields.
    std::uint64_t field_digest() const;
};

WorldRun run_world(const sim::TransportConfig& transport, const DecompositionPlan& plan, const TimestepConfig& cfg);

} // namespace halo::grid
