#pragma once

#include "halo/grid/timesteps.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace halo::bench {

using engine::Backend;
using engine::Dims;
using engine::PassiveVariant;

enum class Mode { weak, strong };
std::string_view to_string(Mode m);
Mode parse_mode(std::string_view s);

// One column of the sweep. The passive backend carries its variant so both
// variants can sit in the same report.
struct BackendChoice {
    Backend backend = Backend::p2p;
    PassiveVariant variant = PassiveVariant::adopted;
    bool operator==(const BackendChoice&) const = default;
};
// "passive" takes the configured default variant; "passive_simple" and
// "passive_adopted" pin one.
std::string label(const BackendChoice& b);
std::vector<BackendChoice> parse_backends(std::string_view list, PassiveVariant default_variant);
std::vector<int> parse_int_list(std::string_view list);

struct BenchConfig {
    Mode mode = Mode::weak;
    std::vector<BackendChoice> backends{{Backend::p2p}, {Backend::fence}, {Backend::pscw}, {Backend::passive}};
    std::vector<int> ranks{4, 9, 16};
    Dims local_grid{16, 16, 256};
    Dims global_grid{128, 128, 16};
    int fields = 28;
    int timesteps = 50;
    int rounds = 1;
    std::uint64_t seed = 7;
    // Seeds seed, seed+1, ... are run per cell and averaged.
    int repeats = 3;
    rma::MemoryModel memory_model = rma::MemoryModel::separate;
    bool honor_assertions = false;
    sim::Schedule schedule = sim::Schedule::fifo;
    grid::Imbalance imbalance{};
    bool periodic = true;
    // Test modes.
    engine::Driver driver = engine::Driver::put;
    bool epoch_shift = true;
    bool suppress_win_sync = false;
    std::string csv;
    std::string event_log;

    void validate() const;
};

// Applies one key=value setting using the long flag names (local-grid, honor-assertions, ...).
void apply_setting(BenchConfig& cfg, std::string_view key, std::string_view value);
// One key=value per line; blank lines and lines starting with '#' are skipped.
void apply_config_text(BenchConfig& cfg, std::string_view text);

struct BenchCell {
    Mode mode = Mode::weak;
    BackendChoice backend;
    int ranks = 0;
    int fields = 0;
    // Per-timestep simulated ns, averaged over ranks, steps and seeds.
    double mean_comm_time = 0;
    double min_comm_time = 0;
    double max_comm_time = 0;
    double init_block_time = 0;
    // Control messages per rank per timestep.
    double sync_msgs = 0;
    // Total bytes moved by one run, averaged over seeds.
    std::uint64_t bytes = 0;
    std::size_t violations = 0;
    std::size_t mismatches = 0;
    std::uint64_t field_digest = 0;
};

struct BenchReport {
    std::vector<BenchCell> cells;
    std::size_t violations() const;
    std::size_t mismatches() const;
    bool failed() const { return violations() != 0 || mismatches() != 0; }
};

// Thrown when a cell fails the halo oracle. Carries the cells completed so far
// plus the failing one.
class OracleAbort : public std::runtime_error {
public:
    OracleAbort(const std::string& what, BenchReport partial) : std::runtime_error(what), m_partial(std::move(partial)) {}
    const BenchReport& partial() const { return m_partial; }

private:
    BenchReport m_partial;
};

engine::DecompositionPlan plan_for(const BenchConfig& cfg, int ranks);
BenchReport run_benchmark(const BenchConfig& cfg);

inline constexpr std::string_view csv_header = "mode,backend,ranks,fields,mean_comm_time,init_block_time,sync_msgs,bytes,violations";
void write_csv(const BenchReport& report, std::ostream& os);
void write_csv(const BenchReport& report, const std::string& path);

// Throws std::invalid_argument when fewer than two backends are present.
std::string compare_backends(const BenchReport& report);

} // namespace halo::bench
