// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion; exit status
// is the number of failures. Pass criterion numbers to run a subset.

#include "halo/bench/bench.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <set>
#include <sstream>
#include <string>

using namespace halo;
using engine::Backend;
using engine::Dims;
using engine::PassiveVariant;
using sim::Schedule;

namespace {

const std::vector<Backend> all_backends{Backend::p2p, Backend::fence, Backend::pscw, Backend::passive};
const int desk_ranks[] = {1, 2, 4, 9, 16, 25, 36};

sim::TransportConfig transport(int n, std::uint64_t seed, Schedule s = Schedule::fifo, bool log = false)
{
    sim::TransportConfig t;
    t.n_ranks = n;
    t.seed = seed;
    t.schedule = s;
    if (s != Schedule::fifo) t.latency.jitter_fraction = 0.5;
    t.record_log = log;
    return t;
}

grid::TimestepConfig steps(Backend b, int fields, int timesteps)
{
    grid::TimestepConfig c;
    c.fields = fields;
    c.timesteps = timesteps;
    c.halo.backend = b;
    return c;
}

std::string name_of(Backend b) { return std::string(engine::to_string(b)); }

struct Outcome {
    bool pass = true;
    std::string detail;
    void fail(const std::string& why)
    {
        if (pass) detail = why;
        pass = false;
    }
};

// 1. Every backend, memory model, rank count, boundary and field count keeps halos bitwise exact.
Outcome halo_oracle()
{
    Outcome o;
    int worlds = 0;
    for (auto b : all_backends)
        for (auto model : {rma::MemoryModel::separate, rma::MemoryModel::unified})
            for (int n : {1, 2, 4, 9, 16, 25})
                for (bool periodic : {true, false})
                    for (int fields : {1, 28}) {
                        const auto plan = engine::plan_weak_scaling({8, 8, 16}, n, periodic);
                        auto cfg = steps(b, fields, 10);
                        cfg.halo.rma.memory_model = model;
                        cfg.abort_on_mismatch = false;
                        auto run = grid::run_world(transport(n, 11 + static_cast<std::uint64_t>(n), Schedule::seeded_random), plan, cfg);
                        ++worlds;
                        if (run.mismatches() != 0 || !run.violations.empty())
                            o.fail(name_of(b) + "/" + std::string(rma::to_string(model)) + " n=" + std::to_string(n) +
                                   (periodic ? " periodic" : " open") + " fields=" + std::to_string(fields) + ": " +
                                   std::to_string(run.mismatches()) + " mismatches, " + std::to_string(run.violations.size()) + " violations");
                    }
    if (o.pass) o.detail = std::to_string(worlds) + " worlds x 10 steps, 0 mismatches";
    return o;
}

// 2. Message-size accounting.
Outcome accounting()
{
    Outcome o;
    const auto weak = engine::plan_decomposition({16, 16, 256}, 1);
    const auto fields = engine::describe_fields(weak, 0, 1);
    const auto thin = engine::halo_region_sizes(fields, weak, 0, engine::Accounting::thin_corners);
    for (auto d : {engine::Direction::xm, engine::Direction::xp, engine::Direction::ym, engine::Direction::yp})
        if (thin[static_cast<int>(d)] != 65536) o.fail("face " + std::string(engine::to_string(d)) + " = " + std::to_string(thin[static_cast<int>(d)]));
    for (auto d : {engine::Direction::xmym, engine::Direction::xmyp, engine::Direction::xpym, engine::Direction::xpyp})
        if (thin[static_cast<int>(d)] != 4096) o.fail("corner " + std::string(engine::to_string(d)) + " = " + std::to_string(thin[static_cast<int>(d)]));
    if (weak.local_dims(0).points() != 65536) o.fail("weak local points " + std::to_string(weak.local_dims(0).points()));

    const auto strong = engine::plan_decomposition({2048, 2048, 128}, 2048);
    for (int r = 0; r < strong.n_ranks(); ++r)
        if (strong.local_dims(r).points() != 262144) {
            o.fail("rank " + std::to_string(r) + " holds " + std::to_string(strong.local_dims(r).points()) + " points");
            break;
        }
    if (o.pass) o.detail = "face 65536 B, corner 4096 B, 2048 ranks x 262144 points";
    return o;
}

// 3. Get-driven fence with honoured assertions is caught; the put-driven program never is.
Outcome get_driven_fence()
{
    Outcome o;
    const auto plan = engine::plan_weak_scaling({8, 8, 4}, 4);
    auto cfg = steps(Backend::fence, 1, 3);
    cfg.halo.rma.honor_assertions = true;
    cfg.halo.epoch_shift = false;
    cfg.imbalance = grid::Imbalance::parse("uniform:0:20us");
    cfg.abort_on_mismatch = false;

    cfg.halo.driver = engine::Driver::get;
    int first = -1;
    for (int seed = 0; seed < 100 && first < 0; ++seed)
        if (!grid::run_world(transport(4, static_cast<std::uint64_t>(seed), Schedule::adversarial), plan, cfg).violations.empty()) first = seed;
    if (first < 0) o.fail("get-driven: no violation in 100 seeds");

    cfg.halo.driver = engine::Driver::put;
    for (int seed = 0; seed < 1000; ++seed) {
        auto run = grid::run_world(transport(4, static_cast<std::uint64_t>(seed), Schedule::adversarial), plan, cfg);
        if (!run.violations.empty() || run.mismatches() != 0) {
            o.fail("put-driven seed " + std::to_string(seed) + ": " + std::to_string(run.violations.size()) + " violations");
            break;
        }
    }
    if (o.pass) o.detail = "get-driven flagged at seed " + std::to_string(first) + ", put-driven clean over 1000 seeds";
    return o;
}

// 4. win_sync is required under the separate model only.
Outcome win_sync_necessity()
{
    Outcome o;
    const auto plan = engine::plan_weak_scaling({8, 8, 4}, 4);
    auto cfg = steps(Backend::passive, 1, 3);
    cfg.abort_on_mismatch = false;

    cfg.halo.suppress_win_sync = true;
    int first = -1;
    for (int seed = 0; seed < 100; ++seed) {
        cfg.halo.rma.memory_model = rma::MemoryModel::separate;
        if (first < 0 && !grid::run_world(transport(4, static_cast<std::uint64_t>(seed), Schedule::adversarial), plan, cfg).violations.empty())
            first = seed;
        cfg.halo.rma.memory_model = rma::MemoryModel::unified;
        auto unified = grid::run_world(transport(4, static_cast<std::uint64_t>(seed), Schedule::adversarial), plan, cfg);
        if (!unified.violations.empty() || unified.mismatches() != 0) o.fail("unified without win_sync flagged at seed " + std::to_string(seed));
    }
    if (first < 0) o.fail("separate without win_sync: no violation in 100 seeds");

    cfg.halo.suppress_win_sync = false;
    cfg.halo.rma.memory_model = rma::MemoryModel::separate;
    for (int seed = 0; seed < 1000; ++seed) {
        auto run = grid::run_world(transport(4, static_cast<std::uint64_t>(seed), Schedule::adversarial), plan, cfg);
        if (!run.violations.empty() || run.mismatches() != 0) {
            o.fail("with win_sync, seed " + std::to_string(seed) + " flagged");
            break;
        }
    }
    if (o.pass) o.detail = "suppressed: separate flagged at seed " + std::to_string(first) + ", unified clean; enabled: clean over 1000 seeds";
    return o;
}

// 5. All backends produce identical fields after 50 steps on every desk-scale topology.
Outcome cross_backend()
{
    Outcome o;
    for (int n : desk_ranks)
        for (bool periodic : {true, false}) {
            const auto plan = engine::plan_weak_scaling({8, 8, 4}, n, periodic);
            std::uint64_t reference = 0;
            for (auto b : all_backends)
                for (auto v : {PassiveVariant::adopted, PassiveVariant::simple}) {
                    if (b != Backend::passive && v == PassiveVariant::simple) continue;
                    auto cfg = steps(b, 2, 50);
                    cfg.halo.passive_variant = v;
                    auto run = grid::run_world(transport(n, 5, Schedule::seeded_random), plan, cfg);
                    const auto h = run.field_digest();
                    if (b == Backend::p2p) reference = h;
                    else if (h != reference) o.fail(name_of(b) + " differs from p2p at n=" + std::to_string(n) + (periodic ? " periodic" : " open"));
                }
        }
    if (o.pass) o.detail = "p2p, fence, pscw, passive (both variants) agree on 7 topologies x 2 boundaries";
    return o;
}

double mean_initiate_block(const grid::WorldRun& run)
{
    double sum = 0, n = 0;
    for (const auto& r : run.ranks)
        for (const auto& s : r.steps) {
            sum += static_cast<double>(s.initiate_block);
            ++n;
        }
    return n == 0 ? 0 : sum / n;
}

// 6. Epoch shifting lowers blocking in initiate under imbalance, paired per seed.
Outcome epoch_shift()
{
    Outcome o;
    const auto plan = engine::plan_weak_scaling({8, 8, 4}, 16);
    auto cfg = steps(Backend::fence, 1, 10);
    cfg.imbalance = grid::Imbalance::parse("uniform:0:10ms");
    double worst_ratio = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        cfg.halo.epoch_shift = true;
        const auto shifted = mean_initiate_block(grid::run_world(transport(16, seed), plan, cfg));
        cfg.halo.epoch_shift = false;
        const auto naive = mean_initiate_block(grid::run_world(transport(16, seed), plan, cfg));
        if (!(shifted < naive)) o.fail("seed " + std::to_string(seed) + ": shifted " + std::to_string(shifted) + " >= naive " + std::to_string(naive));
        worst_ratio = std::max(worst_ratio, naive > 0 ? shifted / naive : 1.0);
    }
    if (o.pass) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "fence, 16 ranks, 10 seeds; worst shifted/naive ratio %.3f", worst_ratio);
        o.detail = buf;
    }
    return o;
}

// 7. Adopted passive synchronisation beats the simple variant on messages and time.
// Time is compared under the latency-model schedules; the adversarial schedule
// charges validator noise per call, so there only message counts are compared.
Outcome passive_variants()
{
    Outcome o;
    int cells = 0;
    for (int n : {9, 16, 25})
        for (auto sched : {Schedule::fifo, Schedule::seeded_random, Schedule::adversarial})
            for (std::uint64_t seed = 0; seed < 10; ++seed) {
                const auto plan = engine::plan_weak_scaling({8, 8, 4}, n);
                double msgs[2] = {}, time[2] = {};
                for (int v = 0; v < 2; ++v) {
                    auto cfg = steps(Backend::passive, 1, 5);
                    cfg.halo.passive_variant = v == 0 ? PassiveVariant::adopted : PassiveVariant::simple;
                    auto run = grid::run_world(transport(n, seed, sched), plan, cfg);
                    for (const auto& r : run.ranks)
                        for (const auto& s : r.steps) {
                            msgs[v] += static_cast<double>(s.sync_msgs);
                            time[v] += static_cast<double>(s.comm_time);
                        }
                }
                ++cells;
                const bool timed = sched != Schedule::adversarial;
                if (!(msgs[0] < msgs[1]) || (timed && !(time[0] < time[1])))
                    o.fail("n=" + std::to_string(n) + " " + std::string(sim::to_string(sched)) + " seed " + std::to_string(seed) + ": adopted msgs " +
                           std::to_string(msgs[0]) + " time " + std::to_string(time[0]) + ", simple msgs " + std::to_string(msgs[1]) + " time " +
                           std::to_string(time[1]));
            }
    if (o.pass) o.detail = std::to_string(cells) + " paired runs at 9, 16, 25 ranks; time compared under fifo and random";
    return o;
}

// 8. Same config and seed gives byte-identical logs and CSV.
Outcome determinism()
{
    Outcome o;
    for (auto b : all_backends) {
        const auto plan = engine::plan_weak_scaling({8, 8, 4}, 9);
        auto cfg = steps(b, 2, 4);
        cfg.imbalance = grid::Imbalance::parse("uniform:0:30us");
        std::string first;
        for (int rep = 0; rep < 3; ++rep) {
            auto log = grid::run_world(transport(9, 42, Schedule::adversarial, true), plan, cfg).world.log.to_string();
            if (rep == 0) first = log;
            else if (log != first) o.fail(name_of(b) + " event log differs on repeat " + std::to_string(rep));
        }
        if (first.empty()) o.fail(name_of(b) + " event log is empty");
    }

    bench::BenchConfig bc;
    bc.ranks = {4, 9};
    bc.local_grid = {8, 8, 4};
    bc.fields = 2;
    bc.timesteps = 3;
    bc.schedule = Schedule::adversarial;
    bc.backends = bench::parse_backends("p2p,fence,pscw,passive,passive_simple", PassiveVariant::adopted);
    std::string first;
    for (int rep = 0; rep < 3; ++rep) {
        std::ostringstream os;
        bench::write_csv(bench::run_benchmark(bc), os);
        if (rep == 0) first = os.str();
        else if (os.str() != first) o.fail("CSV differs on repeat " + std::to_string(rep));
    }
    if (o.pass) o.detail = "4 backends x 3 event logs, 3 CSVs identical";
    return o;
}

// 9. Zero-copy unpack allocates nothing; the copy-out reference allocates per region.
Outcome zero_copy()
{
    Outcome o;
    const int swaps = 5;
    const auto plan = engine::plan_weak_scaling({8, 8, 4}, 9);
    std::uint64_t min_copy = ~0ULL;
    for (auto b : {Backend::fence, Backend::pscw, Backend::passive}) {
        auto cfg = steps(b, 1, swaps);
        auto zero = grid::run_world(transport(9, 1), plan, cfg);
        for (const auto& r : zero.ranks)
            if (r.allocations != 0) o.fail(name_of(b) + " zero-copy made " + std::to_string(r.allocations) + " allocations");
        cfg.halo.unpack_path = engine::UnpackPath::copy_out;
        auto copied = grid::run_world(transport(9, 1), plan, cfg);
        for (const auto& r : copied.ranks) {
            const auto per_swap = r.allocations / swaps;
            min_copy = std::min(min_copy, per_swap);
            if (per_swap < 8) o.fail(name_of(b) + " copy-out made only " + std::to_string(per_swap) + " allocations per swap");
        }
        if (copied.mismatches() != 0) o.fail(name_of(b) + " copy-out path corrupted halos");
    }
    if (o.pass) o.detail = "zero-copy 0 per swap, copy-out >= " + std::to_string(min_copy) + " per swap";
    return o;
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*run)();
};

const Criterion criteria[] = {
    {1, "halo-correctness oracle", halo_oracle},
    {2, "message-size accounting", accounting},
    {3, "get-driven fence consistency bug", get_driven_fence},
    {4, "separate-model win_sync necessity", win_sync_necessity},
    {5, "cross-backend equivalence", cross_backend},
    {6, "epoch-shift benefit", epoch_shift},
    {7, "passive variant comparison", passive_variants},
    {8, "determinism", determinism},
    {9, "zero-copy audit", zero_copy},
};

} // namespace

int main(int argc, char** argv)
{
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    return failures;
}
