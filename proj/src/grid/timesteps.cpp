#include "halo/grid/timesteps.hpp"

#include <charconv>
#include <random>
#include <stdexcept>

namespace halo::grid {

SimTime parse_duration(std::string_view s)
{
    struct Unit {
        std::string_view suffix;
        SimTime scale;
    };
    static constexpr Unit units[] = {{"ns", 1}, {"us", 1000}, {"ms", 1000000}, {"s", 1000000000}};
    SimTime scale = 1;
    for (const auto& u : units) {
        if (s.size() > u.suffix.size() && s.substr(s.size() - u.suffix.size()) == u.suffix) {
            scale = u.scale;
            s.remove_suffix(u.suffix.size());
            break;
        }
    }
    SimTime v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || v < 0) throw std::invalid_argument("bad duration: " + std::string(s));
    return v * scale;
}

Imbalance Imbalance::parse(std::string_view s)
{
    if (s.empty() || s == "none") return {};
    const std::string_view prefix = "uniform:";
    if (s.substr(0, prefix.size()) != prefix) throw std::invalid_argument("bad imbalance spec: " + std::string(s));
    s.remove_prefix(prefix.size());
    const auto colon = s.find(':');
    if (colon == std::string_view::npos) throw std::invalid_argument("bad imbalance spec: uniform:" + std::string(s));
    Imbalance im{Kind::uniform, parse_duration(s.substr(0, colon)), parse_duration(s.substr(colon + 1))};
    if (im.hi < im.lo) throw std::invalid_argument("imbalance upper bound below lower bound");
    return im;
}

std::string Imbalance::to_string() const
{
    if (kind == Kind::none) return "none";
    return "uniform:" + std::to_string(lo) + ":" + std::to_string(hi);
}

SimTime Imbalance::draw(std::uint64_t seed, RankId rank, int step) const
{
    if (kind == Kind::none || hi == 0) return 0;
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), static_cast<std::uint32_t>(rank),
                      static_cast<std::uint32_t>(step)};
    std::mt19937_64 rng(seq);
    return std::uniform_int_distribution<SimTime>(lo, hi)(rng);
}

RankRun run_timesteps(sim::Comm& comm, const DecompositionPlan& plan, const TimestepConfig& cfg)
{
    std::vector<Field> fields;
    std::vector<engine::FieldDescriptor> descs;
    for (int f = 0; f < cfg.fields; ++f) {
        fields.push_back(make_field(plan, comm.rank(), f));
        descs.push_back(fields.back().descriptor());
    }
    auto ctx = engine::init_halo_communication(comm, plan, descs, cfg.halo);
    const engine::Packer pack = [&](Direction d, int f, std::span<std::byte> dest) { pack_halo(fields[static_cast<std::size_t>(f)], d, dest); };
    const engine::Unpacker unpack = [&](Direction d, int f, const engine::ReceiveView& v) {
        unpack_halo(fields[static_cast<std::size_t>(f)], d, v);
    };

    RankRun run;
    for (int step = 0; step < cfg.timesteps; ++step) {
        comm.advance(cfg.imbalance.draw(comm.seed(), comm.rank(), step));
        StepStats st;
        const auto before = comm.counters();
        for (int round = 0; round < cfg.rounds_per_step; ++round) {
            const auto t0 = comm.now();
            ctx.initiate(pack);
            const auto t1 = comm.now();
            ctx.complete(unpack);
            const auto t2 = comm.now();
            st.initiate_block += t1 - t0;
            st.complete_block += t2 - t1;
            st.comm_time += t2 - t0;
        }
        const auto& after = comm.counters();
        st.sync_msgs = after.control_msgs - before.control_msgs;
        st.bytes = (after.data_bytes + after.control_bytes) - (before.data_bytes + before.control_bytes);
        for (const auto& f : fields) {
            auto ms = verify_halos(f, plan);
            if (!ms.empty() && cfg.abort_on_mismatch)
                throw OracleFailure("step " + std::to_string(step) + " field " + std::to_string(f.index()) + ": " + std::to_string(ms.size()) +
                                    " halo mismatches, first " + describe(ms.front()));
            st.mismatches += ms.size();
        }
        run.steps.push_back(st);
    }
    ctx.finalise();
    run.allocations = ctx.allocations();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& f : fields) h = digest(f, h);
    run.field_digest = h;
    return run;
}

std::size_t WorldRun::mismatches() const
{
    std::size_t n = 0;
    for (const auto& r : ranks)
        for (const auto& s : r.steps) n += s.mismatches;
    return n;
}

std::uint64_t WorldRun::field_digest() const
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& r : ranks) h = sim::fnv1a(&r.field_digest, sizeof r.field_digest, h);
    return h;
}

WorldRun run_world(const sim::TransportConfig& transport, const DecompositionPlan& plan, const TimestepConfig& cfg)
{
    WorldRun out;
    out.ranks.resize(static_cast<std::size_t>(transport.n_ranks));
    out.world = sim::spawn_world(transport, [&](sim::Comm& c) { out.ranks[static_cast<std::size_t>(c.rank())] = run_timesteps(c, plan, cfg); });
    out.violations = rma::consistency_report(out.world);
    return out;
}

} // namespace halo::grid
