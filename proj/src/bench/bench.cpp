#include "halo/bench/bench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace halo::bench {

std::string_view to_string(Mode m) { return m == Mode::weak ? "weak" : "strong"; }

Mode parse_mode(std::string_view s)
{
    if (s == "weak") return Mode::weak;
    if (s == "strong") return Mode::strong;
    throw std::invalid_argument("unknown mode: " + std::string(s));
}

std::string label(const BackendChoice& b)
{
    if (b.backend == Backend::passive && b.variant == PassiveVariant::simple) return "passive_simple";
    return std::string(engine::to_string(b.backend));
}

namespace {

std::vector<std::string_view> split(std::string_view s, char sep)
{
    std::vector<std::string_view> out;
    while (true) {
        const auto p = s.find(sep);
        out.push_back(s.substr(0, p));
        if (p == std::string_view::npos) break;
        s.remove_prefix(p + 1);
    }
    return out;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <class T>
T parse_number(std::string_view s, std::string_view what)
{
    s = trim(s);
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("bad " + std::string(what) + ": " + std::string(s));
    return v;
}

bool parse_bool(std::string_view s)
{
    s = trim(s);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument("bad boolean: " + std::string(s));
}

} // namespace

std::vector<BackendChoice> parse_backends(std::string_view list, PassiveVariant default_variant)
{
    std::vector<BackendChoice> out;
    for (auto tok : split(list, ',')) {
        tok = trim(tok);
        BackendChoice b;
        if (tok == "passive_simple") {
            b = {Backend::passive, PassiveVariant::simple};
        } else if (tok == "passive_adopted") {
            b = {Backend::passive, PassiveVariant::adopted};
        } else {
            b.backend = engine::parse_backend(tok);
            if (b.backend == Backend::passive) b.variant = default_variant;
        }
        if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
    }
    return out;
}

std::vector<int> parse_int_list(std::string_view list)
{
    std::vector<int> out;
    for (auto tok : split(list, ',')) out.push_back(parse_number<int>(tok, "rank count"));
    return out;
}

void BenchConfig::validate() const
{
    if (backends.empty()) throw std::invalid_argument("no backends selected");
    if (ranks.empty()) throw std::invalid_argument("no rank counts selected");
    for (int r : ranks)
        if (r < 1) throw std::invalid_argument("rank counts must be positive");
    if (fields < 1) throw std::invalid_argument("fields must be >= 1");
    if (timesteps < 0 || rounds < 1 || repeats < 1) throw std::invalid_argument("timesteps >= 0, rounds >= 1 and repeats >= 1 required");
    for (const auto& b : backends)
        if (driver == engine::Driver::get && b.backend != Backend::fence)
            throw std::invalid_argument("the get driver only exists for the fence backend");
}

void apply_setting(BenchConfig& cfg, std::string_view key, std::string_view value)
{
    key = trim(key);
    value = trim(value);
    if (key == "mode") {
        cfg.mode = parse_mode(value);
    } else if (key == "backend" || key == "backends") {
        cfg.backends = parse_backends(value, PassiveVariant::adopted);
    } else if (key == "ranks") {
        cfg.ranks = parse_int_list(value);
    } else if (key == "local-grid") {
        cfg.local_grid = engine::parse_dims(value);
    } else if (key == "global-grid") {
        cfg.global_grid = engine::parse_dims(value);
    } else if (key == "fields") {
        cfg.fields = parse_number<int>(value, "fields");
    } else if (key == "timesteps") {
        cfg.timesteps = parse_number<int>(value, "timesteps");
    } else if (key == "rounds") {
        cfg.rounds = parse_number<int>(value, "rounds");
    } else if (key == "seed") {
        cfg.seed = parse_number<std::uint64_t>(value, "seed");
    } else if (key == "repeats") {
        cfg.repeats = parse_number<int>(value, "repeats");
    } else if (key == "memory-model") {
        cfg.memory_model = rma::parse_memory_model(value);
    } else if (key == "honor-assertions") {
        cfg.honor_assertions = parse_bool(value);
    } else if (key == "schedule") {
        cfg.schedule = sim::parse_schedule(value);
    } else if (key == "passive-variant") {
        const auto v = engine::parse_passive_variant(value);
        for (auto& b : cfg.backends)
            if (b.backend == Backend::passive) b.variant = v;
    } else if (key == "imbalance") {
        cfg.imbalance = grid::Imbalance::parse(value);
    } else if (key == "periodic") {
        cfg.periodic = parse_bool(value);
    } else if (key == "get-driver") {
        cfg.driver = parse_bool(value) ? engine::Driver::get : engine::Driver::put;
    } else if (key == "naive-epochs") {
        cfg.epoch_shift = !parse_bool(value);
    } else if (key == "suppress-win-sync") {
        cfg.suppress_win_sync = parse_bool(value);
    } else if (key == "csv") {
        cfg.csv = std::string(value);
    } else if (key == "event-log") {
        cfg.event_log = std::string(value);
    } else {
        throw std::invalid_argument("unknown setting: " + std::string(key));
    }
}

void apply_config_text(BenchConfig& cfg, std::string_view text)
{
    int line_no = 0;
    for (auto line : split(text, '\n')) {
        ++line_no;
        line = trim(line);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw std::invalid_argument("line " + std::to_string(line_no) + ": expected key=value");
        apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
    }
}

std::size_t BenchReport::violations() const
{
    std::size_t n = 0;
    for (const auto& c : cells) n += c.violations;
    return n;
}

std::size_t BenchReport::mismatches() const
{
    std::size_t n = 0;
    for (const auto& c : cells) n += c.mismatches;
    return n;
}

engine::DecompositionPlan plan_for(const BenchConfig& cfg, int ranks)
{
    if (cfg.mode == Mode::weak) return engine::plan_weak_scaling(cfg.local_grid, ranks, cfg.periodic);
    return engine::plan_decomposition(cfg.global_grid, ranks, cfg.periodic);
}

namespace {

grid::TimestepConfig timestep_config(const BenchConfig& cfg, const BackendChoice& b)
{
    grid::TimestepConfig t;
    t.fields = cfg.fields;
    t.timesteps = cfg.timesteps;
    t.rounds_per_step = cfg.rounds;
    t.imbalance = cfg.imbalance;
    t.halo.backend = b.backend;
    t.halo.passive_variant = b.variant;
    t.halo.rma.memory_model = cfg.memory_model;
    t.halo.rma.honor_assertions = cfg.honor_assertions;
    t.halo.epoch_shift = cfg.epoch_shift;
    t.halo.driver = cfg.driver;
    t.halo.suppress_win_sync = cfg.suppress_win_sync;
    t.abort_on_mismatch = false;
    return t;
}

} // namespace

BenchReport run_benchmark(const BenchConfig& cfg)
{
    cfg.validate();
    std::ofstream log;
    if (!cfg.event_log.empty()) {
        log.open(cfg.event_log);
        if (!log) throw std::runtime_error("cannot write event log " + cfg.event_log);
    }

    BenchReport report;
    for (int ranks : cfg.ranks) {
        const auto plan = plan_for(cfg, ranks);
        for (const auto& b : cfg.backends) {
            const auto tcfg = timestep_config(cfg, b);
            BenchCell cell{cfg.mode, b, ranks, cfg.fields};
            double comm_sum = 0, block_sum = 0, sync_sum = 0;
            std::uint64_t bytes_sum = 0, samples = 0;
            cell.min_comm_time = std::numeric_limits<double>::max();
            cell.max_comm_time = 0;
            for (int rep = 0; rep < cfg.repeats; ++rep) {
                sim::TransportConfig tc;
                tc.n_ranks = ranks;
                tc.seed = cfg.seed + static_cast<std::uint64_t>(rep);
                tc.schedule = cfg.schedule;
                if (cfg.schedule != sim::Schedule::fifo) tc.latency.jitter_fraction = 0.5;
                tc.record_log = log.is_open();
                auto run = grid::run_world(tc, plan, tcfg);
                cell.violations += run.violations.size();
                cell.mismatches += run.mismatches();
                cell.field_digest = run.field_digest();
                if (log.is_open()) {
                    log << "# " << to_string(cfg.mode) << ' ' << label(b) << " ranks=" << ranks << " seed=" << tc.seed << '\n';
                    run.world.log.write(log);
                }
                for (int s = 0; s < cfg.timesteps; ++s) {
                    double step_comm = 0;
                    for (const auto& r : run.ranks) {
                        const auto& st = r.steps[static_cast<std::size_t>(s)];
                        step_comm += static_cast<double>(st.comm_time);
                        block_sum += static_cast<double>(st.initiate_block);
                        sync_sum += static_cast<double>(st.sync_msgs);
                        bytes_sum += st.bytes;
                        ++samples;
                    }
                    comm_sum += step_comm;
                    step_comm /= ranks;
                    cell.min_comm_time = std::min(cell.min_comm_time, step_comm);
                    cell.max_comm_time = std::max(cell.max_comm_time, step_comm);
                }
            }
            if (samples != 0) {
                const auto n = static_cast<double>(samples);
                cell.mean_comm_time = comm_sum / n;
                cell.init_block_time = block_sum / n;
                cell.sync_msgs = sync_sum / n;
            } else {
                cell.min_comm_time = 0;
            }
            cell.bytes = bytes_sum / static_cast<std::uint64_t>(cfg.repeats);
            report.cells.push_back(cell);
            if (cell.mismatches != 0)
                throw OracleAbort(label(b) + " at " + std::to_string(ranks) + " ranks: " + std::to_string(cell.mismatches) + " halo mismatches",
                                  report);
        }
    }
    return report;
}

namespace {

std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

void write_csv(const BenchReport& report, std::ostream& os)
{
    os << csv_header << '\n';
    for (const auto& c : report.cells) {
        os << to_string(c.mode) << ',' << label(c.backend) << ',' << c.ranks << ',' << c.fields << ',' << fixed(c.mean_comm_time, 3) << ','
           << fixed(c.init_block_time, 3) << ',' << fixed(c.sync_msgs, 3) << ',' << c.bytes << ',' << c.violations << '\n';
    }
}

void write_csv(const BenchReport& report, const std::string& path)
{
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_csv(report, os);
    if (!os) throw std::runtime_error("write failed: " + path);
}

std::string compare_backends(const BenchReport& report)
{
    std::vector<std::string> labels;
    for (const auto& c : report.cells)
        if (std::find(labels.begin(), labels.end(), label(c.backend)) == labels.end()) labels.push_back(label(c.backend));
    if (labels.size() < 2) throw std::invalid_argument("need at least two backends to compare");

    std::map<int, std::vector<const BenchCell*>> by_ranks;
    for (const auto& c : report.cells) by_ranks[c.ranks].push_back(&c);

    std::ostringstream os;
    for (auto& [ranks, cells] : by_ranks) {
        std::stable_sort(cells.begin(), cells.end(), [](auto* a, auto* b) { return a->mean_comm_time < b->mean_comm_time; });
        const BenchCell* base = nullptr;
        for (auto* c : cells)
            if (c->backend.backend == Backend::p2p) base = c;
        os << "ranks " << ranks << ":";
        for (auto* c : cells) os << ' ' << label(c->backend) << '=' << fixed(c->mean_comm_time, 1);
        os << '\n';
        if (!base) {
            os << "  no p2p baseline\n";
            continue;
        }
        for (auto* c : cells) {
            if (c == base) continue;
            const double delta = base->mean_comm_time == 0 ? 0.0 : (base->mean_comm_time - c->mean_comm_time) / base->mean_comm_time * 100.0;
            os << "  " << label(c->backend) << ' ' << fixed(std::abs(delta), 1) << (delta < 0 ? "% slower than p2p" : "% faster than p2p") << '\n';
        }
    }
    return os.str();
}

} // namespace halo::bench
