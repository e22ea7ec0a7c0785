#pragma once

#include "halo/sim/event_log.hpp"

#include <array>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace halo::engine {

using sim::RankId;

struct Dims {
    int x = 0;
    int y = 0;
    int z = 0;
    bool operator==(const Dims&) const = default;
    long long points() const { return static_cast<long long>(x) * y * z; }
};

// Parses "16x16x256".
Dims parse_dims(std::string_view s);
std::string to_string(const Dims& d);

class DecompositionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// 2-D split over x and y; z is never decomposed. Rank = rx + px * ry.
struct DecompositionPlan {
    Dims global;
    int px = 1;
    int py = 1;
    bool periodic = true;
    int depth = 2;
    std::size_t element_size = 8;

    int n_ranks() const { return px * py; }
    int rx(RankId r) const { return r % px; }
    int ry(RankId r) const { return r / px; }
    RankId rank_at(int x, int y) const { return x + px * y; }
    Dims local_dims(RankId r) const;
    // Global coordinates of the first interior cell.
    Dims local_origin(RankId r) const;
};

// Picks px <= py as close to square as the rank count allows. Remainder
// columns and rows go to the low-index ranks.
DecompositionPlan plan_decomposition(Dims global, int n_ranks, bool periodic = true, int depth = 2);
DecompositionPlan plan_decomposition(Dims global, int px, int py, bool periodic, int depth);
// Fixed local dims per rank; the global grid grows with the rank grid.
DecompositionPlan plan_weak_scaling(Dims local, int n_ranks, bool periodic = true, int depth = 2);

enum class Direction : int { xm, xp, ym, yp, xmym, xmyp, xpym, xpyp };
inline constexpr int n_directions = 8;
inline constexpr std::array<Direction, n_directions> all_directions{
    Direction::xm, Direction::xp, Direction::ym, Direction::yp,
    Direction::xmym, Direction::xmyp, Direction::xpym, Direction::xpyp};

Direction opposite(Direction d);
int dx(Direction d);
int dy(Direction d);
std::string_view to_string(Direction d);

enum class RegionKind { face_x, face_y, corner };
RegionKind region_kind(Direction d);

struct NeighborEntry {
    RankId rank = sim::no_peer;
    RegionKind kind = RegionKind::face_x;
    bool present() const { return rank != sim::no_peer; }
};

// Indexed by Direction.
using NeighborTable = std::array<NeighborEntry, n_directions>;

NeighborTable neighbor_table(const DecompositionPlan& plan, RankId rank);
int neighbor_count(const NeighborTable& t);

struct FieldDescriptor {
    std::string name;
    Dims local;
    std::size_t element_size = 8;
};

// One descriptor per field for the given rank, named field0, field1, ...
std::vector<FieldDescriptor> describe_fields(const DecompositionPlan& plan, RankId rank, int n_fields);

// geometric: corners hold depth*depth columns. thin_corners: corners hold depth columns.
enum class Accounting { geometric, thin_corners };

std::size_t region_bytes(const FieldDescriptor& f, Direction d, int depth, Accounting a = Accounting::geometric);

// Bytes exchanged with each neighbour, summed over fields; zero where there is no neighbour.
std::array<std::size_t, n_directions> halo_region_sizes(const std::vector<FieldDescriptor>& fields, const DecompositionPlan& plan,
                                                       RankId rank, Accounting a = Accounting::geometric);

} // namespace halo::engine
