#pragma once

#include "gridqcd/region.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace gridqcd {

using RegionPtr = std::shared_ptr<const CriticalRegion>;

/// Finite collection of critical regions for one market structure.
///
/// Copies share the (immutable) regions; lookup order and online additions
/// are per copy. One owner per copy; see ConcurrentAtlas for shared use.
class RegionAtlas {
public:
    RegionAtlas() = default;
    RegionAtlas(std::string structure_id, std::uint64_t qp_hash)
        : structure_id_(std::move(structure_id)), qp_hash_(qp_hash) {}

    [[nodiscard]] const std::string& structure_id() const { return structure_id_; }
    [[nodiscard]] std::uint64_t qp_hash() const { return qp_hash_; }
    [[nodiscard]] std::size_t size() const { return regions_.size(); }
    [[nodiscard]] bool empty() const { return regions_.empty(); }
    [[nodiscard]] const std::vector<RegionPtr>& regions() const { return regions_; }
    [[nodiscard]] const CriticalRegion& region(std::size_t i) const { return *regions_[i]; }
    /// Region indices, most recently hit first.
    [[nodiscard]] const std::vector<std::size_t>& lookup_order() const { return order_; }

    /// Samples rejected during construction (degenerate regions), when
    /// quarantining is enabled.
    [[nodiscard]] const std::vector<Vector>& quarantined() const { return quarantined_; }
    void quarantine(Vector sample) { quarantined_.push_back(std::move(sample)); }

    /// First region in lookup order containing xi, without reordering.
    [[nodiscard]] const CriticalRegion* find(const Vector& xi, double tol) const;
    /// Same as find, but moves the hit to the front of the lookup order.
    const CriticalRegion* find_and_touch(const Vector& xi, double tol);
    /// Moves region `index` to the front of the lookup order.
    void touch(std::size_t index);

    /// True if a region with this exact active set is present.
    [[nodiscard]] bool has_active_set(const std::vector<Eigen::Index>& active) const;

    /// Appends a region, assigning the next id. Returns it.
    /// Throws InputError if a region with the same active set exists.
    const CriticalRegion& add(CriticalRegion region);

private:
    std::string structure_id_ = "nominal";
    std::uint64_t qp_hash_ = 0;
    std::vector<RegionPtr> regions_;
    std::vector<std::size_t> order_;
    std::vector<Vector> quarantined_;
};

struct AtlasOptions {
    RegionOptions region;
    /// Keep going when a sample yields a degenerate region, recording it.
    bool quarantine_degenerate = true;
    /// Samples solved per parallel batch. Results do not depend on it.
    std::size_t batch_size = 64;
    /// 0 means std::thread::hardware_concurrency().
    unsigned threads = 0;
};

/// Sampling-based region discovery: every sample not already covered by a
/// region is solved and its region appended.
RegionAtlas build_atlas(const MarketQP& qp, const std::vector<Vector>& samples, const AtlasOptions& options = {});

/// Region containing xi; discovers and appends a new region when none does.
const CriticalRegion& locate(RegionAtlas& atlas, const MarketQP& qp, const Vector& xi, const RegionOptions& options = {});

/// Thread-safe wrapper: concurrent lookups under a shared lock, online
/// insertion under an exclusive lock. Lookups do not reorder.
class ConcurrentAtlas {
public:
    explicit ConcurrentAtlas(RegionAtlas atlas) : atlas_(std::move(atlas)) {}
    RegionPtr locate(const MarketQP& qp, const Vector& xi, const RegionOptions& options = {});
    [[nodiscard]] std::size_t size() const;
    [[nodiscard]] RegionAtlas snapshot() const;

private:
    mutable std::shared_mutex mutex_;
    RegionAtlas atlas_;
};

/// Perturbation box for the sampling plan.
struct PerturbationBox {
    Vector lower;
    Vector upper;

    [[nodiscard]] Eigen::Index dim() const { return lower.size(); }
    /// Indices with a non-degenerate interval.
    [[nodiscard]] std::vector<Eigen::Index> free_dims() const;
    [[nodiscard]] Vector clamp(const Vector& xi) const { return xi.cwiseMax(lower).cwiseMin(upper); }
};

/// Default plan: a 101 x 101 grid when exactly two dimensions are free,
/// otherwise `random_count` uniform points from a seeded generator.
std::vector<Vector> sampling_plan(const PerturbationBox& box, std::size_t grid_points = 101,
                                  std::size_t random_count = 10000, std::uint64_t seed = 1);

/// Vertices (counter-clockwise) of the region's slice through `base` in
/// the plane of dimensions (dim_x, dim_y), clipped to the box.
std::vector<std::pair<double, double>> region_polygon(const CriticalRegion& region, const PerturbationBox& box,
                                                      Eigen::Index dim_x, Eigen::Index dim_y, const Vector& base);

nlohmann::json atlas_to_json(const RegionAtlas& atlas);
RegionAtlas atlas_from_json(const nlohmann::json& doc);

/// Cache file path for a QP inside `dir`, keyed by the QP content hash.
std::filesystem::path atlas_cache_path(const std::filesystem::path& dir, const MarketQP& qp);
void save_atlas(const RegionAtlas& atlas, const std::filesystem::path& path);
/// Loads a cached atlas. Throws IoError if missing and InputError if the
/// file is for a different QP (hash mismatch) or has an unknown version.
RegionAtlas load_atlas(const std::filesystem::path& path, const MarketQP& qp);

}  // namespace gridqcd
