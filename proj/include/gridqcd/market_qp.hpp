#pragma once

#include "gridqcd/network.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace gridqcd {

enum class RowKind { Balance, FlowUpper, FlowLower, GenUpper, ShedUpper, GenLower, ShedLower };

/// Tag of one constraint row. `element` is the index of the line, generator
/// or load in the originating NetworkCase (unused for the balance row).
struct RowLabel {
    RowKind kind = RowKind::Balance;
    std::size_t element = 0;

    [[nodiscard]] bool is_flow() const { return kind == RowKind::FlowUpper || kind == RowKind::FlowLower; }
    [[nodiscard]] std::string str() const;
    friend bool operator==(const RowLabel&, const RowLabel&) = default;
};

enum class OutageKind { Line, Generator };

struct OutageSpec {
    OutageKind kind = OutageKind::Line;
    std::size_t element = 0;  // 0-based line or generator index

    /// Stable identifier, e.g. "line3" or "gen2" (1-based).
    [[nodiscard]] std::string id() const;
    /// Parses "line3", "line:3", "gen2" or "gen:2".
    static OutageSpec parse(const std::string& text);
    friend bool operator==(const OutageSpec&, const OutageSpec&) = default;
};

/// Market clearing in compact form
///   minimize 1/2 x'Qx + q'x  subject to  Ax <= B xi + b,
/// with x = [p; l_shed] and LMPs lambda = Lambda * mu.
struct MarketQP {
    Matrix Q;
    Vector q;
    Matrix A;
    Matrix B;
    Vector b;
    Matrix Lambda;  // buses x rows
    std::vector<RowLabel> row_labels;
    std::string structure_id = "nominal";

    /// Original indices of the generators and lines that are still modeled.
    std::vector<std::size_t> generator_ids;
    std::vector<std::size_t> line_ids;
    std::size_t num_loads = 0;

    [[nodiscard]] Eigen::Index num_rows() const { return A.rows(); }
    [[nodiscard]] Eigen::Index num_vars() const { return A.cols(); }
    [[nodiscard]] Eigen::Index num_params() const { return B.cols(); }
    [[nodiscard]] Eigen::Index num_generators() const { return static_cast<Eigen::Index>(generator_ids.size()); }

    /// Right-hand side B xi + b.
    [[nodiscard]] Vector rhs(const Vector& xi) const { return B * xi + b; }
    /// Index of the balance row (always 0).
    [[nodiscard]] static constexpr Eigen::Index balance_row() { return 0; }

    /// FNV-1a hash over all numeric content and labels; keys atlas caches.
    [[nodiscard]] std::uint64_t content_hash() const;

    /// Checks dimensions, symmetry and positive definiteness of Q.
    void validate() const;
};

struct MarketOptions {
    /// Recompute the PTDF on the reduced topology for line outages instead of
    /// only deleting the faulted line's flow rows.
    bool recompute_ptdf = false;
};

MarketQP assemble_qp(const NetworkCase& net);

MarketQP apply_outage(const MarketQP& qp, const NetworkCase& net, const OutageSpec& spec,
                      const MarketOptions& options = {});

/// LMPs from a full dual vector.
inline Vector lmp_from_duals(const MarketQP& qp, const Vector& mu) { return qp.Lambda * mu; }

}  // namespace gridqcd
