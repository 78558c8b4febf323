#ifndef CELLCONTRAST_PROFILES_HPP
#define CELLCONTRAST_PROFILES_HPP

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dataio.hpp"

namespace cellcontrast::profiles {

/**
 * Per-cell representation vectors, row-aligned to `cell_ids`.
 *
 * On disk: "EMBF1" | u32 rows | u32 cols | rows x cols little-endian f32,
 * plus a sidecar CSV (`<path>.ids.csv`, header `cell_id`) listing the row ids.
 */
struct EmbeddingMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> values;
    std::vector<std::string> cell_ids;

    std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }

    friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;
};

std::filesystem::path sidecar_path(const std::filesystem::path& path);

void write_embeddings(const std::filesystem::path& path, const EmbeddingMatrix& m);
EmbeddingMatrix read_embeddings(const std::filesystem::path& path);

struct TreatmentKey {
    std::string compound;
    std::string concentration;

    friend auto operator<=>(const TreatmentKey&, const TreatmentKey&) = default;
    friend bool operator==(const TreatmentKey&, const TreatmentKey&) = default;
};

struct TreatmentProfile {
    std::string compound;
    std::string concentration;
    std::string moa;
    std::set<std::string> batches;
    std::size_t n_cells = 0;
    Eigen::VectorXd vector;

    TreatmentKey key() const { return {compound, concentration}; }

    /// Exact comparison, vectors included.
    friend bool operator==(const TreatmentProfile& a, const TreatmentProfile& b);
};

/// Aggregate of the DMSO cells of one well.
struct ControlProfile {
    std::string batch;
    std::string well;
    std::size_t n_cells = 0;
    Eigen::VectorXd vector;

    friend bool operator==(const ControlProfile& a, const ControlProfile& b);
};

/// Treatments sorted by key; controls sorted by (batch, well).
struct ProfileSet {
    std::vector<TreatmentProfile> treatments;
    std::vector<ControlProfile> controls;

    std::size_t dim() const;

    friend bool operator==(const ProfileSet&, const ProfileSet&) = default;
};

enum class Aggregation { mean, median };

Aggregation parse_aggregation(std::string_view name);
std::string to_string(Aggregation a);

/**
 * Groups cells by (compound, concentration), and DMSO cells by (batch, well),
 * and reduces each group coordinate-wise. Cells are visited in cell-id order,
 * so the result does not depend on how rows are stored. Throws
 * `std::invalid_argument` if an embedding row has no manifest entry.
 */
ProfileSet aggregate(const EmbeddingMatrix& embeddings, const dataio::Manifest& manifest,
                     Aggregation statistic = Aggregation::mean);

/// Population covariance (divide by n) of the rows of `x`.
Eigen::MatrixXd population_covariance(const Eigen::MatrixXd& x);

/// S^{p} for symmetric positive semi-definite S, via eigendecomposition (p = 1/2 or -1/2).
Eigen::MatrixXd symmetric_power(const Eigen::MatrixXd& s, double p);

inline constexpr double default_eps_rel = 1e-6;

struct WhiteningTransform {
    Eigen::VectorXd mean;
    Eigen::MatrixXd matrix;

    /// W (x - mean).
    Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
};

/**
 * Fits x -> W (x - mu) with W = (Sigma + eps I)^{-1/2} on the rows of
 * `controls`, where eps = eps_rel * trace(Sigma) / dim.
 */
WhiteningTransform fit_whitening(const Eigen::MatrixXd& controls, double eps_rel = default_eps_rel);

struct CoralBatch {
    Eigen::VectorXd mean;
    Eigen::MatrixXd matrix;
};

/**
 * Per-batch correlation alignment for row vectors:
 * x -> (x - mean_b) A_b + global_mean, A_b = (C_b + eps_b I)^{-1/2} C_t^{1/2}.
 */
struct CoralTransform {
    std::map<std::string, CoralBatch> batches;
    Eigen::VectorXd global_mean;

    /// Batches without a fitted transform pass `x` through unchanged.
    Eigen::VectorXd apply(const std::string& batch, const Eigen::VectorXd& x) const;

    /// Mean of the per-batch results over every batch in `batches`.
    Eigen::VectorXd apply(const std::set<std::string>& batches, const Eigen::VectorXd& x) const;
};

/**
 * Fits one transform per batch; `global_mean` is the mean of all control rows.
 * Throws `std::invalid_argument` if a batch has fewer than two control rows.
 */
CoralTransform fit_coral(const std::map<std::string, Eigen::MatrixXd>& batch_controls, const Eigen::MatrixXd& target,
                         double eps_rel = default_eps_rel);

enum class PostprocessMode { none, whitening, tvn };

PostprocessMode parse_postprocess_mode(std::string_view name);
std::string to_string(PostprocessMode mode);

/**
 * Fits on the control profiles and transforms treatments and controls alike.
 * `tvn` whitens, then aligns each batch's whitened controls to the identity;
 * treatments imaged in several batches get the mean of their batches' maps.
 * Batches without controls pass through unchanged and add a warning.
 */
ProfileSet postprocess(const ProfileSet& profiles, PostprocessMode mode, double eps_rel = default_eps_rel,
                       std::vector<std::string>* warnings = nullptr);

/// Header: compound,concentration,moa,batches,n_cells,v0..v{d-1}; batches joined with ';'.
void write_treatment_profiles(std::ostream& out, std::span<const TreatmentProfile> profiles);
std::vector<TreatmentProfile> read_treatment_profiles(std::istream& in);

/// Header: batch,well,n_cells,v0..v{d-1}.
void write_control_profiles(std::ostream& out, std::span<const ControlProfile> profiles);
std::vector<ControlProfile> read_control_profiles(std::istream& in);

/// Control profiles live next to the treatment file, at `<path>.controls.csv`.
std::filesystem::path controls_path(const std::filesystem::path& path);

void write_profile_set(const std::filesystem::path& path, const ProfileSet& profiles);
ProfileSet read_profile_set(const std::filesystem::path& path);

}

#endif
