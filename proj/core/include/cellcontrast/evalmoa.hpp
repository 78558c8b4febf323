#ifndef CELLCONTRAST_EVALMOA_HPP
#define CELLCONTRAST_EVALMOA_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "profiles.hpp"

namespace cellcontrast::evalmoa {

/// 1 - u.v / (|u| |v|). Throws `std::domain_error` if either vector is zero.
double cosine_distance(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

enum class MatchRule { nsc, nscb };

std::string to_string(MatchRule rule);

/// The nearest legal neighbor of one query, or none when no candidate exists.
struct Assignment {
    std::optional<std::size_t> neighbor;
    double distance = 0.0;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

/**
 * 1-NN under cosine distance for every profile, skipping candidates that share
 * the query's compound (and, for NSCB, any batch). Equal distances resolve to
 * the lexicographically smallest (compound, concentration). Throws
 * `std::invalid_argument` when fewer than two compounds are present.
 */
std::vector<Assignment> assign(std::span<const profiles::TreatmentProfile> profiles, MatchRule rule);

/// Same contract as `assign`, by a full distance matrix and explicit filtering.
std::vector<Assignment> oracle_assign(std::span<const profiles::TreatmentProfile> profiles, MatchRule rule);

struct Match {
    bool eligible = false;
    profiles::TreatmentKey neighbor;
    std::string assigned_moa;
    double distance = 0.0;
    bool correct = false;
};

struct ReportRow {
    profiles::TreatmentKey key;
    std::string moa;
    std::set<std::string> batches;
    Match nsc;
    Match nscb;
};

/// Accuracies are absent when no treatment is eligible under the rule.
struct EvalReport {
    std::vector<ReportRow> rows;
    std::optional<double> nsc_accuracy;
    std::optional<double> nscb_accuracy;
    std::optional<double> drop;
    std::size_t nsc_eligible_count = 0;
    std::size_t nscb_eligible_count = 0;
    std::vector<std::string> warnings;
};

EvalReport evaluate(std::span<const profiles::TreatmentProfile> profiles);

/// Deterministic JSON: aggregates, per-treatment rows and warnings.
std::string to_json(const EvalReport& report);

/// Aligned text table for terminals.
std::string format_table(const EvalReport& report);

}

#endif
