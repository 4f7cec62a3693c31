#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gpae/model.hpp"
#include "gpae/trajectory.hpp"

namespace gpae {

enum class TraceScheme { Untruncated, LambdaOnly, SingleTruncation, IndividualTruncation, DoubleTruncation };

std::string to_string(TraceScheme scheme);
TraceScheme trace_scheme_from_string(const std::string& name);

// Per-timestep importance sampling ratios between a target policy and the
// behavior policy the trajectory was collected under. Behavior probabilities
// come from the stored log-probs, never from re-evaluating a policy.
struct IsrSeries {
    std::vector<Vec> individual;  // [t][agent]  rho^i_t
    std::vector<Vec> complement;  // [t][agent]  rho^{-i}_t
    Vec joint;                    // [t]         rho_t

    int length() const { return static_cast<int>(joint.size()); }
};

// Target policy probability of the taken action; abstracts tabular tables
// and learned policies behind one signature.
using TargetProbFn = std::function<double(int agent, int obs, int action)>;

IsrSeries compute_isr(const Trajectory& traj, const TargetProbFn& target_prob);
IsrSeries compute_isr(const Trajectory& traj, const TabularPolicy& target);

// Elementwise trace weight. Truncating schemes keep c in [0, lambda];
// Untruncated returns the raw joint ratio.
double trace_weight(TraceScheme scheme, double lambda, double eta, double rho_individual,
                    double rho_complement);

struct TraceWeights {
    TraceScheme scheme = TraceScheme::LambdaOnly;
    double lambda = 1.0;
    double eta = 1.05;
    std::vector<Vec> c;       // [t][agent]
    std::vector<Vec> prefix;  // [t][agent], prod_{j=1..t} c_j with prefix[0] == 1

    int length() const { return static_cast<int>(c.size()); }
    // Product over j in (from, to], i.e. prod_{j=from+1}^{to} c^i_j.
    double product(int agent, int from, int to) const;
};

TraceWeights truncate(const IsrSeries& isr, TraceScheme scheme, double lambda, double eta);

// Per Eq-style gap diagnostic: d(x, c) averages |x_t - c_t/lambda| over the
// trajectory (lambda divided out so the metric isolates truncation), and the
// gap is |d(joint, c) - d(individual, c)| per trajectory before averaging.
struct GapTrajectoryRow {
    int trajectory = 0;
    int agent = 0;
    double d_individual = 0.0;
    double d_joint = 0.0;
    double gap = 0.0;
};

struct GapReport {
    std::string convention = "per-step absolute difference, lambda divided out of c";
    std::vector<GapTrajectoryRow> rows;
    double mean_d_individual = 0.0;
    double mean_d_joint = 0.0;
    double mean_gap = 0.0;
};

GapReport gap_metric(const std::vector<IsrSeries>& series,
                     const std::vector<TraceWeights>& weights);

}  // namespace gpae
