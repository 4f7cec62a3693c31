#include "gpae/correction.hpp"

#include <cmath>
#include <stdexcept>

namespace gpae {

std::string to_string(TraceScheme scheme) {
    switch (scheme) {
        case TraceScheme::Untruncated: return "untruncated";
        case TraceScheme::LambdaOnly: return "lambda_only";
        case TraceScheme::SingleTruncation: return "ST";
        case TraceScheme::IndividualTruncation: return "IT";
        case TraceScheme::DoubleTruncation: return "DT";
    }
    return "?";
}

TraceScheme trace_scheme_from_string(const std::string& name) {
    if (name == "untruncated" || name == "none_ratio") return TraceScheme::Untruncated;
    if (name == "lambda_only" || name == "none") return TraceScheme::LambdaOnly;
    if (name == "ST" || name == "st") return TraceScheme::SingleTruncation;
    if (name == "IT" || name == "it") return TraceScheme::IndividualTruncation;
    if (name == "DT" || name == "dt") return TraceScheme::DoubleTruncation;
    throw std::invalid_argument("unknown trace scheme '" + name + "'");
}

IsrSeries compute_isr(const Trajectory& traj, const TargetProbFn& target_prob) {
    const int T = traj.length();
    const int n = T > 0 ? static_cast<int>(traj.steps[0].actions.size()) : 0;
    IsrSeries isr;
    isr.individual.assign(T, Vec(n, 1.0));
    isr.complement.assign(T, Vec(n, 1.0));
    isr.joint.assign(T, 1.0);
    for (int t = 0; t < T; ++t) {
        const Transition& tr = traj.steps[t];
        double joint = 1.0;
        for (int i = 0; i < n; ++i) {
            if (!std::isfinite(tr.behavior_logp[i])) {
                throw std::runtime_error("compute_isr: corrupt trajectory, behavior log-prob "
                                         "is not finite");
            }
            const double mu = std::exp(tr.behavior_logp[i]);
            const double pi = target_prob(i, tr.observations[i], tr.actions[i]);
            const double rho = pi / mu;
            if (!std::isfinite(rho) || rho < 0.0) {
                throw std::runtime_error("compute_isr: non-finite importance ratio");
            }
            isr.individual[t][i] = rho;
            joint *= rho;
        }
        isr.joint[t] = joint;
        for (int i = 0; i < n; ++i) {
            double comp = 1.0;
            for (int j = 0; j < n; ++j) {
                if (j != i) comp *= isr.individual[t][j];
            }
            isr.complement[t][i] = comp;
        }
    }
    return isr;
}

IsrSeries compute_isr(const Trajectory& traj, const TabularPolicy& target) {
    return compute_isr(traj, [&target](int agent, int obs, int action) {
        return target.prob(agent, obs, action);
    });
}

double trace_weight(TraceScheme scheme, double lambda, double eta, double rho_individual,
                    double rho_complement) {
    switch (scheme) {
        case TraceScheme::Untruncated:
            return rho_individual * rho_complement;
        case TraceScheme::LambdaOnly:
            return lambda;
        case TraceScheme::SingleTruncation:
            return lambda * std::min(1.0, rho_individual * rho_complement);
        case TraceScheme::IndividualTruncation:
            return lambda * std::min(1.0, rho_individual);
        case TraceScheme::DoubleTruncation:
            return lambda * std::min(1.0, rho_individual * std::min(eta, rho_complement));
    }
    throw std::logic_error("trace_weight: unreachable");
}

double TraceWeights::product(int agent, int from, int to) const {
    double p = 1.0;
    for (int j = from + 1; j <= to; ++j) p *= c[j][agent];
    return p;
}

TraceWeights truncate(const IsrSeries& isr, TraceScheme scheme, double lambda, double eta) {
    if (lambda <= 0.0 || lambda > 1.0) {
        throw std::invalid_argument("truncate: lambda must be in (0,1]");
    }
    if (scheme == TraceScheme::DoubleTruncation && eta <= 0.0) {
        throw std::invalid_argument("truncate: eta must be positive");
    }
    const int T = isr.length();
    const int n = T > 0 ? static_cast<int>(isr.individual[0].size()) : 0;
    TraceWeights weights;
    weights.scheme = scheme;
    weights.lambda = lambda;
    weights.eta = eta;
    weights.c.assign(T, Vec(n, lambda));
    weights.prefix.assign(T, Vec(n, 1.0));
    for (int t = 0; t < T; ++t) {
        for (int i = 0; i < n; ++i) {
            weights.c[t][i] =
                trace_weight(scheme, lambda, eta, isr.individual[t][i], isr.complement[t][i]);
            weights.prefix[t][i] =
                t == 0 ? 1.0 : weights.prefix[t - 1][i] * weights.c[t][i];
        }
    }
    return weights;
}

GapReport gap_metric(const std::vector<IsrSeries>& series,
                     const std::vector<TraceWeights>& weights) {
    if (series.empty()) throw std::invalid_argument("gap_metric: empty trajectory set");
    if (series.size() != weights.size()) {
        throw std::invalid_argument("gap_metric: series/weights size mismatch");
    }
    GapReport report;
    double sum_di = 0.0, sum_dj = 0.0, sum_gap = 0.0;
    long count = 0;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const IsrSeries& isr = series[k];
        const TraceWeights& w = weights[k];
        const int T = isr.length();
        if (T != w.length()) throw std::invalid_argument("gap_metric: length mismatch");
        if (T == 0) continue;
        const int n = static_cast<int>(isr.individual[0].size());
        for (int i = 0; i < n; ++i) {
            double di = 0.0, dj = 0.0;
            for (int t = 0; t < T; ++t) {
                const double cw = w.c[t][i] / w.lambda;
                di += std::abs(isr.individual[t][i] - cw);
                dj += std::abs(isr.joint[t] - cw);
            }
            di /= T;
            dj /= T;
            GapTrajectoryRow row;
            row.trajectory = static_cast<int>(k);
            row.agent = i;
            row.d_individual = di;
            row.d_joint = dj;
            row.gap = std::abs(dj - di);
            report.rows.push_back(row);
            sum_di += di;
            sum_dj += dj;
            sum_gap += row.gap;
            ++count;
        }
    }
    if (count == 0) throw std::invalid_argument("gap_metric: no nonempty trajectories");
    report.mean_d_individual = sum_di / count;
    report.mean_d_joint = sum_dj / count;
    report.mean_gap = sum_gap / count;
    return report;
}

}  // namespace gpae
