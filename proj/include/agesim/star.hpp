#ifndef AGESIM_STAR_HPP
#define AGESIM_STAR_HPP

#include <cstdint>
#include <vector>

#include "agesim/rng.hpp"

namespace agesim {

// Abstract N-terminal, one-hop star network with slotted time and i.i.d.
// per-terminal success probability. Active sources have a fresh sample at
// every opportunity; Bernoulli sources keep only the newest undelivered one.
struct StarNetworkModel {
    enum class Arrivals { ActiveSource, Bernoulli };

    int n_terminals = 1;
    std::vector<double> success_prob;  // p_n in (0,1]
    std::vector<double> weights;       // w_n > 0
    Arrivals arrivals = Arrivals::ActiveSource;
    std::vector<double> arrival_rate;  // lambda_n, Bernoulli mode only

    static StarNetworkModel symmetric(int n, double p = 1.0, double w = 1.0);
    void validate() const;
};

struct PolicyTrace {
    long horizon = 0;
    std::vector<double> sum_age;      // per-terminal sum of a_n(t) over slots
    std::vector<long> peak_age;       // per-terminal max age
    std::vector<long> exceed_slots;   // slots with a_n > exceedance bound
    long deliveries = 0;
    long collisions = 0;

    double avg_age(int n) const { return sum_age[static_cast<size_t>(n)] / static_cast<double>(horizon); }
    double weighted_avg_age(const StarNetworkModel& m) const;
    double mean_avg_age() const;
};

// Slot dynamics: a_n <- 1 on a delivered fresh sample, else a_n + 1.
// Ages start at 1 in the first slot (synchronized start, one-slot delay).

PolicyTrace schedule_round_robin(const StarNetworkModel& m, long horizon, Rng& rng,
                                 long exceed_bound = 0);

// Scheduling index: I_n = w_n * p_n * a_n * (a_n + 2) / 2.
double scheduling_index(double w, double p, double age);

// argmax of the index; ties broken by lowest terminal id.
int max_index_terminal(const StarNetworkModel& m, const std::vector<long>& ages);

PolicyTrace simulate_index_policy(const StarNetworkModel& m, long horizon, Rng& rng,
                                  long exceed_bound = 0);

// One uncoordinated slot: each terminal transmits with probability p_tx[n];
// a single transmitter succeeds with prob p_n, two or more always collide.
struct AlohaSlot {
    int n_transmitters = 0;
    int delivered_terminal = -1;  // -1 if none
};
AlohaSlot aloha_step(const StarNetworkModel& m, const std::vector<double>& p_tx,
                     std::vector<long>& ages, Rng& rng);

PolicyTrace simulate_aloha(const StarNetworkModel& m, const std::vector<double>& p_tx,
                           long horizon, Rng& rng, long exceed_bound = 0);

// Grid search over a common transmit probability, minimizing the simulated
// time-average weighted age. Deterministic under a fixed seed.
struct AlohaOptimum {
    double p_star = 0.0;
    double objective = 0.0;
    std::vector<std::pair<double, double>> curve;  // (p, objective)
};
AlohaOptimum optimize_aloha_p(const StarNetworkModel& m, int grid_points, long horizon,
                              uint64_t seed);

// Threshold rule: terminal n contends for the channel iff its index exceeds
// the broadcast subsidy. Returns the per-terminal contention decisions.
std::vector<bool> dynamic_index_access(const StarNetworkModel& m,
                                       const std::vector<long>& ages, double subsidy);

// Prioritized carrier-sensing access: among the contenders the highest index
// transmits (exact ties broken at random); `collisions` counts contention
// slots with two or more contenders.
PolicyTrace simulate_dynamic_index(const StarNetworkModel& m, double subsidy,
                                   long horizon, Rng& rng, long exceed_bound = 0);

// Bisection on the subsidy so the long-run expected number of transmitters
// per slot hits `target_tx`.
double tune_subsidy(const StarNetworkModel& m, double target_tx, long horizon,
                    uint64_t seed, int iters = 24);

// Exact small-instance oracle: relative value iteration over the age-capped
// MDP (scheduled access, active sources). Minimizes long-run average
// weighted age.
struct OracleResult {
    double avg_weighted_age = 0.0;   // optimal gain (sum over terminals)
    std::vector<int> policy;         // argmin action per encoded state
    int age_cap = 0;
    long iterations = 0;
};
OracleResult brute_force_optimal(const StarNetworkModel& m, int age_cap,
                                 double tol = 1e-9, long max_states = 200000);

// Deterministic average weighted age of a cyclic schedule (ideal channel,
// p = 1), evaluated in steady state. Used for exhaustive schedule checks.
double cyclic_schedule_average_age(const StarNetworkModel& m,
                                   const std::vector<int>& schedule);

}  // namespace agesim

#endif
