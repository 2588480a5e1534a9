#include "agesim/star.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace agesim {

StarNetworkModel StarNetworkModel::symmetric(int n, double p, double w) {
    StarNetworkModel m;
    m.n_terminals = n;
    m.success_prob.assign(static_cast<size_t>(n), p);
    m.weights.assign(static_cast<size_t>(n), w);
    return m;
}

void StarNetworkModel::validate() const {
    if (n_terminals < 1) throw std::invalid_argument("n_terminals < 1");
    if (success_prob.size() != static_cast<size_t>(n_terminals) ||
        weights.size() != static_cast<size_t>(n_terminals))
        throw std::invalid_argument("per-terminal vectors must have n_terminals entries");
    for (double p : success_prob)
        if (p <= 0.0 || p > 1.0) throw std::invalid_argument("success_prob outside (0,1]");
    for (double w : weights)
        if (w <= 0.0) throw std::invalid_argument("weights must be positive");
    if (arrivals == Arrivals::Bernoulli) {
        if (arrival_rate.size() != static_cast<size_t>(n_terminals))
            throw std::invalid_argument("arrival_rate must have n_terminals entries");
        for (double l : arrival_rate)
            if (l < 0.0 || l > 1.0) throw std::invalid_argument("arrival_rate outside [0,1]");
    }
}

double PolicyTrace::weighted_avg_age(const StarNetworkModel& m) const {
    double acc = 0.0;
    for (size_t n = 0; n < sum_age.size(); ++n)
        acc += m.weights[n] * sum_age[n] / static_cast<double>(horizon);
    return acc;
}

double PolicyTrace::mean_avg_age() const {
    double acc = 0.0;
    for (double s : sum_age) acc += s / static_cast<double>(horizon);
    return acc / static_cast<double>(sum_age.size());
}

namespace {

struct SimState {
    std::vector<long> ages;
    std::vector<long> sample_age;  // Bernoulli mode: -1 = no undelivered sample
    PolicyTrace trace;

    SimState(const StarNetworkModel& m, long horizon, long exceed_bound)
        : ages(static_cast<size_t>(m.n_terminals)),
          sample_age(static_cast<size_t>(m.n_terminals), 0) {
        // desynchronized start: ages 1..N (threshold policies need the stagger)
        for (int n = 0; n < m.n_terminals; ++n) ages[static_cast<size_t>(n)] = n + 1;
        if (m.arrivals == StarNetworkModel::Arrivals::Bernoulli)
            std::fill(sample_age.begin(), sample_age.end(), -1L);
        trace.horizon = horizon;
        trace.sum_age.assign(static_cast<size_t>(m.n_terminals), 0.0);
        trace.peak_age.assign(static_cast<size_t>(m.n_terminals), 0L);
        trace.exceed_slots.assign(static_cast<size_t>(m.n_terminals), 0L);
        bound = exceed_bound;
    }

    long bound = 0;

    void arrivals(const StarNetworkModel& m, Rng& rng) {
        if (m.arrivals != StarNetworkModel::Arrivals::Bernoulli) return;
        for (size_t n = 0; n < sample_age.size(); ++n)
            if (rng.bernoulli(m.arrival_rate[n])) sample_age[n] = 0;  // newest-only queue
    }

    bool has_sample(const StarNetworkModel& m, int n) const {
        return m.arrivals == StarNetworkModel::Arrivals::ActiveSource ||
               sample_age[static_cast<size_t>(n)] >= 0;
    }

    void record() {
        for (size_t n = 0; n < ages.size(); ++n) {
            trace.sum_age[n] += static_cast<double>(ages[n]);
            trace.peak_age[n] = std::max(trace.peak_age[n], ages[n]);
            if (bound > 0 && ages[n] > bound) trace.exceed_slots[n] += 1;
        }
    }

    // Advance one slot: `delivered` < 0 means no delivery this slot.
    void advance(const StarNetworkModel& m, int delivered) {
        for (size_t n = 0; n < ages.size(); ++n) {
            if (static_cast<int>(n) == delivered) {
                const long s =
                    m.arrivals == StarNetworkModel::Arrivals::ActiveSource ? 0 : sample_age[n];
                ages[n] = s + 1;
                sample_age[n] = -1;
                trace.deliveries += 1;
            } else {
                ages[n] += 1;
            }
            if (sample_age[n] >= 0 && static_cast<int>(n) != delivered) sample_age[n] += 1;
        }
    }
};

}  // namespace

PolicyTrace schedule_round_robin(const StarNetworkModel& m, long horizon, Rng& rng,
                                 long exceed_bound) {
    m.validate();
    SimState s(m, horizon, exceed_bound);
    for (long t = 0; t < horizon; ++t) {
        s.arrivals(m, rng);
        s.record();
        const int n = static_cast<int>(t % m.n_terminals);
        int delivered = -1;
        if (s.has_sample(m, n) && rng.bernoulli(m.success_prob[static_cast<size_t>(n)]))
            delivered = n;
        s.advance(m, delivered);
    }
    return s.trace;
}

double scheduling_index(double w, double p, double age) {
    return w * p * age * (age + 2.0) / 2.0;
}

int max_index_terminal(const StarNetworkModel& m, const std::vector<long>& ages) {
    int best = 0;
    double best_idx = -1.0;
    for (int n = 0; n < m.n_terminals; ++n) {
        const double idx = scheduling_index(m.weights[static_cast<size_t>(n)],
                                            m.success_prob[static_cast<size_t>(n)],
                                            static_cast<double>(ages[static_cast<size_t>(n)]));
        if (idx > best_idx) {  // strict: ties keep the lowest id
            best_idx = idx;
            best = n;
        }
    }
    return best;
}

PolicyTrace simulate_index_policy(const StarNetworkModel& m, long horizon, Rng& rng,
                                  long exceed_bound) {
    m.validate();
    SimState s(m, horizon, exceed_bound);
    for (long t = 0; t < horizon; ++t) {
        s.arrivals(m, rng);
        s.record();
        const int n = max_index_terminal(m, s.ages);
        int delivered = -1;
        if (s.has_sample(m, n) && rng.bernoulli(m.success_prob[static_cast<size_t>(n)]))
            delivered = n;
        s.advance(m, delivered);
    }
    return s.trace;
}

AlohaSlot aloha_step(const StarNetworkModel& m, const std::vector<double>& p_tx,
                     std::vector<long>& ages, Rng& rng) {
    for (double p : p_tx)
        if (p < 0.0 || p > 1.0) throw std::invalid_argument("p_tx outside [0,1]");
    AlohaSlot slot;
    int only = -1;
    for (int n = 0; n < m.n_terminals; ++n) {
        if (rng.bernoulli(p_tx[static_cast<size_t>(n)])) {
            slot.n_transmitters += 1;
            only = n;
        }
    }
    if (slot.n_transmitters == 1 && rng.bernoulli(m.success_prob[static_cast<size_t>(only)]))
        slot.delivered_terminal = only;
    for (int n = 0; n < m.n_terminals; ++n) {
        auto& a = ages[static_cast<size_t>(n)];
        a = (n == slot.delivered_terminal) ? 1 : a + 1;
    }
    return slot;
}

PolicyTrace simulate_aloha(const StarNetworkModel& m, const std::vector<double>& p_tx,
                           long horizon, Rng& rng, long exceed_bound) {
    m.validate();
    SimState s(m, horizon, exceed_bound);
    for (long t = 0; t < horizon; ++t) {
        s.record();
        std::vector<long> before = s.ages;
        const AlohaSlot slot = aloha_step(m, p_tx, before, rng);
        if (slot.n_transmitters >= 2) s.trace.collisions += 1;
        s.advance(m, slot.delivered_terminal);
    }
    return s.trace;
}

AlohaOptimum optimize_aloha_p(const StarNetworkModel& m, int grid_points, long horizon,
                              uint64_t seed) {
    if (grid_points < 2) throw std::invalid_argument("degenerate grid");
    AlohaOptimum out;
    out.objective = std::numeric_limits<double>::infinity();
    for (int i = 1; i <= grid_points; ++i) {
        const double p = static_cast<double>(i) / static_cast<double>(grid_points);
        Rng rng(seed, static_cast<uint64_t>(i));
        const std::vector<double> p_tx(static_cast<size_t>(m.n_terminals), p);
        const PolicyTrace tr = simulate_aloha(m, p_tx, horizon, rng);
        const double obj = tr.weighted_avg_age(m);
        out.curve.emplace_back(p, obj);
        if (obj < out.objective) {
            out.objective = obj;
            out.p_star = p;
        }
    }
    return out;
}

std::vector<bool> dynamic_index_access(const StarNetworkModel& m,
                                       const std::vector<long>& ages, double subsidy) {
    std::vector<bool> tx(static_cast<size_t>(m.n_terminals), false);
    for (int n = 0; n < m.n_terminals; ++n) {
        const double idx = scheduling_index(m.weights[static_cast<size_t>(n)],
                                            m.success_prob[static_cast<size_t>(n)],
                                            static_cast<double>(ages[static_cast<size_t>(n)]));
        tx[static_cast<size_t>(n)] = idx > subsidy;
    }
    return tx;
}

namespace {

// Carrier-sensing contention among the terminals whose index crossed the
// subsidy: the highest index wins the channel, exact ties are broken at
// random. Returns the single transmitter (-1 if none) and the contender
// count. A deterministic "everyone above the threshold fires" rule would
// lock the system into perpetual collisions the first time two terminals
// cross in the same slot, since neither would ever reset.
int csma_winner(const StarNetworkModel& m, const std::vector<long>& ages,
                const std::vector<bool>& tx, Rng& rng, int* n_contend) {
    *n_contend = 0;
    double best = -1.0;
    std::vector<int> top;
    for (int n = 0; n < m.n_terminals; ++n) {
        if (!tx[static_cast<size_t>(n)]) continue;
        *n_contend += 1;
        const double idx = scheduling_index(m.weights[static_cast<size_t>(n)],
                                            m.success_prob[static_cast<size_t>(n)],
                                            static_cast<double>(ages[static_cast<size_t>(n)]));
        if (idx > best) {
            best = idx;
            top.assign(1, n);
        } else if (idx == best) {
            top.push_back(n);
        }
    }
    if (top.empty()) return -1;
    if (top.size() == 1) return top.front();
    return top[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(top.size()) - 1))];
}

}  // namespace

PolicyTrace simulate_dynamic_index(const StarNetworkModel& m, double subsidy,
                                   long horizon, Rng& rng, long exceed_bound) {
    m.validate();
    SimState s(m, horizon, exceed_bound);
    for (long t = 0; t < horizon; ++t) {
        s.record();
        const auto tx = dynamic_index_access(m, s.ages, subsidy);
        int n_contend = 0;
        const int winner = csma_winner(m, s.ages, tx, rng, &n_contend);
        int delivered = -1;
        if (winner >= 0 && rng.bernoulli(m.success_prob[static_cast<size_t>(winner)]))
            delivered = winner;
        if (n_contend >= 2) s.trace.collisions += 1;  // contention slots
        s.advance(m, delivered);
    }
    return s.trace;
}

double tune_subsidy(const StarNetworkModel& m, double target_tx, long horizon,
                    uint64_t seed, int iters) {
    // expected transmitters per slot is non-increasing in the subsidy
    auto mean_tx = [&](double subsidy) {
        Rng rng(seed);
        SimState s(m, horizon, 0);
        long total = 0;
        for (long t = 0; t < horizon; ++t) {
            const auto tx = dynamic_index_access(m, s.ages, subsidy);
            int n_contend = 0;
            const int winner = csma_winner(m, s.ages, tx, rng, &n_contend);
            total += n_contend;
            int delivered = -1;
            if (winner >= 0 && rng.bernoulli(m.success_prob[static_cast<size_t>(winner)]))
                delivered = winner;
            s.advance(m, delivered);
        }
        return static_cast<double>(total) / static_cast<double>(horizon);
    };
    double lo = 0.0;
    double hi = scheduling_index(1.0, 1.0, 1000.0);
    for (int i = 0; i < iters; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mean_tx(mid) > target_tx)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

OracleResult brute_force_optimal(const StarNetworkModel& m, int age_cap, double tol,
                                 long max_states) {
    m.validate();
    if (m.arrivals != StarNetworkModel::Arrivals::ActiveSource)
        throw std::invalid_argument("oracle requires active sources");
    const int n = m.n_terminals;
    long n_states = 1;
    for (int i = 0; i < n; ++i) {
        n_states *= age_cap;
        if (n_states > max_states)
            throw std::invalid_argument("oracle state space exceeds the configured cell limit");
    }

    // state encoding: ages a_i in [1, cap] -> sum (a_i - 1) * cap^i
    std::vector<long> stride(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        stride[static_cast<size_t>(i)] = 1;
        for (int j = 0; j < i; ++j) stride[static_cast<size_t>(i)] *= age_cap;
    }
    auto decode = [&](long s, std::vector<int>& ages) {
        for (int i = 0; i < n; ++i) {
            ages[static_cast<size_t>(i)] = static_cast<int>(s % age_cap) + 1;
            s /= age_cap;
        }
    };

    std::vector<double> cost(static_cast<size_t>(n_states));
    // fail_next[s]: all ages + 1 (capped); succ_next[s][a]: same but age_a = 1
    std::vector<long> fail_next(static_cast<size_t>(n_states));
    std::vector<long> succ_next(static_cast<size_t>(n_states) * n);
    {
        std::vector<int> ages(static_cast<size_t>(n));
        for (long s = 0; s < n_states; ++s) {
            decode(s, ages);
            double c = 0.0;
            long fs = 0;
            for (int i = 0; i < n; ++i) {
                c += m.weights[static_cast<size_t>(i)] * ages[static_cast<size_t>(i)];
                const int up = std::min(ages[static_cast<size_t>(i)] + 1, age_cap);
                fs += static_cast<long>(up - 1) * stride[static_cast<size_t>(i)];
            }
            cost[static_cast<size_t>(s)] = c;
            fail_next[static_cast<size_t>(s)] = fs;
            for (int a = 0; a < n; ++a) {
                const int up = std::min(ages[static_cast<size_t>(a)] + 1, age_cap);
                succ_next[static_cast<size_t>(s) * n + a] =
                    fs - static_cast<long>(up - 1) * stride[static_cast<size_t>(a)];
            }
        }
    }

    // damped relative value iteration (tau = 1/2 removes periodicity)
    std::vector<double> v(static_cast<size_t>(n_states), 0.0);
    std::vector<double> w(static_cast<size_t>(n_states));
    OracleResult out;
    out.age_cap = age_cap;
    out.policy.assign(static_cast<size_t>(n_states), 0);
    const long max_iters = 2000000;
    for (long it = 0; it < max_iters; ++it) {
        double dmin = std::numeric_limits<double>::infinity();
        double dmax = -dmin;
        for (long s = 0; s < n_states; ++s) {
            double best = std::numeric_limits<double>::infinity();
            int best_a = 0;
            const double vf = v[static_cast<size_t>(fail_next[static_cast<size_t>(s)])];
            for (int a = 0; a < n; ++a) {
                const double p = m.success_prob[static_cast<size_t>(a)];
                const double q = p * v[static_cast<size_t>(succ_next[static_cast<size_t>(s) * n + a])] +
                                 (1.0 - p) * vf;
                if (q < best) {
                    best = q;
                    best_a = a;
                }
            }
            w[static_cast<size_t>(s)] = cost[static_cast<size_t>(s)] + best;
            out.policy[static_cast<size_t>(s)] = best_a;
            const double d = w[static_cast<size_t>(s)] - v[static_cast<size_t>(s)];
            dmin = std::min(dmin, d);
            dmax = std::max(dmax, d);
        }
        out.iterations = it + 1;
        if (dmax - dmin < tol) {
            out.avg_weighted_age = 0.5 * (dmax + dmin);
            return out;
        }
        const double v0 = 0.5 * (v[0] + w[0]);
        for (long s = 0; s < n_states; ++s)
            v[static_cast<size_t>(s)] =
                0.5 * (v[static_cast<size_t>(s)] + w[static_cast<size_t>(s)]) - v0;
    }
    throw std::runtime_error("brute_force_optimal: value iteration did not converge");
}

double cyclic_schedule_average_age(const StarNetworkModel& m,
                                   const std::vector<int>& schedule) {
    m.validate();
    if (schedule.empty()) throw std::invalid_argument("empty schedule");
    for (int a : schedule)
        if (a < 0 || a >= m.n_terminals) throw std::invalid_argument("schedule entry out of range");
    const int n = m.n_terminals;
    std::vector<long> ages(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) ages[static_cast<size_t>(i)] = i + 1;
    // warm up: with p = 1 the state is periodic after at most a few cycles
    const int warm_cycles = n + 2;
    for (int c = 0; c < warm_cycles; ++c)
        for (int a : schedule) {
            for (int i = 0; i < n; ++i)
                ages[static_cast<size_t>(i)] = (i == a) ? 1 : ages[static_cast<size_t>(i)] + 1;
        }
    double acc = 0.0;
    for (int a : schedule) {
        for (int i = 0; i < n; ++i)
            acc += m.weights[static_cast<size_t>(i)] * static_cast<double>(ages[static_cast<size_t>(i)]);
        for (int i = 0; i < n; ++i)
            ages[static_cast<size_t>(i)] = (i == a) ? 1 : ages[static_cast<size_t>(i)] + 1;
    }
    return acc / static_cast<double>(schedule.size());
}

}  // namespace agesim
