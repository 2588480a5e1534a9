#ifndef AGESIM_SMART_HPP
#define AGESIM_SMART_HPP

#include <string>
#include <vector>

#include "agesim/age.hpp"
#include "agesim/rng.hpp"

namespace agesim {

// Quantization grids for the learner's local observation.
struct SituationGrid {
    // age bin edges in ms; bin = first edge the age is below, else last bin
    std::vector<double> age_edges = {50, 100, 200, 400, 800, 1600, 3200};
    int n_collision_bins = 8;  // channel-busy / collision fraction in [0,1]
    std::vector<int> rri_options_ms = {20, 50, 100, 200, 500};

    int n_age_bins() const { return static_cast<int>(age_edges.size()) + 1; }
    int n_actions() const { return static_cast<int>(rri_options_ms.size()); }
    int n_states() const { return n_age_bins() * n_collision_bins * n_actions(); }

    int age_bin(double age_ms) const;
    int collision_bin(double fraction) const;
    double age_bin_center_ms(int bin) const;
};

struct Situation {
    int age_bin = 0;
    int coll_bin = 0;
    int rri_idx = 0;
};

// Scalar reward broadcast by the semi-supervisor each epoch: the negated
// epoch-average age penalty observed at the controller, so higher is better.
struct RewardBroadcast {
    double epoch_start_ms = 0.0;
    double epoch_end_ms = 0.0;
    std::vector<double> reward;       // per terminal
    std::vector<double> current_age;  // piggybacked controller-side age, ms
};

// Tabular situation -> update-period policy. Actions are rri choices; ties in
// the table break toward the lowest rri.
class RatePolicy {
public:
    explicit RatePolicy(SituationGrid grid = {})
        : grid_(std::move(grid)),
          q_(static_cast<size_t>(grid_.n_states()) * grid_.n_actions(), 0.0) {}

    const SituationGrid& grid() const { return grid_; }

    double alpha = 0.1;
    double gamma = 0.9;
    double epsilon = 0.2;

    int state_index(const Situation& s) const;
    double q(const Situation& s, int action) const;
    void set_q(const Situation& s, int action, double value);

    int greedy_action(const Situation& s) const;

    // epsilon-greedy choice; returns the chosen rri in ms
    int act(const Situation& s, Rng& rng, int* action_out = nullptr) const;

    // one-step TD update; returns the TD error
    double online_update(const Situation& s, int action, double reward, const Situation& next);

    bool operator==(const RatePolicy& o) const { return q_ == o.q_; }

    void save_json(const std::string& path) const;
    static RatePolicy load_json(const std::string& path);

private:
    SituationGrid grid_;
    std::vector<double> q_;
};

// Stylized single-learner environment for pretraining: a background collision
// probability per rri option stands in for the (absent) co-learners, scaled
// by the situation's congestion bin. Rewards are closed-form (steady-state
// expected age plus the cost of working off the current age backlog), so the
// table converges deterministically and covers every situation.
struct StylizedEnv {
    std::vector<double> collision_prob;  // per rri option at reference congestion
    double access_delay_ms = 5.0;
    double congestion_floor = 0.25;  // background scale at the emptiest bin
    double congestion_gain = 1.5;    // slope of the scale across the bins
    double epoch_ms = 1000.0;        // horizon over which an age backlog is amortized

    // background collision probability felt at this rri under this congestion
    double effective_collision(const SituationGrid& grid, int action, int coll_bin) const;

    // expected time-average linear age for update period T with per-attempt
    // success probability q (geometric retries): d + (T*(2-q)/q + 1)/2
    static double expected_avg_age(double period_ms, double success_prob, double delay_ms);

    // -(steady-state age cost + amortized recovery cost of the current age)
    double reward_for(const SituationGrid& grid, const Situation& s, int action) const;
};

struct PretrainReport {
    long episodes_run = 0;
    bool converged = false;
    double final_max_td = 0.0;
};

PretrainReport pretrain(RatePolicy& policy, const StylizedEnv& env, long max_episodes,
                        Rng& rng, double td_tol = 1e-4);

// Controller-side reward computation from the age records of one epoch.
RewardBroadcast semi_supervisor_reward(const std::vector<AgeProcess>& controller_ages,
                                       const AgePenalty& penalty, double epoch_start_ms,
                                       double epoch_end_ms);

}  // namespace agesim

#endif
