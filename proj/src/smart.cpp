#include "agesim/smart.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace agesim {

int SituationGrid::age_bin(double age_ms) const {
    for (size_t i = 0; i < age_edges.size(); ++i)
        if (age_ms < age_edges[i]) return static_cast<int>(i);
    return static_cast<int>(age_edges.size());
}

int SituationGrid::collision_bin(double fraction) const {
    const double f = std::clamp(fraction, 0.0, 1.0);
    return std::min(static_cast<int>(f * n_collision_bins), n_collision_bins - 1);
}

double SituationGrid::age_bin_center_ms(int bin) const {
    if (bin <= 0) return age_edges.front() / 2.0;
    if (bin >= static_cast<int>(age_edges.size())) return age_edges.back() * 1.5;
    return 0.5 * (age_edges[static_cast<size_t>(bin) - 1] + age_edges[static_cast<size_t>(bin)]);
}

int RatePolicy::state_index(const Situation& s) const {
    if (s.age_bin < 0 || s.age_bin >= grid_.n_age_bins() || s.coll_bin < 0 ||
        s.coll_bin >= grid_.n_collision_bins || s.rri_idx < 0 ||
        s.rri_idx >= grid_.n_actions())
        throw std::out_of_range("situation off the quantization grid");
    return (s.age_bin * grid_.n_collision_bins + s.coll_bin) * grid_.n_actions() + s.rri_idx;
}

double RatePolicy::q(const Situation& s, int action) const {
    return q_[static_cast<size_t>(state_index(s)) * grid_.n_actions() + action];
}

void RatePolicy::set_q(const Situation& s, int action, double value) {
    q_[static_cast<size_t>(state_index(s)) * grid_.n_actions() + action] = value;
}

int RatePolicy::greedy_action(const Situation& s) const {
    const size_t base = static_cast<size_t>(state_index(s)) * grid_.n_actions();
    int best = 0;
    // rri options are sorted ascending, so keeping the first maximum breaks
    // ties toward the lowest rri
    for (int a = 1; a < grid_.n_actions(); ++a)
        if (q_[base + a] > q_[base + best]) best = a;
    return best;
}

int RatePolicy::act(const Situation& s, Rng& rng, int* action_out) const {
    int a;
    if (rng.uniform() < epsilon)
        a = rng.uniform_int(0, grid_.n_actions() - 1);
    else
        a = greedy_action(s);
    if (action_out) *action_out = a;
    return grid_.rri_options_ms[static_cast<size_t>(a)];
}

double RatePolicy::online_update(const Situation& s, int action, double reward,
                                 const Situation& next) {
    const size_t base_next = static_cast<size_t>(state_index(next)) * grid_.n_actions();
    double best_next = q_[base_next];
    for (int a = 1; a < grid_.n_actions(); ++a) best_next = std::max(best_next, q_[base_next + a]);
    const size_t cell = static_cast<size_t>(state_index(s)) * grid_.n_actions() + action;
    const double td = reward + gamma * best_next - q_[cell];
    q_[cell] += alpha * td;
    return td;
}

void RatePolicy::save_json(const std::string& path) const {
    nlohmann::json j;
    j["format"] = "agesim-policy-v1";
    j["grid"]["age_edges"] = grid_.age_edges;
    j["grid"]["n_collision_bins"] = grid_.n_collision_bins;
    j["grid"]["rri_options_ms"] = grid_.rri_options_ms;
    j["alpha"] = alpha;
    j["gamma"] = gamma;
    j["epsilon"] = epsilon;
    j["q"] = q_;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    f << j.dump(2) << '\n';
}

RatePolicy RatePolicy::load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    nlohmann::json j;
    f >> j;
    if (j.value("format", "") != "agesim-policy-v1")
        throw std::runtime_error("unrecognized policy checkpoint format");
    SituationGrid grid;
    grid.age_edges = j["grid"]["age_edges"].get<std::vector<double>>();
    grid.n_collision_bins = j["grid"]["n_collision_bins"].get<int>();
    grid.rri_options_ms = j["grid"]["rri_options_ms"].get<std::vector<int>>();
    RatePolicy p(grid);
    p.alpha = j["alpha"].get<double>();
    p.gamma = j["gamma"].get<double>();
    p.epsilon = j["epsilon"].get<double>();
    p.q_ = j["q"].get<std::vector<double>>();
    if (p.q_.size() != static_cast<size_t>(grid.n_states()) * grid.n_actions())
        throw std::runtime_error("policy checkpoint table size mismatch");
    return p;
}

double StylizedEnv::expected_avg_age(double period_ms, double success_prob, double delay_ms) {
    const double q = std::max(success_prob, 1e-6);
    return delay_ms + (period_ms * (2.0 - q) / q + 1.0) / 2.0;
}

double StylizedEnv::effective_collision(const SituationGrid& grid, int action,
                                        int coll_bin) const {
    const double x = grid.n_collision_bins > 1
                         ? static_cast<double>(coll_bin) / (grid.n_collision_bins - 1)
                         : 0.0;
    const double scale = congestion_floor + congestion_gain * x;
    return std::min(0.97, collision_prob[static_cast<size_t>(action)] * scale);
}

double StylizedEnv::reward_for(const SituationGrid& grid, const Situation& s,
                               int action) const {
    const double T = grid.rri_options_ms[static_cast<size_t>(action)];
    const double q = 1.0 - effective_collision(grid, action, s.coll_bin);
    const double steady = expected_avg_age(T, q, access_delay_ms);
    // expected time to the first delivery; the current age persists that long
    const double recovery = T / std::max(q, 1e-6);
    const double backlog = grid.age_bin_center_ms(s.age_bin) * recovery / epoch_ms;
    return -(steady + backlog);
}

PretrainReport pretrain(RatePolicy& policy, const StylizedEnv& env, long max_episodes,
                        Rng& rng, double td_tol) {
    (void)rng;  // the stylized model is closed-form; sweeps are deterministic
    const auto& grid = policy.grid();
    if (env.collision_prob.size() != static_cast<size_t>(grid.n_actions()))
        throw std::invalid_argument("collision_prob must cover every rri option");

    PretrainReport report;
    std::deque<double> recent;
    // deterministic full sweeps over (situation, action) so every table cell
    // is trained; the congestion bin is exogenous and persists, the age bin
    // follows the closed-form expected age of the chosen action
    for (;;) {
        for (int ab = 0; ab < grid.n_age_bins(); ++ab)
            for (int cb = 0; cb < grid.n_collision_bins; ++cb)
                for (int pa = 0; pa < grid.n_actions(); ++pa) {
                    const Situation s{ab, cb, pa};
                    for (int a = 0; a < grid.n_actions(); ++a) {
                        const double reward = env.reward_for(grid, s, a);
                        const double age_next = StylizedEnv::expected_avg_age(
                            grid.rri_options_ms[static_cast<size_t>(a)],
                            1.0 - env.effective_collision(grid, a, cb), env.access_delay_ms);
                        const Situation next{grid.age_bin(age_next), cb, a};
                        const double td = policy.online_update(s, a, reward, next);
                        report.episodes_run += 1;
                        recent.push_back(std::abs(policy.alpha * td));
                        if (recent.size() > 100) recent.pop_front();
                        if (recent.size() == 100 &&
                            *std::max_element(recent.begin(), recent.end()) < td_tol) {
                            report.converged = true;
                            report.final_max_td = *std::max_element(recent.begin(), recent.end());
                            return report;
                        }
                        if (report.episodes_run >= max_episodes) {
                            report.converged = false;
                            report.final_max_td =
                                recent.empty() ? 0.0
                                               : *std::max_element(recent.begin(), recent.end());
                            return report;
                        }
                    }
                }
    }
}

RewardBroadcast semi_supervisor_reward(const std::vector<AgeProcess>& controller_ages,
                                       const AgePenalty& penalty, double epoch_start_ms,
                                       double epoch_end_ms) {
    if (epoch_end_ms <= epoch_start_ms)
        throw std::invalid_argument("semi_supervisor_reward: empty epoch");
    RewardBroadcast out;
    out.epoch_start_ms = epoch_start_ms;
    out.epoch_end_ms = epoch_end_ms;
    for (const auto& proc : controller_ages) {
        double acc = 0.0;
        long count = 0;
        for (const auto& [t, age] : proc.samples()) {
            if (t < epoch_start_ms || t >= epoch_end_ms) continue;
            acc += penalty(age);
            count += 1;
        }
        if (count == 0) throw std::invalid_argument("semi_supervisor_reward: empty epoch");
        out.reward.push_back(-acc / static_cast<double>(count));
        out.current_age.push_back(proc.age_at(epoch_end_ms));
    }
    return out;
}

}  // namespace agesim
