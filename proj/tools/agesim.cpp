// Command-line front end: scenario runs, the stylized pretrainer, and a
// bench of the abstract star-network policies. Outputs are written to a
// temporary directory and renamed into place only on success.

#include <CLI11.hpp>
#include <json.hpp>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "agesim/config.hpp"
#include "agesim/engine.hpp"
#include "agesim/intersection.hpp"
#include "agesim/platoon.hpp"
#include "agesim/smart.hpp"
#include "agesim/star.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace agesim;

namespace {

// All artifacts for one invocation land atomically: build them in a scratch
// dir next to the target, then rename. A partially written dir never appears
// under the requested name.
class OutputDir {
public:
    explicit OutputDir(const std::string& target) : target_(target) {
        if (fs::exists(target_)) throw std::runtime_error("output dir already exists: " + target);
        tmp_ = target_ + ".tmp-" + std::to_string(::getpid());
        fs::create_directories(tmp_);
    }
    ~OutputDir() {
        if (!committed_) {
            std::error_code ec;
            fs::remove_all(tmp_, ec);
        }
    }
    fs::path path(const std::string& name) const { return fs::path(tmp_) / name; }
    void commit() {
        fs::rename(tmp_, target_);
        committed_ = true;
    }

private:
    std::string target_;
    std::string tmp_;
    bool committed_ = false;
};

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot open " + p.string());
    f << text;
}

StylizedEnv default_pretrain_env() {
    StylizedEnv env;
    // background contention felt by one updater: shorter periods collide more
    env.collision_prob = {0.55, 0.25, 0.12, 0.06, 0.03};
    env.access_delay_ms = 5.0;
    return env;
}

json platoon_report_json(const PlatoonRunReport& r) {
    return json{{"crashed", r.crashed},
                {"crash_time_ms", r.crash_time_ms},
                {"min_gap_m", r.min_gap_m},
                {"links_attempted", r.links_attempted},
                {"links_delivered", r.links_delivered},
                {"attempts", r.attempts},
                {"collisions", r.collisions},
                {"success_rate", r.success_rate},
                {"mean_status_age_ms", r.mean_status_age_ms},
                {"fleet_avg_penalty", r.fleet_avg_penalty},
                {"max_abs_gap_error_m", r.max_abs_gap_error_m},
                {"mean_access_delay_ms", r.mean_access_delay_ms},
                {"mean_rri_ms", r.mean_rri_ms}};
}

json intersection_report_json(const IntersectionRunReport& r) {
    return json{{"spawned", r.spawned},
                {"exited", r.exited},
                {"all_exited", r.all_exited},
                {"deadline_missed", r.deadline_missed},
                {"cell_conflict", r.cell_conflict},
                {"mean_trip_ms", r.mean_trip_ms},
                {"requests", r.requests},
                {"confirms", r.confirms},
                {"rejects", r.rejects},
                {"success_rate", r.success_rate},
                {"mean_rri_ms", r.mean_rri_ms},
                {"duration_ms", r.duration_ms}};
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::string policy_in;
    int runs = 0;  // 0 = take from config
    int jobs = 1;
    bool trace = false;
    uint64_t seed = 0;
    bool seed_set = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool with_trace) {
    cmd->add_option("--config", a.config_path, "JSON config file");
    cmd->add_option("--out", a.out_dir, "output directory (created atomically)")->required();
    cmd->add_option("--policy-in", a.policy_in, "pretrained rate-policy table (JSON)");
    cmd->add_option("--runs", a.runs, "override number of Monte-Carlo runs");
    cmd->add_option("--jobs", a.jobs, "worker threads");
    cmd->add_option("--seed", a.seed, "override master seed")->each([&](const std::string&) {
        a.seed_set = true;
    });
    if (with_trace) cmd->add_flag("--trace", a.trace, "write MAC/age trace CSVs for run 0");
}

RootConfig load_or_default(const CommonArgs& a, const std::string& scenario) {
    RootConfig cfg;
    if (!a.config_path.empty()) cfg = load_root_config(a.config_path);
    cfg.scenario = scenario;
    if (a.runs > 0) cfg.runs = a.runs;
    if (a.seed_set) cfg.seed = a.seed;
    return cfg;
}

std::optional<RatePolicy> maybe_load_policy(const CommonArgs& a, const RootConfig& cfg) {
    if (!a.policy_in.empty()) return RatePolicy::load_json(a.policy_in);
    if (cfg.policy.kind == UpdatePolicyCfg::Kind::SmartLite &&
        parse_comms(cfg.comms) == CommsMode::Mode4)
        throw std::runtime_error("smart policy over mode4 needs --policy-in (see 'pretrain')");
    return std::nullopt;
}

int cmd_run_platoon(const CommonArgs& a) {
    RootConfig root = load_or_default(a, "platoon");
    const PlatoonConfig pcfg = make_platoon_config(root);
    const auto policy = maybe_load_policy(a, root);
    const RatePolicy* pol = policy ? &*policy : nullptr;

    OutputDir out(a.out_dir);
    std::vector<MacEvent> mac_trace;
    std::vector<AgeProcess> age_trace;
    auto reports = monte_carlo<PlatoonRunReport>(
        root.runs, root.seed, a.jobs, [&](uint64_t seed, long index) {
            return run_platoon(pcfg, seed, pol, a.trace && index == 0 ? &mac_trace : nullptr,
                               a.trace && index == 0 ? &age_trace : nullptr);
        });

    json j;
    j["config"] = materialize(root);
    j["runs"] = json::array();
    int crashes = 0;
    double succ = 0.0;
    for (const auto& r : reports) {
        j["runs"].push_back(platoon_report_json(r));
        crashes += r.crashed ? 1 : 0;
        succ += r.success_rate;
    }
    j["aggregate"] = {{"n_runs", reports.size()},
                      {"crash_count", crashes},
                      {"mean_success_rate", succ / static_cast<double>(reports.size())}};
    write_text(out.path("results.json"), j.dump(2) + "\n");

    std::ofstream csv(out.path("runs.csv"));
    csv << "run,crashed,crash_time_ms,min_gap_m,success_rate,mean_status_age_ms,"
           "fleet_avg_penalty,mean_rri_ms\n";
    for (size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        csv << i << ',' << r.crashed << ',' << r.crash_time_ms << ',' << r.min_gap_m << ','
            << r.success_rate << ',' << r.mean_status_age_ms << ',' << r.fleet_avg_penalty << ','
            << r.mean_rri_ms << '\n';
    }
    csv.close();
    if (a.trace) {
        write_mac_trace_csv(mac_trace, out.path("mac_trace.csv").string());
        write_age_trace_csv(age_trace, out.path("age_trace.csv").string());
    }
    out.commit();
    std::cout << "platoon: " << reports.size() << " run(s), " << crashes << " crash(es)\n";
    return 0;
}

int cmd_run_intersection(const CommonArgs& a) {
    RootConfig root = load_or_default(a, "intersection");
    const IntersectionConfig icfg = make_intersection_config(root);
    const auto policy = maybe_load_policy(a, root);
    const RatePolicy* pol = policy ? &*policy : nullptr;

    OutputDir out(a.out_dir);
    auto reports = monte_carlo<IntersectionRunReport>(
        root.runs, root.seed, a.jobs,
        [&](uint64_t seed, long) { return run_intersection(icfg, seed, pol); });

    json j;
    j["config"] = materialize(root);
    j["runs"] = json::array();
    double trip = 0.0;
    for (const auto& r : reports) {
        j["runs"].push_back(intersection_report_json(r));
        trip += r.mean_trip_ms;
    }
    j["aggregate"] = {{"n_runs", reports.size()},
                      {"mean_trip_ms", trip / static_cast<double>(reports.size())}};
    write_text(out.path("results.json"), j.dump(2) + "\n");

    std::ofstream csv(out.path("runs.csv"));
    csv << "run,all_exited,deadline_missed,cell_conflict,mean_trip_ms,success_rate,mean_rri_ms\n";
    for (size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        csv << i << ',' << r.all_exited << ',' << r.deadline_missed << ',' << r.cell_conflict
            << ',' << r.mean_trip_ms << ',' << r.success_rate << ',' << r.mean_rri_ms << '\n';
    }
    csv.close();
    out.commit();
    std::cout << "intersection: " << reports.size() << " run(s), mean trip "
              << trip / static_cast<double>(reports.size()) << " ms\n";
    return 0;
}

int cmd_policy_bench(const std::string& out_dir, int n, uint64_t seed, long horizon) {
    OutputDir out(out_dir);
    const auto m = StarNetworkModel::symmetric(n, 0.8);
    json j;
    j["model"] = {{"n_terminals", n}, {"success_prob", 0.8}, {"horizon", horizon}, {"seed", seed}};

    Rng r1(seed, 1);
    j["round_robin"] = schedule_round_robin(m, horizon, r1).weighted_avg_age(m);
    Rng r2(seed, 2);
    j["max_index"] = simulate_index_policy(m, horizon, r2).weighted_avg_age(m);
    const auto opt = optimize_aloha_p(m, 40, horizon / 4, seed + 3);
    Rng r3(seed, 4);
    j["aloha"] = {{"p_star", opt.p_star},
                  {"weighted_avg_age",
                   simulate_aloha(m, std::vector<double>(static_cast<size_t>(n), opt.p_star),
                                  horizon, r3)
                       .weighted_avg_age(m)}};
    const double subsidy = tune_subsidy(m, 1.0, horizon / 4, seed + 5);
    Rng r4(seed, 6);
    j["threshold"] = {{"subsidy", subsidy},
                      {"weighted_avg_age",
                       simulate_dynamic_index(m, subsidy, horizon, r4).weighted_avg_age(m)}};
    if (n <= 4) j["oracle"] = brute_force_optimal(m, 30).avg_weighted_age;

    write_text(out.path("bench.json"), j.dump(2) + "\n");
    out.commit();
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_pretrain(const std::string& out_path, long max_episodes, uint64_t seed) {
    RatePolicy policy;
    Rng rng(seed, 99);
    const auto rep = pretrain(policy, default_pretrain_env(), max_episodes, rng);
    policy.save_json(out_path);
    std::cout << "pretrain: " << rep.episodes_run << " episodes, "
              << (rep.converged ? "converged" : "not converged")
              << ", max |alpha*td| = " << rep.final_max_td << '\n';
    return rep.converged ? 0 : 1;
}

int cmd_explain_config(const std::string& config_path) {
    RootConfig cfg;
    if (!config_path.empty()) cfg = load_root_config(config_path);
    std::cout << materialize(cfg).dump(2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic co-simulator for information-latency-aware V2X updating"};
    app.require_subcommand(1);

    CommonArgs plat_args, ix_args;
    auto* plat = app.add_subcommand("run-platoon", "platoon braking scenario");
    add_common(plat, plat_args, true);
    auto* ix = app.add_subcommand("run-intersection", "mixed-autonomy intersection scenario");
    add_common(ix, ix_args, false);

    std::string bench_out;
    int bench_n = 3;
    uint64_t bench_seed = 7;
    long bench_horizon = 200000;
    auto* bench = app.add_subcommand("policy-bench", "compare star-network access policies");
    bench->add_option("--out", bench_out, "output directory")->required();
    bench->add_option("--terminals", bench_n, "number of terminals");
    bench->add_option("--seed", bench_seed, "seed");
    bench->add_option("--horizon", bench_horizon, "slots per policy");

    std::string pre_out = "policy.json";
    long pre_episodes = 2000000;
    uint64_t pre_seed = 1;
    auto* pre = app.add_subcommand("pretrain", "train the rate policy on the stylized model");
    pre->add_option("--pretrain-out,--out", pre_out, "where to save the table");
    pre->add_option("--episodes", pre_episodes, "episode budget");
    pre->add_option("--seed", pre_seed, "seed");

    std::string explain_cfg;
    auto* expl = app.add_subcommand("explain-config", "print the fully materialized config");
    expl->add_option("--config", explain_cfg, "JSON config file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (plat->parsed()) return cmd_run_platoon(plat_args);
        if (ix->parsed()) return cmd_run_intersection(ix_args);
        if (bench->parsed()) return cmd_policy_bench(bench_out, bench_n, bench_seed, bench_horizon);
        if (pre->parsed()) return cmd_pretrain(pre_out, pre_episodes, pre_seed);
        if (expl->parsed()) return cmd_explain_config(explain_cfg);
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        // config/usage problems exit 2, anything else is a run failure
        return std::string(e.what()).rfind("config:", 0) == 0 ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
