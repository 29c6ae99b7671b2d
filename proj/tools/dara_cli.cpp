// dara: collect / train-classifier / augment / train / eval / experiment.
// Exit codes: 0 ok, 2 config, 3 I/O, 4 numerical.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "dara/dara.hpp"

using namespace dara;
namespace fs = std::filesystem;

namespace {

struct ConfigFlags {
    std::string file;
    std::vector<std::string> sets;

    void attach(CLI::App* app) {
        app->add_option("--config", file, "INI config file; keys are section.key")->capture_default_str();
        app->add_option("--set", sets, "override one config key, section.key=value (repeatable)");
    }

    RunConfig build() const {
        RunConfig c;
        if (!file.empty()) c.merge_file(file);
        for (const auto& kv : sets) {
            auto eq = kv.find('=');
            if (eq == std::string::npos) throw InputError("--set expects section.key=value, got '" + kv + "'");
            c.set(trim(kv.substr(0, eq)), kv.substr(eq + 1));
        }
        return c;
    }
};

std::string parent_dir(const std::string& path) {
    auto p = fs::path(path).parent_path();
    return p.empty() ? "." : p.string();
}

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory '" + dir + "'");
}

void summary(const std::vector<std::pair<std::string, std::string>>& kv) {
    for (std::size_t i = 0; i < kv.size(); ++i) std::cout << (i ? " " : "") << kv[i].first << '=' << kv[i].second;
    std::cout << '\n';
}

std::string num(double v) { return fmt_short(v, 10); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamics-aware reward augmentation for offline RL under dynamics shift"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every subcommand");

    // collect
    auto* collect_cmd = app.add_subcommand("collect", "roll out a behavior policy and write a dataset");
    std::string c_env, c_policy = "random", c_out;
    long long c_n = 100000, c_seed = 0;
    bool c_mask = false;
    collect_cmd->add_option("--env", c_env, "environment id, e.g. map2d-source")->required();
    collect_cmd->add_option("--policy", c_policy, "random, medium, expert or medium-replay")->capture_default_str();
    collect_cmd->add_option("--n", c_n, "transitions to record")->capture_default_str();
    collect_cmd->add_option("--seed", c_seed, "collection seed")->capture_default_str();
    collect_cmd->add_option("--out", c_out, "output dataset path")->required();
    collect_cmd->add_flag("--mask-rewards", c_mask, "write rewards as NA")->capture_default_str();

    // train-classifier
    auto* clf_cmd = app.add_subcommand("train-classifier", "fit the (s,a,s') and (s,a) domain classifiers");
    std::string k_source, k_target, k_out;
    ConfigFlags k_cfg;
    clf_cmd->add_option("--source", k_source, "source dataset")->required();
    clf_cmd->add_option("--target", k_target, "target dataset")->required();
    clf_cmd->add_option("--out", k_out, "output classifier path")->required();
    k_cfg.attach(clf_cmd);

    // augment
    auto* aug_cmd = app.add_subcommand("augment", "rewrite source rewards r - eta * delta_r");
    std::string a_source, a_clf, a_out;
    double a_eta = 0.1;
    bool a_record = false, a_floor = false;
    ConfigFlags a_cfg;
    aug_cmd->add_option("--source", a_source, "source dataset")->required();
    aug_cmd->add_option("--classifier", a_clf, "classifier pair file")->required();
    aug_cmd->add_option("--out", a_out, "output dataset path")->required();
    auto* eta_opt = aug_cmd->add_option("--eta", a_eta, "reward modification coefficient")->capture_default_str();
    auto* rec_opt = aug_cmd->add_flag("--record-delta", a_record, "append delta_r as an extra column")->capture_default_str();
    auto* floor_opt = aug_cmd->add_flag("--floor-zero", a_floor, "clamp delta_r below at 0")->capture_default_str();
    a_cfg.attach(aug_cmd);

    // train
    auto* train_cmd = app.add_subcommand("train", "train an offline agent on one or more datasets");
    std::vector<std::string> t_data;
    std::string t_env, t_alg = "conservative", t_clf, t_out;
    double t_alpha = 0.1, t_eta = 0.1;
    ConfigFlags t_cfg;
    train_cmd->add_option("--data", t_data, "dataset files, concatenated in order")->required();
    train_cmd->add_option("--env", t_env, "lattice env id (default: env of the first dataset)");
    auto* alg_opt = train_cmd->add_option("--algorithm", t_alg, "fqi-constrained, conservative, dwr or model-based")
                        ->capture_default_str();
    auto* alpha_opt = train_cmd->add_option("--alpha", t_alpha, "conservatism weight")->capture_default_str();
    auto* teta_opt = train_cmd->add_option("--eta", t_eta, "delta_r weight for dwr and model-based")->capture_default_str();
    train_cmd->add_option("--classifier", t_clf, "classifier pair for dwr / model-based (default: zero pair)");
    train_cmd->add_option("--out", t_out, "output Q-function path")->required();
    t_cfg.attach(train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "roll out the greedy policy of a Q-function");
    std::string e_env, e_q, e_out;
    int e_episodes = 10;
    long long e_seed = 0;
    eval_cmd->add_option("--env", e_env, "environment id to evaluate in")->required();
    eval_cmd->add_option("--q", e_q, "Q-function file")->required();
    eval_cmd->add_option("--episodes", e_episodes, "evaluation episodes")->capture_default_str();
    eval_cmd->add_option("--seed", e_seed, "evaluation seed")->capture_default_str();
    eval_cmd->add_option("--out", e_out, "optional report file (key=value lines)");

    // experiment
    auto* exp_cmd = app.add_subcommand("experiment", "run a grid and write results.csv plus SVG plots");
    std::string x_grid, x_out = "experiment_out";
    int x_workers = 1;
    std::vector<std::string> x_sets;
    exp_cmd->add_option("--grid", x_grid, "grid config file")->required();
    exp_cmd->add_option("--out", x_out, "output directory")->capture_default_str();
    auto* workers_opt = exp_cmd->add_option("--workers", x_workers, "parallel workers")->capture_default_str();
    exp_cmd->add_option("--set", x_sets, "override one config key, section.key=value (repeatable)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
        return 2;
    }

    try {
        if (*collect_cmd) {
            Env env = make_env(c_env);
            OfflineDataset ds = collect_tagged(env, c_policy, c_n, c_seed, default_label(c_env));
            if (c_mask) ds = mask_rewards(std::move(ds));
            save(ds, c_out);
            summary({{"command", "collect"}, {"out", c_out}, {"env", c_env}, {"count", std::to_string(ds.size())},
                     {"seed", std::to_string(c_seed)}});
        } else if (*clf_cmd) {
            RunConfig cfg = k_cfg.build();
            auto src = load(k_source), tgt = load(k_target);
            ClassifierPair p = train_pair(src, tgt, cfg.classifier());
            p.clip_bound = cfg.clip_bound();
            save(p, k_out);
            cfg.write_resolved(parent_dir(k_out));
            summary({{"command", "train-classifier"}, {"out", k_out}, {"loss_sas", num(p.final_loss_sas)},
                     {"loss_sa", num(p.final_loss_sa)}, {"source", std::to_string(src.size())},
                     {"target", std::to_string(tgt.size())}});
        } else if (*aug_cmd) {
            RunConfig cfg = a_cfg.build();
            if (*eta_opt) cfg.set("augment.eta", num(a_eta));
            if (*rec_opt) cfg.set("augment.record_delta", a_record ? "1" : "0");
            if (*floor_opt) cfg.set("augment.floor_zero", a_floor ? "1" : "0");
            auto src = load(a_source);
            ClassifierPair p = load_classifier(a_clf);
            OfflineDataset out = augment_dataset(src, p, cfg.augment());
            save(out, a_out);
            cfg.write_resolved(parent_dir(a_out));
            double shift = 0;
            for (std::size_t i = 0; i < out.size(); ++i) shift += out.rows[i].r - src.rows[i].r;
            summary({{"command", "augment"}, {"out", a_out}, {"eta", num(out.meta.eta)},
                     {"count", std::to_string(out.size())},
                     {"mean_reward_change", num(out.empty() ? 0.0 : shift / double(out.size()))}});
        } else if (*train_cmd) {
            RunConfig cfg = t_cfg.build();
            if (*alg_opt) cfg.set("trainer.algorithm", t_alg);
            if (*alpha_opt) cfg.set("trainer.alpha", num(t_alpha));
            if (*teta_opt) cfg.set("trainer.eta", num(t_eta));
            TrainerConfig tc = cfg.trainer();
            OfflineDataset data;
            for (const auto& f : t_data) data = mix(data, load(f));
            Env env = make_env(t_env.empty() ? data.meta.env_id : t_env);
            ClassifierPair scorer =
                t_clf.empty() ? zero_pair(env.state_dim, env.n_actions) : load_classifier(t_clf);
            QFunction q;
            int iters = 0;
            if (tc.algorithm == "fqi-constrained" || tc.algorithm == "conservative") {
                TrainResult r = tc.algorithm == "conservative" ? train_conservative(data, env, tc)
                                                               : train_fqi_constrained(data, env, tc);
                q = r.q;
                iters = r.iterations;
            } else if (tc.algorithm == "dwr") {
                DwrResult r = train_dwr(data, env, scorer, tc);
                q.kind = QFunction::Kind::table;
                q.algorithm = "dwr";
                q.env_id = env.id;
                q.table = r.pi;  // greedy over pi(a|s) is the extracted policy
            } else {
                auto r = train_model_based(data.select('S'), data.select('T'), env, scorer, tc, cfg.ensemble());
                q = r.trained.q;
                iters = r.trained.iterations;
            }
            q.env_id = env.id;
            save(q, t_out);
            cfg.write_resolved(parent_dir(t_out));
            summary({{"command", "train"}, {"out", t_out}, {"algorithm", tc.algorithm},
                     {"records", std::to_string(data.size())}, {"iterations", std::to_string(iters)}});
        } else if (*eval_cmd) {
            Env env = make_env(e_env);
            QFunction q = load_qfunction(e_q);
            EvalReport rep = evaluate(env, q.greedy(env), e_episodes, e_seed, e_q);
            std::vector<std::pair<std::string, std::string>> kv{
                {"command", "eval"},          {"env", e_env},
                {"episodes", std::to_string(rep.episodes)},
                {"mean_return", num(rep.mean_return)},
                {"std_return", num(rep.std_return)},
                {"norm_score", num(rep.norm_score)},
                {"goal_rate", num(rep.goal_rate)}};
            if (!e_out.empty()) {
                std::ofstream os(e_out, std::ios::binary);
                if (!os) throw IoError("cannot write '" + e_out + "'");
                for (const auto& [k, v] : kv) os << k << '=' << v << '\n';
                if (!os) throw IoError("write failed for '" + e_out + "'");
            }
            summary(kv);
        } else if (*exp_cmd) {
            RunConfig cfg = RunConfig::from_file(x_grid);
            for (const auto& kv : x_sets) {
                auto eq = kv.find('=');
                if (eq == std::string::npos) throw InputError("--set expects section.key=value, got '" + kv + "'");
                cfg.set(trim(kv.substr(0, eq)), kv.substr(eq + 1));
            }
            if (*workers_opt) cfg.set("grid.workers", std::to_string(x_workers));
            GridSpec g = cfg.grid();
            ensure_dir(x_out);
            MatrixRunner runner(g);
            auto rows = runner.run();
            write_outputs(runner, rows, x_out);
            cfg.write_resolved(x_out);
            std::size_t ok = 0;
            for (const auto& r : rows) ok += r.status == "ok";
            summary({{"command", "experiment"}, {"out", x_out}, {"cells", std::to_string(rows.size())},
                     {"ok", std::to_string(ok)}, {"csv", (fs::path(x_out) / "results.csv").string()}});
        }
    } catch (const dara::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
