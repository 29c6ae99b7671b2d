#pragma once

// Target-domain evaluation, probes, Delta r audits and the experiment grid.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dara/augment.hpp"
#include "dara/classifier.hpp"
#include "dara/dataset.hpp"
#include "dara/mdp.hpp"
#include "dara/offline_rl.hpp"

namespace dara {

struct Anchors {
    double random = 0.0;
    double expert = 0.0;
};

/// Exact expected undiscounted horizon returns of the uniform policy and of
/// the converged VI-greedy policy on the env's twin.
inline Anchors compute_anchors(const Env& env) {
    TabularMdp m = env.tabular();
    Anchors a;
    a.random = finite_horizon_return(m, Policy::uniform(env.n_actions), env.horizon);
    a.expert = finite_horizon_return(m, Policy::greedy(value_iteration(m)), env.horizon);
    return a;
}

namespace detail {
inline std::string cache_name(const std::string& id) {
    std::string s = id;
    for (auto& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-') c = '_';
    return "anchors-" + s + ".txt";
}
}  // namespace detail

/// Process-wide memo, backed by $DARA_CACHE_DIR when set.
inline Anchors anchors_for(const Env& env) {
    static std::mutex mu;
    static std::map<std::string, Anchors> memo;
    {
        std::lock_guard<std::mutex> lk(mu);
        auto it = memo.find(env.id);
        if (it != memo.end()) return it->second;
    }
    const char* dir = std::getenv("DARA_CACHE_DIR");
    std::filesystem::path file;
    if (dir && *dir) {
        file = std::filesystem::path(dir) / detail::cache_name(env.id);
        std::ifstream is(file);
        std::string l1, l2;
        if (is && std::getline(is, l1) && std::getline(is, l2) && l1.rfind("random=", 0) == 0 &&
            l2.rfind("expert=", 0) == 0) {
            Anchors a{std::strtod(l1.c_str() + 7, nullptr), std::strtod(l2.c_str() + 7, nullptr)};
            std::lock_guard<std::mutex> lk(mu);
            memo[env.id] = a;
            return a;
        }
    }
    Anchors a = compute_anchors(env);
    if (!file.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(file.parent_path(), ec);
        std::ofstream os(file);
        if (os) os << "random=" << fmt(a.random) << "\nexpert=" << fmt(a.expert) << "\n";
    }
    std::lock_guard<std::mutex> lk(mu);
    memo[env.id] = a;
    return a;
}

inline double normalized_score(double ret, const Anchors& a) {
    return 100.0 * (ret - a.random) / (a.expert - a.random);
}

struct EvalReport {
    std::string env_id;
    std::string policy_id;
    int episodes = 0;
    double mean_return = 0.0;
    double std_return = 0.0;
    double norm_score = 0.0;
    double goal_rate = 0.0;
    long long seed = 0;
    std::map<std::string, double> probes;
    std::vector<State> first_path;  // states visited in the first episode
};

/// Seeded undiscounted rollouts in `env`; an episode counts as reaching the
/// goal when it ends on a terminal transition.
inline EvalReport evaluate(const Env& env, const Policy& pi, int episodes, long long seed,
                           const std::string& policy_id = "policy") {
    if (episodes <= 0) throw InputError("evaluate needs episodes > 0");
    EvalReport rep;
    rep.env_id = env.id;
    rep.policy_id = policy_id;
    rep.episodes = episodes;
    rep.seed = seed;
    Rng rng(mix_seed(std::uint64_t(seed), 0xe7a1));
    std::vector<double> rets;
    int goals = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        State s = env.sample_initial(rng);
        double ret = 0.0;
        if (ep == 0) rep.first_path.push_back(s);
        for (int t = 0; t < env.horizon; ++t) {
            auto r = env.step(s, pi.act(env.index_of(s), t, rng));
            ret += r.reward;
            if (r.done) {
                ++goals;
                break;
            }
            s = std::move(r.next);
            if (ep == 0) rep.first_path.push_back(s);
        }
        rets.push_back(ret);
    }
    double m = 0;
    for (double r : rets) m += r;
    m /= episodes;
    double v = 0;
    for (double r : rets) v += (r - m) * (r - m);
    rep.mean_return = m;
    rep.std_return = std::sqrt(v / episodes);
    rep.goal_rate = double(goals) / episodes;
    rep.norm_score = normalized_score(m, anchors_for(env));
    return rep;
}

struct ProbeResult {
    double mean = 0.0;
    std::vector<double> values;
};

inline ProbeResult q_probe(const QFunction& q, const Env& env, const std::vector<std::pair<State, int>>& probe) {
    if (probe.empty()) throw InputError("probe set is empty");
    ProbeResult r;
    for (const auto& [s, a] : probe) r.values.push_back(q.value(env, s, a));
    for (double v : r.values) r.mean += v;
    r.mean /= double(r.values.size());
    return r;
}

/// Non-goal lattice pairs whose deterministic successor differs between the
/// two envs (wall-blocked moves on map2d, clipped sweeps on clip1d).
inline std::vector<std::pair<State, int>> obstructive_pairs(const Env& source, const Env& target) {
    std::vector<std::pair<State, int>> out;
    for (int s = 0; s < target.n_states(); ++s) {
        State st = target.state_of(s);
        for (int a = 0; a < target.n_actions; ++a) {
            auto rs = source.step(st, a), rt = target.step(st, a);
            if (rt.done) continue;
            if (rs.next != rt.next) out.push_back({st, a});
        }
    }
    return out;
}

/// Restricts a probe set to pairs present in a dataset.
inline std::vector<std::pair<State, int>> supported(const std::vector<std::pair<State, int>>& probe,
                                                    const OfflineDataset& ds, const Env& env) {
    std::vector<char> seen(std::size_t(env.n_states()) * env.n_actions, 0);
    for (const auto& t : ds.rows) seen[std::size_t(env.index_of(t.s)) * env.n_actions + t.a] = 1;
    std::vector<std::pair<State, int>> out;
    for (const auto& p : probe)
        if (seen[std::size_t(env.index_of(p.first)) * env.n_actions + p.second]) out.push_back(p);
    return out;
}

using FeasibilityOracle = std::function<bool(const Transition&)>;

/// Feasible in the target iff the target step reproduces the recorded s'.
inline FeasibilityOracle target_feasibility(const Env& target) {
    return [target](const Transition& t) {
        auto r = target.step(t.s, t.a);
        if (r.next.size() != t.s_next.size()) return false;
        for (std::size_t i = 0; i < r.next.size(); ++i)
            if (std::abs(r.next[i] - t.s_next[i]) > 1e-9) return false;
        return true;
    };
}

struct AuditResult {
    double agreement = 0.0;  // fraction where (Delta r > 0) == infeasible
    double mean_dr_infeasible = 0.0;
    double mean_dr_feasible = 0.0;
    std::size_t n_infeasible = 0;
    std::size_t n_feasible = 0;
    std::vector<double> delta;
    std::vector<char> infeasible;
};

template <class Scorer>
AuditResult delta_r_audit(const Scorer& scorer, const OfflineDataset& ds, const FeasibilityOracle& feasible) {
    AuditResult a;
    if (ds.empty()) return a;
    a.delta = scorer.delta_r(ds);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        bool inf = !feasible(ds.rows[i]);
        a.infeasible.push_back(inf);
        if ((a.delta[i] > 0) == inf) ++agree;
        if (inf) {
            ++a.n_infeasible;
            a.mean_dr_infeasible += a.delta[i];
        } else {
            ++a.n_feasible;
            a.mean_dr_feasible += a.delta[i];
        }
    }
    if (a.n_infeasible) a.mean_dr_infeasible /= double(a.n_infeasible);
    if (a.n_feasible) a.mean_dr_feasible /= double(a.n_feasible);
    a.agreement = double(agree) / double(ds.size());
    return a;
}

/// One episode of the converged VI-greedy policy in `env`.
inline OfflineDataset expert_trajectory(const Env& env, char label) {
    Policy pi = Policy::greedy(value_iteration(env));
    OfflineDataset ds;
    ds.meta = make_meta(env, "expert", 0);
    State s = env.initial_state();
    for (int t = 0; t < env.horizon; ++t) {
        int a = pi.q.argmax(env.index_of(s));
        auto r = env.step(s, a);
        ds.rows.push_back({s, a, r.reward, false, r.next, r.done, label});
        if (r.done) break;
        s = r.next;
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Experiment grid

struct GridSpec {
    std::vector<std::string> envs{"map2d"};
    std::vector<std::string> arms{"10T", "1T", "1T+10S-noaug", "1T+10S-dara"};
    std::vector<std::string> algorithms{"conservative"};
    std::vector<double> etas{1.0};
    std::vector<long long> target_sizes{10000};
    std::vector<long long> seeds{0, 1, 2, 3, 4};
    long long source_size = 100000;
    std::string behavior = "random";
    TrainConfig classifier;
    double clip_bound = 10.0;
    AugmentConfig augment;  // eta is taken from the cell
    TrainerConfig trainer;
    EnsembleConfig ensemble;
    int episodes = 10;
    int workers = 1;
};

inline bool is_dara_arm(const std::string& arm) { return arm == "1T+10S-dara"; }

inline void validate_grid(const GridSpec& g) {
    if (g.envs.empty() || g.arms.empty() || g.algorithms.empty() || g.seeds.empty() || g.target_sizes.empty())
        throw InputError("grid needs at least one env, arm, algorithm, target size and seed");
    for (const auto& e : g.envs) make_pair(e);
    for (const auto& a : g.arms)
        if (a != "10T" && a != "1T" && a != "1T+10S-noaug" && a != "1T+10S-dara") throw InputError("unknown arm '" + a + "'");
    for (const auto& a : g.algorithms)
        if (a != "fqi-constrained" && a != "conservative" && a != "dwr" && a != "model-based")
            throw InputError("unknown algorithm '" + a + "'");
    for (double e : g.etas)
        if (!(e >= 0)) throw InputError("eta values must be non-negative");
    for (auto t : g.target_sizes)
        if (t < 0) throw InputError("target sizes must be non-negative");
    if (g.source_size <= 0) throw InputError("source size must be positive");
    if (g.episodes <= 0) throw InputError("episodes must be positive");
    if (g.workers <= 0) throw InputError("workers must be positive");
    g.classifier.validate();
    g.trainer.validate();
}

struct Cell {
    std::string env, arm, algorithm;
    double eta = 0.0;  // only meaningful for the DARA arm
    long long target_size = 0;
    long long seed = 0;
};

struct CellResult {
    Cell cell;
    std::string status = "ok";  // ok | FAILED-BY-DESIGN | NO-DATA
    double mean_return = 0, std_return = 0, norm_score = 0, goal_rate = 0;
    bool has_probe_q = false, has_agreement = false;
    double probe_q = 0, agreement = 0;
    std::vector<State> path;
};

/// Cells in CSV order: env, arm, algorithm, eta (DARA arm only), target size, seed.
inline std::vector<Cell> expand(const GridSpec& g) {
    std::vector<Cell> out;
    for (const auto& e : g.envs)
        for (const auto& arm : g.arms)
            for (const auto& alg : g.algorithms) {
                std::vector<double> etas = is_dara_arm(arm) ? g.etas : std::vector<double>{0.0};
                for (double eta : etas)
                    for (auto ts : g.target_sizes)
                        for (auto sd : g.seeds) out.push_back({e, arm, alg, eta, ts, sd});
            }
    return out;
}

namespace detail {
template <class K, class V>
class OnceMap {
public:
    template <class F>
    std::shared_future<V> get(const K& k, F make) {
        std::promise<V> p;
        std::shared_future<V> f;
        {
            std::lock_guard<std::mutex> lk(mu_);
            auto it = m_.find(k);
            if (it != m_.end()) return it->second;
            f = p.get_future().share();
            m_.emplace(k, f);
        }
        try {
            p.set_value(make());
        } catch (...) {
            p.set_exception(std::current_exception());
        }
        return f;
    }

private:
    std::mutex mu_;
    std::map<K, std::shared_future<V>> m_;
};
}  // namespace detail

struct CellData {
    OfflineDataset source, target_full, target_1t;
};

/// Deterministic experiment runner; caches data and classifiers per
/// (env, target size, seed) so arms, algorithms and etas share them.
class MatrixRunner {
public:
    explicit MatrixRunner(GridSpec g) : g_(std::move(g)) { validate_grid(g_); }

    const GridSpec& grid() const { return g_; }

    std::shared_ptr<const CellData> data(const std::string& env, long long tsize, long long seed) {
        return data_.get({env, tsize, seed}, [&] {
                        EnvPair p = make_pair(env);
                        auto d = std::make_shared<CellData>();
                        auto s = std::uint64_t(seed);
                        d->source = collect_tagged(p.source, g_.behavior, g_.source_size, (long long)mix_seed(s, 11) >> 2, 'S');
                        if (tsize > 0) {
                            d->target_full = collect_tagged(p.target, g_.behavior, 10 * tsize, (long long)mix_seed(s, 12) >> 2, 'T');
                            d->target_1t = subsample(d->target_full, 0.1, (long long)mix_seed(s, 13) >> 2);
                        } else {
                            d->target_full.meta = d->target_1t.meta = make_meta(p.target, g_.behavior, 0);
                        }
                        return std::shared_ptr<const CellData>(d);
                    }).get();
    }

    /// Throws the classifier module's error when the target set is empty.
    std::shared_ptr<const ClassifierPair> classifier(const std::string& env, long long tsize, long long seed) {
        return clf_.get({env, tsize, seed}, [&] {
                       auto d = data(env, tsize, seed);
                       TrainConfig c = g_.classifier;
                       c.seed = mix_seed(c.seed, std::uint64_t(seed));
                       EnvPair p = make_pair(env);
                       auto pair = std::make_shared<ClassifierPair>(train_pair(d->source, d->target_1t, p.target.n_actions, c));
                       pair->clip_bound = g_.clip_bound;
                       return std::shared_ptr<const ClassifierPair>(pair);
                   }).get();
    }

    CellResult run_cell(const Cell& c) {
        CellResult out;
        out.cell = c;
        EnvPair pair = make_pair(c.env);
        auto d = data(c.env, c.target_size, c.seed);
        std::shared_ptr<const ClassifierPair> clf;
        ClassifierPair zero = zero_pair(pair.target.state_dim, pair.target.n_actions);
        if (is_dara_arm(c.arm)) {
            try {
                clf = classifier(c.env, c.target_size, c.seed);
            } catch (const InputError& e) {
                if (d->target_1t.empty()) {
                    out.status = "FAILED-BY-DESIGN";
                    return out;
                }
                throw;
            }
        }
        const ClassifierPair& scorer = clf ? *clf : zero;
        OfflineDataset train;
        if (c.arm == "10T") train = d->target_full;
        else if (c.arm == "1T") train = d->target_1t;
        else train = d->target_1t;
        bool with_source = c.arm == "1T+10S-noaug" || c.arm == "1T+10S-dara";
        if (train.empty() && !with_source) {
            out.status = "NO-DATA";
            return out;
        }
        TrainerConfig tc = g_.trainer;
        tc.seed = mix_seed(tc.seed, std::uint64_t(c.seed));
        const Env& env = pair.target;
        QFunction q;
        Policy pi;
        OfflineDataset used;
        if (c.algorithm == "fqi-constrained" || c.algorithm == "conservative") {
            if (with_source) {
                OfflineDataset src = d->source;
                if (is_dara_arm(c.arm)) {
                    AugmentConfig ac = g_.augment;
                    ac.eta = c.eta;
                    src = augment_dataset(d->source, scorer, ac);
                }
                train = mix(train, src);
            }
            TrainResult r = c.algorithm == "conservative" ? train_conservative(train, env, tc)
                                                          : train_fqi_constrained(train, env, tc);
            q = r.q;
            pi = r.policy;
            used = train;
        } else if (c.algorithm == "dwr") {
            if (with_source) train = mix(train, d->source);
            tc.eta = is_dara_arm(c.arm) ? c.eta : 0.0;
            DwrResult r = train_dwr(train, env, scorer, tc);
            q = r.q;
            pi = r.policy;
            used = train;
        } else {
            tc.eta = is_dara_arm(c.arm) ? c.eta : 0.0;
            const OfflineDataset& src = with_source ? d->source : train;
            auto r = train_model_based(src, train.empty() ? src : train, env, scorer, tc, g_.ensemble);
            q = r.trained.q;
            pi = r.trained.policy;
            used = mix(train, src);
        }
        EvalReport rep = evaluate(env, pi, g_.episodes, (long long)mix_seed(std::uint64_t(c.seed), 21) >> 2);
        out.mean_return = rep.mean_return;
        out.std_return = rep.std_return;
        out.norm_score = rep.norm_score;
        out.goal_rate = rep.goal_rate;
        out.path = rep.first_path;
        auto probe = supported(obstructive_pairs(pair.source, pair.target), used, env);
        if (!probe.empty()) {
            out.has_probe_q = true;
            out.probe_q = q_probe(q, env, probe).mean;
        }
        if (clf) {
            auto traj = expert_trajectory(pair.source, 'S');
            out.has_agreement = true;
            out.agreement = delta_r_audit(*clf, traj, target_feasibility(pair.target)).agreement;
        }
        return out;
    }

    std::vector<CellResult> run() { return run(expand(g_)); }

    /// Any cell list; data and classifiers are shared with earlier calls.
    std::vector<CellResult> run(const std::vector<Cell>& cells) {
        std::vector<CellResult> res(cells.size());
        std::atomic<std::size_t> next{0};
        std::mutex err_mu;
        std::exception_ptr err;
        auto work = [&] {
            for (;;) {
                std::size_t i = next++;
                if (i >= cells.size()) return;
                try {
                    res[i] = run_cell(cells[i]);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mu);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        };
        if (g_.workers <= 1) {
            work();
        } else {
            std::vector<std::thread> ts;
            for (int w = 0; w < g_.workers; ++w) ts.emplace_back(work);
            for (auto& t : ts) t.join();
        }
        if (err) std::rethrow_exception(err);
        return res;
    }

private:
    GridSpec g_;
    detail::OnceMap<std::tuple<std::string, long long, long long>, std::shared_ptr<const CellData>> data_;
    detail::OnceMap<std::tuple<std::string, long long, long long>, std::shared_ptr<const ClassifierPair>> clf_;
};

inline const char* csv_header() {
    return "env,arm,algorithm,eta,target_size,seed,mean_return,std_return,norm_score,goal_rate,probe_obstructive_q,"
           "probe_agreement";
}

inline std::string csv_num(double v) { return fmt_short(v, 10); }

/// Cells that did not run carry their status in every result column.
inline std::string csv_row(const CellResult& r) {
    std::ostringstream os;
    const auto& c = r.cell;
    os << c.env << ',' << c.arm << ',' << c.algorithm << ',' << (is_dara_arm(c.arm) ? csv_num(c.eta) : "NA") << ','
       << c.target_size << ',' << c.seed << ',';
    if (r.status != "ok") {
        for (int i = 0; i < 6; ++i) os << r.status << (i < 5 ? "," : "");
        return os.str();
    }
    os << csv_num(r.mean_return) << ',' << csv_num(r.std_return) << ',' << csv_num(r.norm_score) << ','
       << csv_num(r.goal_rate) << ',' << (r.has_probe_q ? csv_num(r.probe_q) : "NA") << ','
       << (r.has_agreement ? csv_num(r.agreement) : "NA");
    return os.str();
}

inline std::string to_csv(const std::vector<CellResult>& rows) {
    std::string s = std::string(csv_header()) + "\n";
    for (const auto& r : rows) s += csv_row(r) + "\n";
    return s;
}

/// Median over seeds for one (env, arm, algorithm, eta, target size) group;
/// cells that did not run count as failures (score -inf, rate 0).
struct GroupSummary {
    double median_score = 0, median_goal_rate = 0, mean_probe_q = 0;
    bool all_ran = true;
    std::size_t n = 0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline GroupSummary summarize(const std::vector<CellResult>& rows, const std::string& env, const std::string& arm,
                              const std::string& alg, double eta, long long tsize) {
    GroupSummary g;
    std::vector<double> sc, gr;
    double pq = 0;
    std::size_t npq = 0;
    for (const auto& r : rows) {
        const auto& c = r.cell;
        if (c.env != env || c.arm != arm || c.algorithm != alg || c.target_size != tsize) continue;
        if (is_dara_arm(arm) && c.eta != eta) continue;
        ++g.n;
        if (r.status != "ok") {
            g.all_ran = false;
            sc.push_back(-std::numeric_limits<double>::infinity());
            gr.push_back(0.0);
            continue;
        }
        sc.push_back(r.norm_score);
        gr.push_back(r.goal_rate);
        if (r.has_probe_q) {
            pq += r.probe_q;
            ++npq;
        }
    }
    g.median_score = median(sc);
    g.median_goal_rate = median(gr);
    g.mean_probe_q = npq ? pq / double(npq) : 0.0;
    return g;
}

// ---------------------------------------------------------------------------
// SVG output (hand-written path elements)

namespace svg {
inline std::string header(int w, int h) {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
           std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) + "\">\n" +
           "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}
inline std::string polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color,
                            double width = 2.0) {
    std::ostringstream os;
    os << "<path fill=\"none\" stroke=\"" << color << "\" stroke-width=\"" << width << "\" d=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
        os << (i ? " L" : "M") << fmt_short(pts[i].first, 6) << ' ' << fmt_short(pts[i].second, 6);
    os << "\"/>\n";
    return os.str();
}
inline std::string text(double x, double y, const std::string& s, const std::string& color = "black") {
    return "<text x=\"" + fmt_short(x, 6) + "\" y=\"" + fmt_short(y, 6) + "\" font-size=\"12\" fill=\"" + color +
           "\" font-family=\"monospace\">" + s + "</text>\n";
}
inline const char* palette(std::size_t i) {
    static const char* c[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    return c[i % 6];
}
}  // namespace svg

/// Policy paths in the target env, one colored path per labelled entry.
inline std::string trajectory_svg(const EnvPair& pair, const std::vector<std::pair<std::string, std::vector<State>>>& paths) {
    const int W = 420, H = 420, pad = 10;
    std::string out = svg::header(W, H + 20 * int(paths.size()));
    const Env& t = pair.target;
    if (t.kind == EnvKind::map2d) {
        auto px = [&](double x) { return pad + x * (W - 2 * pad); };
        auto py = [&](double y) { return H - pad - y * (H - 2 * pad); };
        out += "<rect x=\"" + std::to_string(pad) + "\" y=\"" + std::to_string(pad) + "\" width=\"" +
               std::to_string(W - 2 * pad) + "\" height=\"" + std::to_string(H - 2 * pad) +
               "\" fill=\"none\" stroke=\"gray\"/>\n";
        for (const Env* e : {&pair.source, &pair.target})
            if (e->wall)
                out += svg::polyline({{px(map2d::wall_x), py(map2d::wall_y0)}, {px(map2d::wall_x), py(map2d::wall_y1)}},
                                     "black", e == &pair.target ? 4.0 : 1.0);
        for (std::size_t i = 0; i < paths.size(); ++i) {
            std::vector<std::pair<double, double>> pts;
            for (const auto& s : paths[i].second) pts.push_back({px(s[0]), py(s[1])});
            out += svg::polyline(pts, svg::palette(i));
        }
    } else {
        // theta (or state index) against time
        double lo = 1e300, hi = -1e300;
        std::size_t T = 1;
        int dim = t.kind == EnvKind::clip1d ? 1 : 0;
        for (const auto& p : paths) {
            T = std::max(T, p.second.size());
            for (const auto& s : p.second) lo = std::min(lo, s[std::size_t(dim)]), hi = std::max(hi, s[std::size_t(dim)]);
        }
        if (!(hi > lo)) hi = lo + 1;
        for (std::size_t i = 0; i < paths.size(); ++i) {
            std::vector<std::pair<double, double>> pts;
            for (std::size_t k = 0; k < paths[i].second.size(); ++k)
                pts.push_back({pad + double(k) / double(T) * (W - 2 * pad),
                               H - pad - (paths[i].second[k][std::size_t(dim)] - lo) / (hi - lo) * (H - 2 * pad)});
            out += svg::polyline(pts, svg::palette(i), 1.5);
        }
    }
    for (std::size_t i = 0; i < paths.size(); ++i) out += svg::text(pad, H + 15 + 20.0 * double(i), paths[i].first, svg::palette(i));
    return out + "</svg>\n";
}

/// Delta r along a trajectory; target-infeasible steps are marked in red.
inline std::string delta_r_svg(const AuditResult& a) {
    const int W = 600, H = 240, pad = 20;
    std::string out = svg::header(W, H);
    double c = 10.0;
    auto px = [&](std::size_t k) { return pad + double(k) / double(std::max<std::size_t>(1, a.delta.size() - 1)) * (W - 2 * pad); };
    auto py = [&](double v) { return H / 2.0 - v / c * (H / 2.0 - pad); };
    out += svg::polyline({{double(pad), H / 2.0}, {double(W - pad), H / 2.0}}, "gray", 1.0);
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < a.delta.size(); ++k) pts.push_back({px(k), py(-a.delta[k])});
    out += svg::polyline(pts, "#1f77b4", 1.5);
    for (std::size_t k = 0; k < a.delta.size(); ++k)
        if (a.infeasible[k])
            out += "<circle cx=\"" + fmt_short(px(k), 6) + "\" cy=\"" + fmt_short(py(-a.delta[k]), 6) +
                   "\" r=\"3\" fill=\"#d62728\"/>\n";
    out += svg::text(pad, 14, "-delta_r per step; red = infeasible in target; agreement " + fmt_short(a.agreement, 4));
    return out + "</svg>\n";
}

/// Writes results.csv plus, per env, a trajectory overlay and a Delta r trace.
inline void write_outputs(MatrixRunner& runner, const std::vector<CellResult>& rows, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    {
        std::ofstream os(fs::path(dir) / "results.csv", std::ios::binary);
        if (!os) throw IoError("cannot write results.csv in '" + dir + "'");
        os << to_csv(rows);
    }
    const auto& g = runner.grid();
    for (const auto& env : g.envs) {
        EnvPair pair = make_pair(env);
        std::vector<std::pair<std::string, std::vector<State>>> paths;
        std::set<std::string> shown;
        for (const auto& r : rows) {
            const auto& c = r.cell;
            if (c.env != env || c.seed != g.seeds.front() || c.algorithm != g.algorithms.front() || r.status != "ok") continue;
            std::string label = c.arm + (is_dara_arm(c.arm) ? " eta=" + csv_num(c.eta) : "") + " n=" + std::to_string(c.target_size);
            if (shown.insert(label).second) paths.push_back({label, r.path});
        }
        std::string base = env;
        for (auto& ch : base)
            if (ch == ':') ch = '_';
        {
            std::ofstream os(fs::path(dir) / (base + "-trajectories.svg"));
            os << trajectory_svg(pair, paths);
        }
        for (auto ts : g.target_sizes) {
            if (ts <= 0) continue;
            bool has_dara = std::find(g.arms.begin(), g.arms.end(), "1T+10S-dara") != g.arms.end();
            if (!has_dara) break;
            auto clf = runner.classifier(env, ts, g.seeds.front());
            auto audit = delta_r_audit(*clf, expert_trajectory(pair.source, 'S'), target_feasibility(pair.target));
            std::ofstream os(fs::path(dir) / (base + "-delta_r.svg"));
            os << delta_r_svg(audit);
            break;
        }
    }
}

}  // namespace dara
