#pragma once

// Offline trainers over {D u augmented D'}: hard-support fitted Q iteration,
// push-down conservative Q, dynamics-aware weighted regression, and the
// model-based pipeline with a Gaussian dynamics ensemble.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "dara/augment.hpp"
#include "dara/classifier.hpp"
#include "dara/core.hpp"
#include "dara/dataset.hpp"
#include "dara/mdp.hpp"
#include "dara/mlp.hpp"

namespace dara {

struct QFunction {
    enum class Kind { table, mlp };
    Kind kind = Kind::table;
    std::string algorithm = "fqi-constrained";
    std::string env_id;
    QTable table;
    Mlp net;  // state -> one output per action
    Mlp target_net;
    int sync_period = 100;

    int n_actions() const { return kind == Kind::table ? table.n_actions : net.out_dim(); }

    std::vector<double> values(const Env& env, const State& s) const {
        std::vector<double> out(static_cast<std::size_t>(n_actions()));
        if (kind == Kind::table) {
            int i = env.index_of(s);
            for (int a = 0; a < table.n_actions; ++a) out[std::size_t(a)] = table(i, a);
        } else {
            Mat x(Eigen::Index(s.size()), 1);
            for (std::size_t k = 0; k < s.size(); ++k) x(Eigen::Index(k), 0) = s[k];
            Mat z = net.forward(x);
            for (int a = 0; a < n_actions(); ++a) out[std::size_t(a)] = z(a, 0);
        }
        return out;
    }
    double value(const Env& env, const State& s, int a) const { return values(env, s)[std::size_t(a)]; }

    /// Greedy policy over the twin lattice.
    Policy greedy(const Env& env) const {
        if (kind == Kind::table) return Policy::greedy(table);
        QTable t(env.n_states(), n_actions());
        for (int s = 0; s < env.n_states(); ++s) {
            auto v = values(env, env.state_of(s));
            for (int a = 0; a < n_actions(); ++a) t(s, a) = v[std::size_t(a)];
        }
        return Policy::greedy(std::move(t));
    }
};

inline QFunction make_mlp_q(int state_dim, int n_actions, const std::vector<int>& hidden, std::uint64_t seed) {
    QFunction q;
    q.kind = QFunction::Kind::mlp;
    std::vector<int> sizes{state_dim};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(n_actions);
    Rng rng(seed);
    q.net = make_mlp(sizes, rng);
    q.target_net = q.net;
    return q;
}

/// Bellman regression batch for an MLP Q: targets y = r + gamma (1-d) max Q_target(s').
inline LossFn td_loss(const QFunction& q, const OfflineDataset& batch, double gamma) {
    const int sd = batch.meta.state_dim;
    Mat x(sd, Eigen::Index(batch.size())), xn(sd, Eigen::Index(batch.size()));
    std::vector<int> acts;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        for (int k = 0; k < sd; ++k) {
            x(k, Eigen::Index(i)) = batch.rows[i].s[std::size_t(k)];
            xn(k, Eigen::Index(i)) = batch.rows[i].s_next[std::size_t(k)];
        }
        acts.push_back(batch.rows[i].a);
    }
    Mat zn = q.target_net.forward(xn);
    std::vector<double> y;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& t = batch.rows[i];
        y.push_back(t.r + (t.done ? 0.0 : gamma * zn.col(Eigen::Index(i)).maxCoeff()));
    }
    return q_regression_loss(x, acts, y);
}

struct TrainerConfig {
    std::string algorithm = "conservative";
    int iterations = 5000;
    double tol = 1e-9;
    int batch = 256;
    double lr = 1e-3;
    double alpha = 0.1;
    double eta = 0.1;
    double beta = 1.0;
    double w_max = 20.0;
    double lambda = -1.0;  // negative: gamma R_max / (1-gamma)
    int rollout_len = 5;
    int rollouts = 20000;
    int ensemble_n = 4;
    double reward_bound = -1.0;  // negative: max |r| in the training data
    std::uint64_t seed = 0;

    void validate() const {
        if (alpha < 0) throw InputError("alpha must be non-negative");
        if (iterations <= 0) throw InputError("iterations must be positive");
        if (!(beta > 0) || !(w_max > 0)) throw InputError("beta and w_max must be positive");
        if (eta < 0) throw InputError("eta must be non-negative");
        if (rollout_len < 0 || rollouts < 0) throw InputError("rollout settings must be non-negative");
        if (ensemble_n < 2) throw InputError("ensemble needs at least two members");
    }
};

struct TrainResult {
    QFunction q;
    Policy policy;
    std::vector<double> residuals;  // sup-norm change per sweep
    int iterations = 0;
};

// ---------------------------------------------------------------------------
// Tabular aggregation of a dataset over the env's lattice.

struct Successor {
    int s_next;
    bool done;
    double count;
};

struct TabularData {
    int n_states = 0, n_actions = 0;
    double gamma = 0.99;
    std::vector<double> count;  // n(s,a)
    std::vector<double> rsum;   // sum of rewards at (s,a)
    std::vector<std::vector<Successor>> succ;
    std::vector<double> state_count;  // n(s)
    double max_abs_r = 0.0;

    int key(int s, int a) const { return s * n_actions + a; }

    /// Mean of r + gamma (1-d) V(s') over the records at key k.
    double target(int k, const std::vector<double>& v) const {
        double y = rsum[std::size_t(k)];
        for (const auto& x : succ[std::size_t(k)])
            if (!x.done) y += gamma * x.count * v[std::size_t(x.s_next)];
        return y / count[std::size_t(k)];
    }
};

inline TabularData tabulate(const OfflineDataset& data, const Env& env) {
    if (data.any_masked()) throw InputError("trainer needs unmasked rewards");
    TabularData t;
    t.n_states = env.n_states();
    t.n_actions = env.n_actions;
    t.gamma = data.meta.gamma;
    std::size_t sa = std::size_t(t.n_states) * t.n_actions;
    t.count.assign(sa, 0.0);
    t.rsum.assign(sa, 0.0);
    t.succ.assign(sa, {});
    t.state_count.assign(std::size_t(t.n_states), 0.0);
    for (const auto& r : data.rows) {
        int s = env.index_of(r.s), s2 = env.index_of(r.s_next);
        if (r.a < 0 || r.a >= t.n_actions) throw InputError("dataset action out of range for " + env.id);
        int k = t.key(s, r.a);
        t.count[std::size_t(k)] += 1;
        t.rsum[std::size_t(k)] += r.r;
        t.state_count[std::size_t(s)] += 1;
        t.max_abs_r = std::max(t.max_abs_r, std::abs(r.r));
        auto& v = t.succ[std::size_t(k)];
        auto it = std::find_if(v.begin(), v.end(), [&](const Successor& x) { return x.s_next == s2 && x.done == r.done; });
        if (it == v.end()) v.push_back({s2, r.done, 1.0});
        else it->count += 1;
    }
    return t;
}

inline double value_bound(const TabularData& t, const TrainerConfig& cfg) {
    double r = cfg.reward_bound >= 0 ? cfg.reward_bound : t.max_abs_r;
    return std::max(r, 1e-12) / (1.0 - t.gamma);
}

/// Fitted Q iteration with the hard support constraint: the backup at s'
/// maximizes only over actions observed at s'.
inline TrainResult train_fqi_constrained(const OfflineDataset& data, const Env& env, const TrainerConfig& cfg) {
    cfg.validate();
    TabularData t = tabulate(data, env);
    const double bound = value_bound(t, cfg);
    TrainResult res;
    QTable q(t.n_states, t.n_actions, -bound);
    for (std::size_t k = 0; k < q.v.size(); ++k)
        if (t.count[k] > 0) q.v[k] = 0.0;
    std::vector<double> v(std::size_t(t.n_states), 0.0);
    for (int it = 0; it < cfg.iterations; ++it) {
        for (int s = 0; s < t.n_states; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (int a = 0; a < t.n_actions; ++a)
                if (t.count[std::size_t(t.key(s, a))] > 0) best = std::max(best, q(s, a));
            v[std::size_t(s)] = std::isfinite(best) ? best : 0.0;
        }
        double diff = 0.0;
        QTable next = q;
        for (int k = 0; k < int(q.v.size()); ++k) {
            if (t.count[std::size_t(k)] == 0) continue;
            double y = std::clamp(t.target(k, v), -bound, bound);
            diff = std::max(diff, std::abs(y - q.v[std::size_t(k)]));
            next.v[std::size_t(k)] = y;
        }
        q = std::move(next);
        res.residuals.push_back(diff);
        res.iterations = it + 1;
        if (diff <= cfg.tol) break;
    }
    // Successor states without any supported action break ties to action 0.
    std::vector<char> is_succ(std::size_t(t.n_states), 0);
    for (const auto& vv : t.succ)
        for (const auto& x : vv)
            if (!x.done) is_succ[std::size_t(x.s_next)] = 1;
    for (int s = 0; s < t.n_states; ++s)
        if (is_succ[std::size_t(s)] && t.state_count[std::size_t(s)] == 0) {
            warn("fqi-constrained: a successor state has no supported action; its backup uses 0");
            break;
        }
    res.q.kind = QFunction::Kind::table;
    res.q.algorithm = "fqi-constrained";
    res.q.env_id = env.id;
    res.q.table = q;
    res.policy = Policy::greedy(q);
    return res;
}

namespace detail {
inline void softmax_row(const QTable& q, int s, std::vector<double>& p) {
    p.resize(std::size_t(q.n_actions));
    double mx = q.max(s), z = 0.0;
    for (int a = 0; a < q.n_actions; ++a) z += (p[std::size_t(a)] = std::exp(q(s, a) - mx));
    for (auto& x : p) x /= z;
}
}  // namespace detail

/// Pessimistic fitted Q: per-pair minimizer of the Bellman regression plus
/// alpha * E_{s~data, a~softmax(Q)}[Q(s,a)], i.e.
///   Q(s,a) = ybar(s,a) - alpha pi(a|s) n(s) / (2 n(s,a))   on data pairs,
/// and the value floor -R/(1-gamma) elsewhere.
inline TrainResult train_conservative(const OfflineDataset& data, const Env& env, const TrainerConfig& cfg) {
    cfg.validate();
    TabularData t = tabulate(data, env);
    const double bound = value_bound(t, cfg);
    TrainResult res;
    QTable q(t.n_states, t.n_actions, -bound);
    for (std::size_t k = 0; k < q.v.size(); ++k)
        if (t.count[k] > 0) q.v[k] = 0.0;
    std::vector<double> v(std::size_t(t.n_states)), p;
    for (int it = 0; it < cfg.iterations; ++it) {
        for (int s = 0; s < t.n_states; ++s) v[std::size_t(s)] = q.max(s);
        QTable next(t.n_states, t.n_actions, -bound);
        double diff = 0.0;
        for (int s = 0; s < t.n_states; ++s) {
            if (t.state_count[std::size_t(s)] == 0) continue;
            if (cfg.alpha > 0) detail::softmax_row(q, s, p);
            for (int a = 0; a < t.n_actions; ++a) {
                int k = t.key(s, a);
                double n = t.count[std::size_t(k)];
                if (n == 0) continue;
                double y = t.target(k, v);
                if (cfg.alpha > 0) y -= cfg.alpha * p[std::size_t(a)] * t.state_count[std::size_t(s)] / (2.0 * n);
                next.v[std::size_t(k)] = std::clamp(y, -bound, bound);
            }
        }
        diff = sup_diff(next, q);
        q = std::move(next);
        res.residuals.push_back(diff);
        res.iterations = it + 1;
        if (diff <= cfg.tol) break;
    }
    res.q.kind = QFunction::Kind::table;
    res.q.algorithm = "conservative";
    res.q.env_id = env.id;
    res.q.table = q;
    res.policy = Policy::greedy(q);
    return res;
}

// ---------------------------------------------------------------------------
// Dynamics-aware weighted regression

struct DwrResult {
    Policy policy;
    QTable pi;      // extracted pi(a|s)
    QFunction q;    // critic used for advantages
    std::vector<double> weights;   // per record, in data order
    std::vector<double> qtilde;    // Q~(s,a,s') per record
    std::vector<double> advantage; // normalized advantage per record
};

namespace detail {
struct TripleKey {
    int s, a, s2;
    bool done;
    bool operator<(const TripleKey& o) const {
        return std::tie(s, a, s2, done) < std::tie(o.s, o.a, o.s2, o.done);
    }
};
}  // namespace detail

/// Q~ over observed triples: per-step reward Delta r (0 on target records),
/// continuing with the greedy action of `greedy_q` among supported actions.
template <class Scorer>
std::map<detail::TripleKey, double> fit_qtilde(const OfflineDataset& data, const Env& env, const Scorer& scorer,
                                              const QTable& greedy_q, const TabularData& t, const TrainerConfig& cfg,
                                              std::vector<detail::TripleKey>* record_keys = nullptr) {
    std::vector<double> dr = scorer.delta_r(data);
    struct Acc {
        double rsum = 0, n = 0;
    };
    std::map<detail::TripleKey, Acc> acc;
    if (record_keys) record_keys->clear();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto& r = data.rows[i];
        detail::TripleKey k{env.index_of(r.s), r.a, env.index_of(r.s_next), r.done};
        auto& a = acc[k];
        a.rsum += (r.label == 'S') ? dr[i] : 0.0;
        a.n += 1;
        if (record_keys) record_keys->push_back(k);
    }
    // Next action at each state: greedy among supported actions.
    std::vector<int> next_a(std::size_t(t.n_states), -1);
    for (int s = 0; s < t.n_states; ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < t.n_actions; ++a)
            if (t.count[std::size_t(t.key(s, a))] > 0 && greedy_q(s, a) > best) {
                best = greedy_q(s, a);
                next_a[std::size_t(s)] = a;
            }
    }
    std::map<detail::TripleKey, double> qt;
    for (auto& [k, a] : acc) qt[k] = 0.0;
    // Triples grouped by their (s,a) for the continuation average.
    std::map<std::pair<int, int>, std::vector<std::pair<detail::TripleKey, double>>> by_sa;
    for (auto& [k, a] : acc) by_sa[{k.s, k.a}].push_back({k, a.n});
    const double gamma = data.meta.gamma;
    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<double> vt(std::size_t(t.n_states), 0.0);
        for (int s = 0; s < t.n_states; ++s) {
            int a = next_a[std::size_t(s)];
            if (a < 0) continue;
            auto f = by_sa.find({s, a});
            if (f == by_sa.end()) continue;
            double num = 0, den = 0;
            for (auto& [k, n] : f->second) {
                num += n * qt[k];
                den += n;
            }
            vt[std::size_t(s)] = num / den;
        }
        double diff = 0;
        for (auto& [k, a] : acc) {
            double y = a.rsum / a.n + (k.done ? 0.0 : gamma * vt[std::size_t(k.s2)]);
            diff = std::max(diff, std::abs(y - qt[k]));
            qt[k] = y;
        }
        if (diff <= cfg.tol) break;
    }
    return qt;
}

/// E-step: critic Q by hard-support regression and Q~ by Bellman regression on
/// Delta r. M-step: pi(a|s) proportional to the summed weights
/// w = min(exp(A/beta - eta Q~), w_max) of records at (s,a), which maximizes
/// E[w log pi(a|s)] exactly for a tabular policy.
template <class Scorer>
DwrResult train_dwr(const OfflineDataset& data, const Env& env, const Scorer& scorer, const TrainerConfig& cfg) {
    cfg.validate();
    TabularData t = tabulate(data, env);
    TrainerConfig qcfg = cfg;
    TrainResult critic = train_fqi_constrained(data, env, qcfg);
    DwrResult out;
    out.q = critic.q;
    out.q.algorithm = "dwr";
    const QTable& Q = critic.q.table;

    std::vector<detail::TripleKey> keys;
    auto qt = fit_qtilde(data, env, scorer, Q, t, cfg, &keys);

    // Advantage against the empirical behavior value, then scale-normalized.
    std::vector<double> vb(std::size_t(t.n_states), 0.0);
    for (int s = 0; s < t.n_states; ++s) {
        if (t.state_count[std::size_t(s)] == 0) continue;
        for (int a = 0; a < t.n_actions; ++a) {
            double n = t.count[std::size_t(t.key(s, a))];
            if (n > 0) vb[std::size_t(s)] += n / t.state_count[std::size_t(s)] * Q(s, a);
        }
    }
    const std::size_t N = data.size();
    out.advantage.resize(N);
    double m2 = 0;
    for (std::size_t i = 0; i < N; ++i) {
        int s = keys[i].s, a = keys[i].a;
        out.advantage[i] = Q(s, a) - vb[std::size_t(s)];
        m2 += out.advantage[i] * out.advantage[i];
    }
    double scale = std::sqrt(m2 / double(std::max<std::size_t>(N, 1)));
    if (scale > 1e-12)
        for (auto& x : out.advantage) x /= scale;

    out.weights.resize(N);
    out.qtilde.resize(N);
    QTable wsum(t.n_states, t.n_actions, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        out.qtilde[i] = qt[keys[i]];
        double lw = out.advantage[i] / cfg.beta - cfg.eta * out.qtilde[i];
        double w = std::exp(std::clamp(lw, -700.0, std::log(cfg.w_max)));
        out.weights[i] = std::min(w, cfg.w_max);
        wsum(keys[i].s, keys[i].a) += out.weights[i];
    }
    out.pi = QTable(t.n_states, t.n_actions, 1.0 / t.n_actions);
    bool warned = false;
    for (int s = 0; s < t.n_states; ++s) {
        if (t.state_count[std::size_t(s)] == 0) continue;
        double z = 0;
        for (int a = 0; a < t.n_actions; ++a) z += wsum(s, a);
        if (!(z > 0)) {
            if (!warned) warn("dwr: all weights vanished at a state; keeping the uniform policy there");
            warned = true;
            continue;
        }
        for (int a = 0; a < t.n_actions; ++a) out.pi(s, a) = wsum(s, a) / z;
    }
    out.policy = Policy::greedy(out.pi);
    return out;
}

// ---------------------------------------------------------------------------
// Dynamics ensemble

struct EnsembleConfig {
    std::string kind = "tabular";  // tabular | mlp
    double std_floor = 1e-4;
    double prior_std = 1.0;
    std::vector<int> hidden{32, 32};
    int epochs = 200;
    int batch = 64;
    double lr = 3e-3;
    std::uint64_t seed = 0;
};

struct Prediction {
    State mean;
    std::vector<double> stddev;
    double reward = 0.0;
    bool done = false;
    bool known = false;  // key seen by this member (tabular members)
};

struct GaussianMember {
    // tabular: per (s,a) key statistics over the bootstrap sample
    std::map<std::pair<State, int>, Prediction> stats;
    // mlp: mean and raw scale heads
    Mlp net;
    Normalizer norm;
};

struct DynamicsEnsemble {
    std::string kind = "tabular";
    char domain = 'S';
    int state_dim = 1;
    int n_actions = 1;
    double std_floor = 1e-4;
    double prior_std = 1.0;
    std::vector<GaussianMember> members;

    Prediction predict(std::size_t i, const State& s, int a) const {
        const auto& m = members.at(i);
        if (kind == "tabular") {
            auto it = m.stats.find({s, a});
            if (it != m.stats.end()) return it->second;
            Prediction p;
            p.mean = s;
            p.stddev.assign(std::size_t(state_dim), prior_std);
            return p;
        }
        Mat x(state_dim + n_actions, 1);
        detail::put_sa(x, 0, s, a, n_actions);
        Mat z = m.net.forward(m.norm.apply(x));
        Prediction p;
        p.known = true;
        for (int k = 0; k < state_dim; ++k) {
            p.mean.push_back(z(k, 0));
            p.stddev.push_back(std_floor + softplus(z(state_dim + k, 0)));
        }
        return p;
    }
};

/// Each member is a maximum-likelihood fit on its own bootstrap resample.
inline DynamicsEnsemble fit_dynamics_ensemble(const OfflineDataset& data, int n, int n_actions,
                                              const EnsembleConfig& cfg) {
    if (n < 2) throw InputError("dynamics ensemble needs n >= 2");
    if (data.empty()) throw InputError("dynamics ensemble needs data");
    DynamicsEnsemble ens;
    ens.kind = cfg.kind;
    ens.domain = data.domain_label();
    ens.state_dim = data.meta.state_dim;
    ens.n_actions = n_actions;
    ens.std_floor = cfg.std_floor;
    ens.prior_std = cfg.prior_std;
    const std::size_t N = data.size();
    const int sd = ens.state_dim;
    for (int m = 0; m < n; ++m) {
        Rng rng(mix_seed(cfg.seed, 0xe5 + std::uint64_t(m)));
        std::uniform_int_distribution<std::size_t> u(0, N - 1);
        std::vector<std::size_t> idx(N);
        for (auto& i : idx) i = u(rng);
        GaussianMember mem;
        if (cfg.kind == "tabular") {
            struct Acc {
                std::vector<double> s1, s2;
                double r = 0, d = 0, n = 0;
            };
            std::map<std::pair<State, int>, Acc> acc;
            for (auto i : idx) {
                const auto& t = data.rows[i];
                auto& a = acc[{t.s, t.a}];
                if (a.s1.empty()) a.s1.assign(std::size_t(sd), 0.0), a.s2.assign(std::size_t(sd), 0.0);
                for (int k = 0; k < sd; ++k) {
                    a.s1[std::size_t(k)] += t.s_next[std::size_t(k)];
                    a.s2[std::size_t(k)] += t.s_next[std::size_t(k)] * t.s_next[std::size_t(k)];
                }
                a.r += t.r;
                a.d += t.done ? 1.0 : 0.0;
                a.n += 1;
            }
            for (auto& [key, a] : acc) {
                Prediction p;
                p.known = true;
                for (int k = 0; k < sd; ++k) {
                    double mu = a.s1[std::size_t(k)] / a.n;
                    double var = std::max(0.0, a.s2[std::size_t(k)] / a.n - mu * mu);
                    p.mean.push_back(mu);
                    p.stddev.push_back(std::max(cfg.std_floor, std::sqrt(var)));
                }
                p.reward = a.r / a.n;
                p.done = a.d / a.n > 0.5;
                mem.stats.emplace(key, std::move(p));
            }
        } else if (cfg.kind == "mlp") {
            OfflineDataset boot;
            boot.meta = data.meta;
            for (auto i : idx) boot.rows.push_back(data.rows[i]);
            Mat x = features_sa(boot, n_actions);
            Mat y(sd, Eigen::Index(N));
            for (std::size_t i = 0; i < N; ++i)
                for (int k = 0; k < sd; ++k) y(k, Eigen::Index(i)) = boot.rows[i].s_next[std::size_t(k)];
            mem.norm = Normalizer::fit(x, Mat(x.rows(), 0));
            Mat xn = mem.norm.apply(x);
            std::vector<int> sizes{int(x.rows())};
            sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
            sizes.push_back(2 * sd);
            mem.net = make_mlp(sizes, rng);
            Adam opt(cfg.lr);
            const int B = std::min<int>(cfg.batch, int(N));
            Mat xb(x.rows(), B), yb(sd, B), dz;
            std::vector<Mat> acts;
            const long long steps = std::max<long long>(1, (long long)(N + std::size_t(B) - 1) / B);
            for (int ep = 0; ep < cfg.epochs; ++ep)
                for (long long st = 0; st < steps; ++st) {
                    for (int b = 0; b < B; ++b) {
                        auto j = Eigen::Index(u(rng));
                        xb.col(b) = xn.col(j);
                        yb.col(b) = y.col(j);
                    }
                    Mat z = mem.net.forward(xb, acts);
                    gaussian_nll(z, yb, cfg.std_floor, dz);
                    opt.step(mem.net, mem.net.backward(acts, dz));
                }
            if (!mem.net.finite()) throw NumericalError("dynamics member training diverged");
        } else {
            throw InputError("unknown ensemble kind '" + cfg.kind + "'");
        }
        ens.members.push_back(std::move(mem));
    }
    return ens;
}

/// u(s,a) = max over members of the Euclidean norm of the predicted stddev.
inline double uncertainty(const DynamicsEnsemble& ens, const State& s, int a) {
    double u = 0.0;
    for (std::size_t i = 0; i < ens.members.size(); ++i) {
        auto p = ens.predict(i, s, a);
        double n2 = 0;
        for (double v : p.stddev) n2 += v * v;
        u = std::max(u, std::sqrt(n2));
    }
    return u;
}

struct ModelBasedResult {
    TrainResult trained;
    OfflineDataset synthetic;
    std::vector<double> model_reward;  // member reward before penalties, per synthetic record
    double lambda = 0.0;
};

/// Branched rollouts from dataset states through the source model, rewarded
/// r - lambda (eta max(Delta r, 0) + u_target), then conservative Q on real u
/// synthetic data. Real source records carry r - eta max(Delta r, 0).
template <class Scorer>
ModelBasedResult train_model_based(const OfflineDataset& source, const OfflineDataset& target, const Env& env,
                                   const Scorer& scorer, const TrainerConfig& cfg,
                                   const EnsembleConfig& ecfg = EnsembleConfig{}) {
    cfg.validate();
    if (source.empty() || target.empty()) throw InputError("model-based training needs source and target data");
    if (source.any_masked()) throw InputError("model-based training needs unmasked source rewards");
    ModelBasedResult out;
    const double clip = 10.0;
    AugmentConfig acfg;
    acfg.eta = cfg.eta;
    acfg.floor_zero = true;
    double r_max = 0.0;
    for (const auto* d : {&source, &target})
        for (const auto& t : d->rows) r_max = std::max(r_max, std::abs(t.r));
    const double R = augmented_reward_bound(acfg, r_max, clip);
    const double gamma = source.meta.gamma;
    out.lambda = cfg.lambda >= 0 ? cfg.lambda : gamma * R / (1.0 - gamma);

    OfflineDataset real_source = cfg.eta > 0 ? augment_dataset(source, scorer, acfg) : source;
    OfflineDataset real = mix(target, real_source);

    out.synthetic.meta = source.meta;
    out.synthetic.meta.behavior_tag = "mixture";
    if (cfg.rollout_len > 0 && cfg.rollouts > 0) {
        EnsembleConfig e1 = ecfg, e2 = ecfg;
        e1.seed = mix_seed(cfg.seed, 1);
        e2.seed = mix_seed(cfg.seed, 2);
        DynamicsEnsemble src_model = fit_dynamics_ensemble(source, cfg.ensemble_n, env.n_actions, e1);
        DynamicsEnsemble tgt_model = fit_dynamics_ensemble(target, cfg.ensemble_n, env.n_actions, e2);
        Rng rng(mix_seed(cfg.seed, 0x3b));
        std::uniform_int_distribution<std::size_t> pick(0, real.size() - 1);
        for (int r = 0; r < cfg.rollouts; ++r) {
            State s = real.rows[pick(rng)].s;
            for (int h = 0; h < cfg.rollout_len; ++h) {
                int a = uniform_int(rng, env.n_actions);
                std::size_t m = std::size_t(uniform_int(rng, int(src_model.members.size())));
                Prediction p = src_model.predict(m, s, a);
                if (!p.known) break;
                State s2;
                try {
                    s2 = env.state_of(env.index_of(p.mean));
                } catch (const InputError&) {
                    break;  // prediction left the lattice: truncate
                }
                double norm = 0;
                for (double v : s2) norm += v * v;
                if (!std::isfinite(norm) || std::sqrt(norm) > 1e6) break;
                Transition t{s, a, p.reward, false, s2, p.done, 'S'};
                OfflineDataset one;
                one.meta = source.meta;
                one.rows.push_back(t);
                double dr = cfg.eta > 0 ? scorer.delta_r(one)[0] : 0.0;
                double u = out.lambda > 0 ? uncertainty(tgt_model, s, a) : 0.0;
                t.r = p.reward - out.lambda * (cfg.eta * std::max(dr, 0.0) + u);
                out.model_reward.push_back(p.reward);
                out.synthetic.rows.push_back(t);
                if (p.done) break;
                s = s2;
            }
        }
    }
    OfflineDataset all = mix(real, out.synthetic);
    out.trained = train_conservative(all, env, cfg);
    out.trained.q.algorithm = "model-based";
    return out;
}

// ---------------------------------------------------------------------------
// Serialization

inline void save(const QFunction& q, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << "format_version=1\nkind=" << (q.kind == QFunction::Kind::table ? "table" : "mlp")
       << "\nalgorithm=" << q.algorithm << "\nenv_id=" << q.env_id << "\n";
    if (q.kind == QFunction::Kind::table) {
        os << "n_states=" << q.table.n_states << "\nn_actions=" << q.table.n_actions << "\n";
        for (int s = 0; s < q.table.n_states; ++s) {
            for (int a = 0; a < q.table.n_actions; ++a) os << (a ? "," : "") << fmt(q.table(s, a));
            os << "\n";
        }
    } else {
        write_mlp(os, q.net);
    }
    if (!os) throw IoError("write to '" + path + "' failed");
}

inline QFunction load_qfunction(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open Q function '" + path + "'");
    QFunction q;
    try {
        if (detail::read_kv(is, "format_version") != "1") throw IoError(path + ": unsupported format_version");
        std::string kind = detail::read_kv(is, "kind");
        q.algorithm = detail::read_kv(is, "algorithm");
        q.env_id = detail::read_kv(is, "env_id");
        if (kind == "table") {
            int S = int(parse_int(detail::read_kv(is, "n_states"), "n_states"));
            int A = int(parse_int(detail::read_kv(is, "n_actions"), "n_actions"));
            if (S <= 0 || A <= 0) throw IoError(path + ": bad table shape");
            q.table = QTable(S, A);
            for (int s = 0; s < S; ++s) {
                auto row = detail::read_row(is, std::size_t(A), "Q row");
                for (int a = 0; a < A; ++a) q.table(s, a) = row[std::size_t(a)];
            }
        } else if (kind == "mlp") {
            q.kind = QFunction::Kind::mlp;
            q.net = read_mlp(is);
            q.target_net = q.net;
        } else {
            throw IoError(path + ": unknown Q function kind '" + kind + "'");
        }
    } catch (const InputError& e) {
        throw IoError(path + ": " + e.what());
    }
    return q;
}

}  // namespace dara
