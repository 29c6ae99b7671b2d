#pragma once

// Deterministic source/target environment pairs and exact tabular oracles.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "dara/core.hpp"

namespace dara {

using State = std::vector<double>;

/// Finite deterministic MDP. Transition (s,a) lands in next[s*A+a];
/// terminal[s*A+a] marks an episode-ending transition (no bootstrap).
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    double gamma = 0.9;
    std::vector<int> next;
    std::vector<double> reward;
    std::vector<char> terminal;
    std::vector<double> rho0;

    int key(int s, int a) const { return s * n_actions + a; }

    void validate() const {
        if (n_states <= 0 || n_actions <= 0) throw InputError("tabular MDP needs states and actions");
        if (!(gamma > 0.0 && gamma < 1.0)) throw InputError("gamma must lie strictly in (0,1)");
        const std::size_t sa = std::size_t(n_states) * n_actions;
        if (next.size() != sa || reward.size() != sa || terminal.size() != sa || rho0.size() != std::size_t(n_states))
            throw InputError("tabular MDP arrays have inconsistent sizes");
        for (int n : next)
            if (n < 0 || n >= n_states) throw InputError("transition leaves the state space");
    }
};

/// S x A table of action values.
struct QTable {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> v;

    QTable() = default;
    QTable(int s, int a, double fill = 0.0) : n_states(s), n_actions(a), v(std::size_t(s) * a, fill) {}
    double& operator()(int s, int a) { return v[std::size_t(s) * n_actions + a]; }
    double operator()(int s, int a) const { return v[std::size_t(s) * n_actions + a]; }

    /// Lowest index wins ties.
    int argmax(int s) const {
        int best = 0;
        for (int a = 1; a < n_actions; ++a)
            if ((*this)(s, a) > (*this)(s, best)) best = a;
        return best;
    }
    double max(int s) const { return (*this)(s, argmax(s)); }
};

/// Stationary tabular policy over twin indices, or a time-indexed script.
struct Policy {
    enum class Kind { greedy, epsilon_greedy, uniform, scripted };

    Kind kind = Kind::uniform;
    int n_actions = 1;
    QTable q;
    double epsilon = 0.0;
    std::vector<int> script;

    static Policy uniform(int n_actions) {
        Policy p;
        p.kind = Kind::uniform;
        p.n_actions = n_actions;
        return p;
    }
    static Policy greedy(QTable q) {
        Policy p;
        p.kind = Kind::greedy;
        p.n_actions = q.n_actions;
        p.q = std::move(q);
        return p;
    }
    static Policy epsilon_greedy(QTable q, double eps) {
        if (!(eps >= 0.0 && eps <= 1.0)) throw InputError("epsilon must lie in [0,1]");
        Policy p = greedy(std::move(q));
        p.kind = Kind::epsilon_greedy;
        p.epsilon = eps;
        return p;
    }
    /// Plays script[t]; holds the last action after the script ends.
    static Policy scripted(std::vector<int> path, int n_actions) {
        if (path.empty()) throw InputError("scripted policy needs at least one action");
        for (int a : path)
            if (a < 0 || a >= n_actions) throw InputError("scripted action out of range");
        Policy p;
        p.kind = Kind::scripted;
        p.n_actions = n_actions;
        p.script = std::move(path);
        return p;
    }

    bool stationary() const { return kind != Kind::scripted; }

    std::vector<double> probs(int s, int t = 0) const {
        std::vector<double> p(n_actions, 0.0);
        switch (kind) {
            case Kind::uniform:
                std::fill(p.begin(), p.end(), 1.0 / n_actions);
                break;
            case Kind::greedy:
                p[q.argmax(s)] = 1.0;
                break;
            case Kind::epsilon_greedy:
                std::fill(p.begin(), p.end(), epsilon / n_actions);
                p[q.argmax(s)] += 1.0 - epsilon;
                break;
            case Kind::scripted:
                p[script[std::min<std::size_t>(t, script.size() - 1)]] = 1.0;
                break;
        }
        return p;
    }

    int act(int s, int t, Rng& rng) const {
        switch (kind) {
            case Kind::uniform:
                return uniform_int(rng, n_actions);
            case Kind::greedy:
                return q.argmax(s);
            case Kind::epsilon_greedy:
                if (uniform01(rng) < epsilon) return uniform_int(rng, n_actions);
                return q.argmax(s);
            case Kind::scripted:
                return script[std::min<std::size_t>(t, script.size() - 1)];
        }
        return 0;
    }
};

struct StepResult {
    State next;
    double reward = 0.0;
    bool done = false;
};

enum class EnvKind { map2d, clip1d, tabular };

namespace map2d {
inline constexpr int grid = 20;
inline constexpr double cell = 0.05;
inline constexpr double wall_x = 0.5;
inline constexpr double wall_y0 = 0.0;
inline constexpr double wall_y1 = 0.9;
inline constexpr int start_i = 2, start_j = 10;
inline constexpr int goal_i = 17, goal_j = 10;
inline constexpr double step_cost = -1.0;
inline constexpr double goal_reward = 100.0;
// E, NE, N, NW, W, SW, S, SE
inline constexpr std::array<std::array<int, 2>, 8> dirs{
    {{1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}, {0, -1}, {1, -1}}};
inline double center(int i) { return 0.025 + cell * i; }

/// True when the segment p->q crosses the wall segment.
inline bool crosses_wall(double px, double py, double qx, double qy) {
    if ((px - wall_x) * (qx - wall_x) >= 0.0) return false;
    double t = (wall_x - px) / (qx - px);
    double yc = py + t * (qy - py);
    return yc >= wall_y0 - 1e-12 && yc <= wall_y1 + 1e-12;
}
}  // namespace map2d

namespace clip1d {
inline constexpr int length = 30;  // progress cells; goal at x == length
inline constexpr double dtheta = 0.13;
inline constexpr int k_max = 4;  // lattice spans theta in [-0.52, 0.52]
inline constexpr int n_theta = 2 * k_max + 1;
inline constexpr double step_cost = -1.0;
inline constexpr double goal_reward = 100.0;
}  // namespace clip1d

namespace detail {
inline bool near_int(double v, long& out) {
    double r = std::round(v);
    if (std::abs(v - r) > 1e-9) return false;
    out = static_cast<long>(r);
    return true;
}
}  // namespace detail

/// An environment of the catalog. Every catalog env has an exact tabular twin
/// over its lattice of reachable-or-shared states.
class Env {
public:
    std::string id;
    EnvKind kind = EnvKind::tabular;
    int state_dim = 1;
    int n_actions = 1;
    double gamma = 0.99;
    double r_max = 1.0;
    int horizon = 100;

    // map2d
    bool wall = false;
    // clip1d: admissible |k| on the theta lattice, and the matching bound
    int clip_k = clip1d::k_max;
    // tabular
    std::shared_ptr<const TabularMdp> table;

    int n_states() const {
        switch (kind) {
            case EnvKind::map2d: return map2d::grid * map2d::grid;
            case EnvKind::clip1d: return (clip1d::length + 1) * clip1d::n_theta;
            case EnvKind::tabular: return table->n_states;
        }
        return 0;
    }

    double clip_bound() const { return clip_k * clip1d::dtheta; }

    void check_state(const State& s) const {
        if (int(s.size()) != state_dim) throw InputError("state has wrong dimension for " + id);
        for (double v : s)
            if (!std::isfinite(v)) throw InputError("state is not finite");
        switch (kind) {
            case EnvKind::map2d:
                if (s[0] < 0 || s[0] > 1 || s[1] < 0 || s[1] > 1) throw InputError("state outside the unit square");
                break;
            case EnvKind::clip1d:
                if (s[0] < 0 || s[0] > clip1d::length || std::abs(s[1]) > clip1d::k_max * clip1d::dtheta + 1e-9)
                    throw InputError("state outside clip1d bounds");
                break;
            case EnvKind::tabular: {
                long k;
                if (!detail::near_int(s[0], k) || k < 0 || k >= table->n_states)
                    throw InputError("tabular state out of range");
                break;
            }
        }
    }

    bool is_goal(const State& s) const {
        switch (kind) {
            case EnvKind::map2d:
                return std::abs(s[0] - map2d::center(map2d::goal_i)) < 0.5 * map2d::cell &&
                       std::abs(s[1] - map2d::center(map2d::goal_j)) < 0.5 * map2d::cell;
            case EnvKind::clip1d:
                return s[0] >= clip1d::length - 1e-9;
            case EnvKind::tabular:
                return false;
        }
        return false;
    }

    StepResult step(const State& s, int a) const {
        check_state(s);
        if (a < 0 || a >= n_actions) throw InputError("unknown action " + std::to_string(a) + " for " + id);
        StepResult out;
        switch (kind) {
            case EnvKind::map2d: {
                if (is_goal(s)) return {s, map2d::goal_reward, true};
                out.reward = map2d::step_cost;
                const auto d = map2d::dirs[a];
                long i, j;
                double qx, qy;
                bool lattice = detail::near_int((s[0] - 0.025) / map2d::cell, i) &&
                               detail::near_int((s[1] - 0.025) / map2d::cell, j);
                if (lattice) {
                    long ni = i + d[0], nj = j + d[1];
                    if (ni < 0 || nj < 0 || ni >= map2d::grid || nj >= map2d::grid) {
                        out.next = s;
                        return out;
                    }
                    qx = map2d::center(int(ni));
                    qy = map2d::center(int(nj));
                } else {
                    qx = s[0] + map2d::cell * d[0];
                    qy = s[1] + map2d::cell * d[1];
                    if (qx < 0 || qy < 0 || qx > 1 || qy > 1) {
                        out.next = s;
                        return out;
                    }
                }
                if (wall && map2d::crosses_wall(s[0], s[1], qx, qy)) {
                    out.next = s;
                    return out;
                }
                out.next = {qx, qy};
                return out;
            }
            case EnvKind::clip1d: {
                if (is_goal(s)) return {s, clip1d::goal_reward, true};
                out.reward = clip1d::step_cost;
                long x, k;
                double theta2;
                bool lattice = detail::near_int(s[0], x) && detail::near_int(s[1] / clip1d::dtheta, k);
                if (lattice) {
                    long k2 = std::clamp<long>(k + a - 1, -clip_k, clip_k);
                    theta2 = double(k2) * clip1d::dtheta;
                    double x2 = (k2 < k) ? double(std::min<long>(x + 1, clip1d::length)) : double(x);
                    out.next = {x2, theta2};
                } else {
                    theta2 = std::clamp(s[1] + clip1d::dtheta * (a - 1), -clip_bound(), clip_bound());
                    double x2 = (theta2 < s[1] - 1e-12) ? std::min(s[0] + 1.0, double(clip1d::length)) : s[0];
                    out.next = {x2, theta2};
                }
                return out;
            }
            case EnvKind::tabular: {
                int si = int(std::lround(s[0]));
                int k = table->key(si, a);
                out.next = {double(table->next[k])};
                out.reward = table->reward[k];
                out.done = table->terminal[k] != 0;
                return out;
            }
        }
        return out;
    }

    /// Lattice index of a state; off-lattice states are rejected.
    int index_of(const State& s) const {
        long i, j;
        switch (kind) {
            case EnvKind::map2d:
                if (s.size() != 2 || !detail::near_int((s[0] - 0.025) / map2d::cell, i) ||
                    !detail::near_int((s[1] - 0.025) / map2d::cell, j) || i < 0 || j < 0 || i >= map2d::grid ||
                    j >= map2d::grid)
                    throw InputError("map2d state is off the grid lattice");
                return int(i * map2d::grid + j);
            case EnvKind::clip1d:
                if (s.size() != 2 || !detail::near_int(s[0], i) || !detail::near_int(s[1] / clip1d::dtheta, j) ||
                    i < 0 || i > clip1d::length || std::abs(j) > clip1d::k_max)
                    throw InputError("clip1d state is off the lattice");
                return int(i * clip1d::n_theta + (j + clip1d::k_max));
            case EnvKind::tabular:
                if (s.size() != 1 || !detail::near_int(s[0], i) || i < 0 || i >= table->n_states)
                    throw InputError("tabular state out of range");
                return int(i);
        }
        return 0;
    }

    State state_of(int idx) const {
        switch (kind) {
            case EnvKind::map2d:
                return {map2d::center(idx / map2d::grid), map2d::center(idx % map2d::grid)};
            case EnvKind::clip1d:
                return {double(idx / clip1d::n_theta), double(idx % clip1d::n_theta - clip1d::k_max) * clip1d::dtheta};
            case EnvKind::tabular:
                return {double(idx)};
        }
        return {};
    }

    /// Exact tabular twin: same step rule evaluated on every lattice state.
    TabularMdp tabular() const {
        if (kind == EnvKind::tabular) return *table;
        TabularMdp m;
        m.n_states = n_states();
        m.n_actions = n_actions;
        m.gamma = gamma;
        m.next.resize(std::size_t(m.n_states) * n_actions);
        m.reward.resize(m.next.size());
        m.terminal.resize(m.next.size());
        m.rho0.assign(m.n_states, 0.0);
        m.rho0[index_of(initial_state())] = 1.0;
        for (int s = 0; s < m.n_states; ++s) {
            State st = state_of(s);
            for (int a = 0; a < n_actions; ++a) {
                auto r = step(st, a);
                int k = m.key(s, a);
                m.next[k] = index_of(r.next);
                m.reward[k] = r.reward;
                m.terminal[k] = r.done;
            }
        }
        return m;
    }

    /// Start state for point-mass envs.
    State initial_state() const {
        switch (kind) {
            case EnvKind::map2d: return {map2d::center(map2d::start_i), map2d::center(map2d::start_j)};
            case EnvKind::clip1d: return {0.0, 0.0};
            case EnvKind::tabular: return {0.0};
        }
        return {};
    }

    State sample_initial(Rng& rng) const {
        if (kind != EnvKind::tabular) return initial_state();
        double u = uniform01(rng), acc = 0.0;
        for (int s = 0; s < table->n_states; ++s) {
            acc += table->rho0[s];
            if (u < acc) return {double(s)};
        }
        return {double(table->n_states - 1)};
    }
};

/// Random deterministic pair. The target draws successors and rewards; the
/// source re-draws the successor of a `shift` fraction of pairs.
inline TabularMdp make_tabular_random(std::uint64_t seed, int n_states, int n_actions, bool source,
                                      double gamma = 0.95, double shift = 0.3) {
    if (n_states < 2 || n_actions < 1) throw InputError("tabular-random needs >= 2 states and >= 1 action");
    TabularMdp m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.gamma = gamma;
    const std::size_t sa = std::size_t(n_states) * n_actions;
    m.next.resize(sa);
    m.reward.resize(sa);
    m.terminal.assign(sa, 0);
    m.rho0.assign(n_states, 1.0 / n_states);
    Rng rng(mix_seed(seed, 0x7ab));
    for (std::size_t k = 0; k < sa; ++k) {
        m.next[k] = uniform_int(rng, n_states);
        m.reward[k] = 2.0 * uniform01(rng) - 1.0;
    }
    if (source) {
        Rng r2(mix_seed(seed, 0x5c));
        for (std::size_t k = 0; k < sa; ++k) {
            bool redraw = uniform01(r2) < shift;
            int alt = uniform_int(r2, n_states - 1);
            if (redraw) m.next[k] = alt >= m.next[k] ? alt + 1 : alt;
        }
    }
    return m;
}

/// Resolve a catalog id. Tabular ids: tabular-random:<seed>:<S>:<A>[:source].
inline Env make_env(const std::string& id) {
    Env e;
    e.id = id;
    if (id == "map2d-source" || id == "map2d-target") {
        e.kind = EnvKind::map2d;
        e.state_dim = 2;
        e.n_actions = 8;
        e.gamma = 0.99;
        e.r_max = map2d::goal_reward;
        e.horizon = 200;
        e.wall = (id == "map2d-target");
        return e;
    }
    if (id == "clip1d-source" || id == "clip1d-target") {
        e.kind = EnvKind::clip1d;
        e.state_dim = 2;
        e.n_actions = 3;
        e.gamma = 0.99;
        e.r_max = clip1d::goal_reward;
        e.horizon = 100;
        e.clip_k = (id == "clip1d-source") ? 4 : 2;
        return e;
    }
    if (id.rfind("tabular-random:", 0) == 0) {
        auto parts = split(id, ':');
        bool source = parts.size() == 5 && parts[4] == "source";
        if (parts.size() != 4 && !source) throw InputError("malformed tabular env id '" + id + "'");
        auto seed = parse_int(parts[1], "tabular seed");
        auto S = parse_int(parts[2], "tabular state count");
        auto A = parse_int(parts[3], "tabular action count");
        if (seed < 0 || S < 2 || A < 1 || S > 100000 || A > 1000) throw InputError("tabular env id out of range: " + id);
        e.kind = EnvKind::tabular;
        e.state_dim = 1;
        e.n_actions = int(A);
        e.gamma = 0.95;
        e.r_max = 1.0;
        e.horizon = 200;
        e.table = std::make_shared<const TabularMdp>(make_tabular_random(seed, int(S), int(A), source, e.gamma));
        return e;
    }
    throw InputError("unknown environment id '" + id + "'");
}

/// Source/target pairing used by the experiment harness.
struct EnvPair {
    std::string name;
    Env source;
    Env target;
};

/// Pair names: map2d, map2d-exchanged, map2d-identity, clip1d,
/// tabular-random:<seed>:<S>:<A>.
inline EnvPair make_pair(const std::string& name) {
    if (name == "map2d") return {name, make_env("map2d-source"), make_env("map2d-target")};
    if (name == "map2d-exchanged") return {name, make_env("map2d-target"), make_env("map2d-source")};
    if (name == "map2d-identity") return {name, make_env("map2d-source"), make_env("map2d-source")};
    if (name == "clip1d") return {name, make_env("clip1d-source"), make_env("clip1d-target")};
    if (name.rfind("tabular-random:", 0) == 0) return {name, make_env(name + ":source"), make_env(name)};
    throw InputError("unknown environment pair '" + name + "'");
}

// ---------------------------------------------------------------------------
// Exact oracles

/// Q <- r + gamma (1-done) max_a' Q(s',a').
inline QTable bellman_optimality(const TabularMdp& m, const QTable& q) {
    QTable out(m.n_states, m.n_actions);
    std::vector<double> v(m.n_states);
    for (int s = 0; s < m.n_states; ++s) v[s] = q.max(s);
    for (int s = 0; s < m.n_states; ++s)
        for (int a = 0; a < m.n_actions; ++a) {
            int k = m.key(s, a);
            out(s, a) = m.reward[k] + (m.terminal[k] ? 0.0 : m.gamma * v[m.next[k]]);
        }
    return out;
}

inline double sup_diff(const QTable& a, const QTable& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) d = std::max(d, std::abs(a.v[i] - b.v[i]));
    return d;
}

/// Exactly `iters` Bellman sweeps from Q = 0.
inline QTable value_iteration_steps(const TabularMdp& m, int iters) {
    QTable q(m.n_states, m.n_actions);
    for (int k = 0; k < iters; ++k) q = bellman_optimality(m, q);
    return q;
}

struct ViResult {
    QTable q;
    int iterations = 0;
};

/// Sweeps until the sup-norm Bellman residual of the returned table is <= tol.
inline ViResult value_iteration_full(const TabularMdp& m, double tol = 1e-10) {
    m.validate();
    if (!(tol > 0)) throw InputError("value iteration tolerance must be positive");
    ViResult r{QTable(m.n_states, m.n_actions), 0};
    for (;;) {
        QTable next = bellman_optimality(m, r.q);
        double res = sup_diff(next, r.q);
        if (res <= tol) return r;
        r.q = std::move(next);
        if (++r.iterations > 10000000) throw NumericalError("value iteration failed to converge");
    }
}

inline QTable value_iteration(const TabularMdp& m, double tol = 1e-10) { return value_iteration_full(m, tol).q; }
inline QTable value_iteration(const Env& e, double tol = 1e-10) { return value_iteration(e.tabular(), tol); }

namespace detail {
inline void require_stationary(const Policy& pi, const TabularMdp& m) {
    if (!pi.stationary()) throw InputError("exact tabular methods need a stationary policy");
    if (pi.n_actions != m.n_actions) throw InputError("policy action count does not match the MDP");
    if ((pi.kind == Policy::Kind::greedy || pi.kind == Policy::Kind::epsilon_greedy) && pi.q.n_states != m.n_states)
        throw InputError("policy table does not match the MDP state count");
}

/// P_pi with terminal transitions removed, and r_pi.
inline void policy_matrices(const TabularMdp& m, const Policy& pi, Eigen::MatrixXd& P, Eigen::VectorXd& r) {
    require_stationary(pi, m);
    P.setZero(m.n_states, m.n_states);
    r.setZero(m.n_states);
    for (int s = 0; s < m.n_states; ++s) {
        auto p = pi.probs(s);
        for (int a = 0; a < m.n_actions; ++a) {
            if (p[a] == 0.0) continue;
            int k = m.key(s, a);
            r[s] += p[a] * m.reward[k];
            if (!m.terminal[k]) P(s, m.next[k]) += p[a];
        }
    }
}
}  // namespace detail

/// V^pi from the linear system V = r_pi + gamma P_pi V.
inline Eigen::VectorXd policy_values(const TabularMdp& m, const Policy& pi) {
    Eigen::MatrixXd P;
    Eigen::VectorXd r;
    detail::policy_matrices(m, pi, P, r);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m.n_states, m.n_states) - m.gamma * P;
    return A.partialPivLu().solve(r);
}

inline double exact_return(const TabularMdp& m, const Policy& pi) {
    m.validate();
    Eigen::VectorXd v = policy_values(m, pi);
    return Eigen::Map<const Eigen::VectorXd>(m.rho0.data(), m.n_states).dot(v);
}

inline double exact_return(const Env& e, const Policy& pi) { return exact_return(e.tabular(), pi); }

/// Discounted return of one deterministic rollout truncated at `horizon`.
inline double rollout_return(const Env& e, const Policy& pi, int horizon) {
    if (horizon <= 0) throw InputError("horizon must be positive");
    Rng rng(0);
    State s = e.initial_state();
    double ret = 0.0, disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
        auto r = e.step(s, pi.act(e.index_of(s), t, rng));
        ret += disc * r.reward;
        disc *= e.gamma;
        if (r.done) break;
        s = std::move(r.next);
    }
    return ret;
}

/// Expected undiscounted return over `horizon` steps, by backward induction.
inline double finite_horizon_return(const TabularMdp& m, const Policy& pi, int horizon) {
    Eigen::MatrixXd P;
    Eigen::VectorXd r;
    detail::policy_matrices(m, pi, P, r);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m.n_states);
    for (int h = 0; h < horizon; ++h) v = r + P * v;
    return Eigen::Map<const Eigen::VectorXd>(m.rho0.data(), m.n_states).dot(v);
}

struct Occupancy {
    Eigen::VectorXd state;   // d(s)
    QTable state_action;     // d(s) pi(a|s)
};

/// Unnormalized discounted occupancy: d = rho0 + gamma P_pi^T d.
inline Occupancy occupancy(const TabularMdp& m, const Policy& pi) {
    m.validate();
    Eigen::MatrixXd P;
    Eigen::VectorXd r;
    detail::policy_matrices(m, pi, P, r);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(m.n_states, m.n_states) - m.gamma * P.transpose();
    Occupancy occ;
    occ.state = A.partialPivLu().solve(Eigen::Map<const Eigen::VectorXd>(m.rho0.data(), m.n_states));
    occ.state_action = QTable(m.n_states, m.n_actions);
    for (int s = 0; s < m.n_states; ++s) {
        auto p = pi.probs(s);
        for (int a = 0; a < m.n_actions; ++a) occ.state_action(s, a) = occ.state[s] * p[a];
    }
    return occ;
}

/// B^pi_M V(s) = sum_a pi(a|s) [r(s,a) + gamma (1-done) V(s')].
inline Eigen::VectorXd bellman_policy(const TabularMdp& m, const Policy& pi, const Eigen::VectorXd& v) {
    Eigen::MatrixXd P;
    Eigen::VectorXd r;
    detail::policy_matrices(m, pi, P, r);
    return r + m.gamma * P * v;
}

struct Lemma3 {
    double lhs = 0.0;
    double rhs = 0.0;
};

/// Return gap between a model and the true MDP, against the occupancy-weighted
/// one-step Bellman gap evaluated at the true values.
inline Lemma3 lemma3_check(const TabularMdp& target, const TabularMdp& model, const Policy& pi) {
    target.validate();
    model.validate();
    if (target.n_states != model.n_states || target.n_actions != model.n_actions)
        throw InputError("lemma3_check: state/action spaces differ");
    if (target.gamma != model.gamma || target.reward != model.reward || target.rho0 != model.rho0)
        throw InputError("lemma3_check: reward, initial distribution and gamma must be shared");
    Eigen::VectorXd vm = policy_values(target, pi);
    Lemma3 out;
    out.lhs = exact_return(model, pi) - exact_return(target, pi);
    Occupancy d = occupancy(model, pi);
    Eigen::VectorXd gap = bellman_policy(model, pi, vm) - bellman_policy(target, pi, vm);
    out.rhs = d.state.dot(gap);
    return out;
}

}  // namespace dara
