#pragma once

// Offline datasets: collection, subsampling, mixing and the text file format.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dara/core.hpp"
#include "dara/mdp.hpp"

namespace dara {

/// One (s, a, r, s', done) record with its domain label ('S' or 'T').
struct Transition {
    State s;
    int a = 0;
    double r = 0.0;
    bool r_masked = false;
    State s_next;
    bool done = false;
    char label = 'T';

    bool operator==(const Transition& o) const {
        bool req = r_masked ? o.r_masked : (!o.r_masked && r == o.r);
        return s == o.s && a == o.a && req && s_next == o.s_next && done == o.done && label == o.label;
    }
};

struct DatasetMeta {
    std::string env_id;
    int state_dim = 1;
    int action_dim = 1;
    double gamma = 0.99;
    std::string behavior_tag = "random";
    long long seed = 0;
    bool augmented = false;
    double eta = 0.0;

    bool operator==(const DatasetMeta& o) const {
        return env_id == o.env_id && state_dim == o.state_dim && action_dim == o.action_dim && gamma == o.gamma &&
               behavior_tag == o.behavior_tag && seed == o.seed && augmented == o.augmented && eta == o.eta;
    }
};

inline bool valid_behavior_tag(const std::string& t) {
    return t == "random" || t == "medium" || t == "expert" || t == "medium-replay" || t == "mixture";
}

struct OfflineDataset {
    DatasetMeta meta;
    std::vector<Transition> rows;
    /// Optional audit column written as `delta_r`; empty when absent.
    std::vector<double> delta_r;

    std::size_t size() const { return rows.size(); }
    bool empty() const { return rows.empty(); }

    /// 'S', 'T', or 'M' for a mixture (and 'T' for an empty set).
    char domain_label() const {
        if (rows.empty()) return 'T';
        char c = rows.front().label;
        for (const auto& t : rows)
            if (t.label != c) return 'M';
        return c;
    }

    bool any_masked() const {
        return std::any_of(rows.begin(), rows.end(), [](const Transition& t) { return t.r_masked; });
    }

    bool operator==(const OfflineDataset& o) const {
        if (!(meta == o.meta) || rows != o.rows || delta_r.size() != o.delta_r.size()) return false;
        for (std::size_t i = 0; i < delta_r.size(); ++i)
            if (std::memcmp(&delta_r[i], &o.delta_r[i], sizeof(double)) != 0) return false;
        return true;
    }

    /// Records carrying the given label, in order.
    OfflineDataset select(char label) const {
        OfflineDataset out;
        out.meta = meta;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].label != label) continue;
            out.rows.push_back(rows[i]);
            if (!delta_r.empty()) out.delta_r.push_back(delta_r[i]);
        }
        return out;
    }
};

inline char default_label(const std::string& env_id) {
    auto ends = [&](const std::string& suf) {
        return env_id.size() >= suf.size() && env_id.compare(env_id.size() - suf.size(), suf.size(), suf) == 0;
    };
    return (ends("-source") || ends(":source")) ? 'S' : 'T';
}

inline DatasetMeta make_meta(const Env& env, const std::string& tag, long long seed) {
    DatasetMeta m;
    m.env_id = env.id;
    m.state_dim = env.state_dim;
    m.action_dim = 1;
    m.gamma = env.gamma;
    m.behavior_tag = tag;
    m.seed = seed;
    return m;
}

inline std::string tag_for(const Policy& pi) {
    return pi.kind == Policy::Kind::uniform ? "random" : "expert";
}

/// Runs sequential episodes until exactly n records exist. Episodes end on a
/// terminal transition or after env.horizon steps; truncation is not stored
/// as done.
inline OfflineDataset collect(const Env& env, const Policy& pi, long long n, long long seed, char label,
                              const std::string& tag) {
    if (n <= 0) throw InputError("collect needs n_transitions > 0");
    if (!valid_behavior_tag(tag)) throw InputError("unknown behavior tag '" + tag + "'");
    OfflineDataset ds;
    ds.meta = make_meta(env, tag, seed);
    ds.rows.reserve(std::size_t(n));
    Rng rng(mix_seed(std::uint64_t(seed), 0xc011ec7));
    State s = env.sample_initial(rng);
    int t = 0;
    while ((long long)ds.rows.size() < n) {
        int a = pi.act(env.index_of(s), t, rng);
        auto r = env.step(s, a);
        ds.rows.push_back({s, a, r.reward, false, r.next, r.done, label});
        ++t;
        if (r.done || t >= env.horizon) {
            s = env.sample_initial(rng);
            t = 0;
        } else {
            s = std::move(r.next);
        }
    }
    return ds;
}

inline OfflineDataset collect(const Env& env, const Policy& pi, long long n, long long seed) {
    return collect(env, pi, n, seed, default_label(env.id), tag_for(pi));
}

/// Greedy policies at 10%, 20%, ..., 100% of VI iterations-to-tolerance.
inline std::vector<Policy> vi_checkpoints(const Env& env) {
    TabularMdp m = env.tabular();
    int k = value_iteration_full(m).iterations;
    std::vector<Policy> out;
    QTable q(m.n_states, m.n_actions);
    int done = 0;
    for (int c = 1; c <= 10; ++c) {
        int target = (k * c + 9) / 10;
        for (; done < target; ++done) q = bellman_optimality(m, q);
        out.push_back(Policy::greedy(q));
    }
    return out;
}

/// Behavior policy by tag: random, medium (greedy at 30% of VI iterations),
/// expert (converged VI).
inline Policy behavior_policy(const Env& env, const std::string& tag) {
    if (tag == "random") return Policy::uniform(env.n_actions);
    TabularMdp m = env.tabular();
    if (tag == "expert") return Policy::greedy(value_iteration(m));
    if (tag == "medium") {
        int k = value_iteration_full(m).iterations;
        return Policy::greedy(value_iteration_steps(m, (3 * k + 9) / 10));
    }
    throw InputError("no single behavior policy for tag '" + tag + "'");
}

inline OfflineDataset collect_tagged(const Env& env, const std::string& tag, long long n, long long seed, char label) {
    if (tag != "medium-replay") return collect(env, behavior_policy(env, tag), n, seed, label, tag);
    if (n <= 0) throw InputError("collect needs n_transitions > 0");
    auto cps = vi_checkpoints(env);
    OfflineDataset ds;
    ds.meta = make_meta(env, tag, seed);
    for (std::size_t c = 0; c < cps.size(); ++c) {
        long long part = n / 10 + ((long long)c < n % 10 ? 1 : 0);
        if (part == 0) continue;
        auto d = collect(env, cps[c], part, seed * 10 + (long long)c, label, "expert");
        ds.rows.insert(ds.rows.end(), d.rows.begin(), d.rows.end());
    }
    return ds;
}

/// ceil(fraction * count) records drawn without replacement; original order kept.
inline OfflineDataset subsample(const OfflineDataset& ds, double fraction, long long seed) {
    if (ds.empty()) throw InputError("subsample of an empty dataset");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("subsample fraction must lie in (0,1]");
    std::size_t n = ds.size();
    std::size_t k = std::min<std::size_t>(n, std::size_t(std::ceil(fraction * double(n) - 1e-9)));
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(std::uint64_t(seed), 0x5b5));
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + std::size_t(std::uniform_int_distribution<std::size_t>(0, n - 1 - i)(rng));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    OfflineDataset out;
    out.meta = ds.meta;
    out.rows.reserve(k);
    for (auto i : idx) {
        out.rows.push_back(ds.rows[i]);
        if (!ds.delta_r.empty()) out.delta_r.push_back(ds.delta_r[i]);
    }
    return out;
}

/// Concatenation; per-record labels carry provenance.
inline OfflineDataset mix(const OfflineDataset& a, const OfflineDataset& b) {
    if (b.empty()) return a;
    if (a.empty()) return b;
    if (a.meta.state_dim != b.meta.state_dim || a.meta.action_dim != b.meta.action_dim)
        throw InputError("mix: state/action dimensions differ");
    if (a.meta.gamma != b.meta.gamma) throw InputError("mix: gamma differs");
    OfflineDataset out;
    out.meta = a.meta;
    out.meta.behavior_tag = "mixture";
    out.meta.augmented = a.meta.augmented || b.meta.augmented;
    out.meta.eta = a.meta.augmented ? a.meta.eta : b.meta.eta;
    out.rows = a.rows;
    out.rows.insert(out.rows.end(), b.rows.begin(), b.rows.end());
    if (!a.delta_r.empty() || !b.delta_r.empty()) {
        auto col = [](const OfflineDataset& d) {
            return d.delta_r.empty() ? std::vector<double>(d.size(), 0.0) : d.delta_r;
        };
        out.delta_r = col(a);
        auto cb = col(b);
        out.delta_r.insert(out.delta_r.end(), cb.begin(), cb.end());
    }
    return out;
}

inline OfflineDataset mask_rewards(OfflineDataset ds) {
    for (auto& t : ds.rows) {
        t.r_masked = true;
        t.r = 0.0;
    }
    return ds;
}

/// Deterministic-env sanity check: every repeated (s,a) maps to one s'.
inline bool duplicate_keys_consistent(const OfflineDataset& ds, double tol = 0.0) {
    std::map<std::pair<State, int>, State> seen;
    for (const auto& t : ds.rows) {
        auto [it, fresh] = seen.emplace(std::make_pair(t.s, t.a), t.s_next);
        if (fresh) continue;
        for (std::size_t i = 0; i < t.s_next.size(); ++i)
            if (std::abs(it->second[i] - t.s_next[i]) > tol) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// File format

inline void write_dataset(std::ostream& os, const OfflineDataset& ds) {
    const auto& m = ds.meta;
    os << "format_version=1\n"
       << "env_id=" << m.env_id << "\n"
       << "state_dim=" << m.state_dim << "\n"
       << "action_dim=" << m.action_dim << "\n"
       << "gamma=" << fmt(m.gamma) << "\n"
       << "behavior_tag=" << m.behavior_tag << "\n"
       << "count=" << ds.size() << "\n"
       << "seed=" << m.seed << "\n";
    if (m.augmented) os << "augmented=1\neta=" << fmt(m.eta) << "\n";
    bool extra = !ds.delta_r.empty();
    if (extra) os << "extra_cols=delta_r\n";
    for (std::size_t i = 0; i < ds.rows.size(); ++i) {
        const auto& t = ds.rows[i];
        for (double v : t.s) os << fmt(v) << ',';
        os << t.a << ',';
        if (t.r_masked) os << "NA,";
        else os << fmt(t.r) << ',';
        for (double v : t.s_next) os << fmt(v) << ',';
        os << (t.done ? '1' : '0') << ',' << t.label;
        if (extra) os << ',' << fmt(ds.delta_r[i]);
        os << '\n';
    }
}

inline void save(const OfflineDataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    write_dataset(os, ds);
    os.flush();
    if (!os) throw IoError("write to '" + path + "' failed");
}

namespace detail {
inline double parse_field(const std::string& f, const std::string& path, std::size_t line, const char* what) {
    if (f.empty()) throw ParseError(path, line, std::string("empty ") + what + " field");
    char* end = nullptr;
    double v = std::strtod(f.c_str(), &end);
    if (end != f.c_str() + f.size()) throw ParseError(path, line, std::string("malformed ") + what + " '" + f + "'");
    if (!std::isfinite(v)) throw ParseError(path, line, std::string("non-finite ") + what + " '" + f + "'");
    return v;
}
}  // namespace detail

inline OfflineDataset read_dataset(std::istream& is, const std::string& path = "<stream>") {
    OfflineDataset ds;
    std::string line;
    std::size_t lineno = 0;
    static const char* keys[] = {"format_version", "env_id", "state_dim", "action_dim",
                                 "gamma", "behavior_tag", "count", "seed"};
    std::string vals[8];
    for (int i = 0; i < 8; ++i) {
        if (!std::getline(is, line)) throw ParseError(path, lineno + 1, "header ends early, expected '" + std::string(keys[i]) + "='");
        ++lineno;
        auto eq = line.find('=');
        if (eq == std::string::npos || line.substr(0, eq) != keys[i])
            throw ParseError(path, lineno, "malformed header, expected '" + std::string(keys[i]) + "='");
        vals[i] = line.substr(eq + 1);
    }
    long long count = 0;
    try {
        if (vals[0] != "1") throw ParseError(path, 1, "unsupported format_version '" + vals[0] + "'");
        ds.meta.env_id = vals[1];
        ds.meta.state_dim = int(parse_int(vals[2], "state_dim"));
        ds.meta.action_dim = int(parse_int(vals[3], "action_dim"));
        ds.meta.gamma = parse_double(vals[4], "gamma");
        ds.meta.behavior_tag = vals[5];
        count = parse_int(vals[6], "count");
        ds.meta.seed = parse_int(vals[7], "seed");
    } catch (const InputError& e) {
        throw ParseError(path, 0, std::string("malformed header: ") + e.what());
    }
    if (ds.meta.state_dim <= 0 || ds.meta.action_dim != 1 || count < 0)
        throw ParseError(path, 3, "malformed header dimensions or count");
    if (!valid_behavior_tag(ds.meta.behavior_tag)) throw ParseError(path, 6, "unknown behavior_tag");
    if (!(ds.meta.gamma > 0 && ds.meta.gamma < 1)) throw ParseError(path, 5, "gamma outside (0,1)");

    bool extra = false;
    const int sd = ds.meta.state_dim;
    std::size_t expect_fields = std::size_t(2 * sd + 4);
    ds.rows.reserve(std::size_t(count));
    long long rec = 0;
    bool in_header = true;
    while (std::getline(is, line)) {
        ++lineno;
        if (in_header) {
            auto eq = line.find('=');
            if (eq != std::string::npos && line.find(',') == std::string::npos) {
                std::string k = line.substr(0, eq), v = line.substr(eq + 1);
                if (k == "augmented") ds.meta.augmented = (v == "1");
                else if (k == "eta") ds.meta.eta = detail::parse_field(v, path, lineno, "eta");
                else if (k == "extra_cols" && v == "delta_r") extra = true;
                else throw ParseError(path, lineno, "unknown header key '" + k + "'");
                continue;
            }
            in_header = false;
        }
        if (rec >= count)
            throw ParseError(path, lineno, "count mismatch: header declares " + std::to_string(count) +
                                               " records but more are present");
        auto f = split(line, ',');
        if (f.size() != expect_fields + (extra ? 1 : 0))
            throw ParseError(path, lineno, "record " + std::to_string(rec) + " has " + std::to_string(f.size()) +
                                               " fields, expected " + std::to_string(expect_fields + (extra ? 1 : 0)));
        Transition t;
        std::size_t c = 0;
        for (int i = 0; i < sd; ++i) t.s.push_back(detail::parse_field(f[c++], path, lineno, "state"));
        {
            const std::string& af = f[c++];
            char* end = nullptr;
            long av = std::strtol(af.c_str(), &end, 10);
            if (af.empty() || end != af.c_str() + af.size() || av < 0)
                throw ParseError(path, lineno, "malformed action '" + af + "'");
            t.a = int(av);
        }
        if (f[c] == "NA") {
            t.r_masked = true;
            t.r = 0.0;
            ++c;
        } else {
            t.r = detail::parse_field(f[c++], path, lineno, "reward");
        }
        for (int i = 0; i < sd; ++i) t.s_next.push_back(detail::parse_field(f[c++], path, lineno, "next state"));
        if (f[c] != "0" && f[c] != "1") throw ParseError(path, lineno, "done must be 0 or 1");
        t.done = f[c++] == "1";
        if (f[c] != "S" && f[c] != "T") throw ParseError(path, lineno, "domain label must be S or T");
        t.label = f[c++][0];
        if (extra) ds.delta_r.push_back(detail::parse_field(f[c++], path, lineno, "delta_r"));
        ds.rows.push_back(std::move(t));
        ++rec;
    }
    if (rec < count)
        throw ParseError(path, lineno + 1, "count mismatch: header declares " + std::to_string(count) +
                                               " records, file truncated at record index " + std::to_string(rec));
    return ds;
}

inline OfflineDataset load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open dataset '" + path + "'");
    return read_dataset(is, path);
}

inline std::string to_string(const OfflineDataset& ds) {
    std::ostringstream os;
    write_dataset(os, ds);
    return os.str();
}

}  // namespace dara
