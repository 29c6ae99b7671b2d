#pragma once

// Domain classifiers over (s,a,s') and (s,a); their log-odds difference
// estimates log T_target(s'|s,a) - log T_source(s'|s,a) scored on source data.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "dara/core.hpp"
#include "dara/dataset.hpp"
#include "dara/mdp.hpp"
#include "dara/mlp.hpp"

namespace dara {

struct TrainConfig {
    std::vector<int> hidden{64, 64};
    double lr = 1e-3;
    int batch = 256;
    int epochs = 100;
    std::uint64_t seed = 0;

    void validate() const {
        if (hidden.empty()) throw InputError("classifier needs at least one hidden layer size");
        for (int h : hidden)
            if (h <= 0) throw InputError("hidden sizes must be positive");
        if (!(lr > 0)) throw InputError("learning rate must be positive");
        if (batch < 2 || batch % 2) throw InputError("batch size must be a positive even number");
        if (epochs <= 0) throw InputError("epochs must be positive");
    }
};

/// Per-dimension standardization; constant dimensions keep unit scale.
struct Normalizer {
    Vec mean, scale;

    static Normalizer fit(const Mat& a, const Mat& b) {
        Normalizer n;
        const double N = double(a.cols() + b.cols());
        n.mean = (a.rowwise().sum() + b.rowwise().sum()) / N;
        Vec var = Vec::Zero(a.rows());
        for (const Mat* m : {&a, &b})
            var += (m->colwise() - n.mean).array().square().matrix().rowwise().sum();
        n.scale = (var / N).array().sqrt();
        for (Eigen::Index i = 0; i < n.scale.size(); ++i)
            if (n.scale[i] < 1e-8) n.scale[i] = 1.0;
        return n;
    }
    static Normalizer identity(int d) { return {Vec::Zero(d), Vec::Ones(d)}; }

    Mat apply(const Mat& x) const { return ((x.colwise() - mean).array().colwise() / scale.array()).matrix(); }
};

inline int action_count(const std::string& env_id) { return make_env(env_id).n_actions; }

namespace detail {
inline void put_sa(Mat& x, Eigen::Index col, const State& s, int a, int n_actions) {
    Eigen::Index r = 0;
    for (double v : s) x(r++, col) = v;
    for (int k = 0; k < n_actions; ++k) x(r++, col) = (k == a) ? 1.0 : 0.0;
}
}  // namespace detail

/// Features: [s, onehot(a)] and [s, onehot(a), s'].
inline Mat features_sa(const OfflineDataset& ds, int n_actions) {
    Mat x(ds.meta.state_dim + n_actions, Eigen::Index(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) detail::put_sa(x, Eigen::Index(i), ds.rows[i].s, ds.rows[i].a, n_actions);
    return x;
}

inline Mat features_sas(const OfflineDataset& ds, int n_actions) {
    const int sd = ds.meta.state_dim;
    Mat x(2 * sd + n_actions, Eigen::Index(ds.size()));
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& t = ds.rows[i];
        detail::put_sa(x, Eigen::Index(i), t.s, t.a, n_actions);
        for (int k = 0; k < sd; ++k) x(sd + n_actions + k, Eigen::Index(i)) = t.s_next[std::size_t(k)];
    }
    return x;
}

struct ClassifierPair {
    int state_dim = 1;
    int n_actions = 1;
    std::vector<int> hidden{64, 64};
    double clip_bound = 10.0;
    Mlp sas, sa;
    Normalizer norm_sas, norm_sa;
    double final_loss_sas = 0.0, final_loss_sa = 0.0;
    // Samples drawn per class during the first epoch (balance audit).
    long long epoch_source_samples = 0, epoch_target_samples = 0;

    /// log q(source|x) - log q(target|x) per column, through log-softmax.
    static Vec log_odds(const Mlp& net, const Normalizer& n, const Mat& x) {
        Mat z = net.forward(n.apply(x));
        Vec out(z.cols());
        for (Eigen::Index i = 0; i < z.cols(); ++i) {
            double mx = std::max(z(0, i), z(1, i));
            double lse = mx + std::log(std::exp(z(0, i) - mx) + std::exp(z(1, i) - mx));
            out[i] = (z(0, i) - lse) - (z(1, i) - lse);
        }
        return out;
    }

    Vec delta_r(const Mat& x_sas, const Mat& x_sa) const {
        Vec d = log_odds(sas, norm_sas, x_sas) - log_odds(sa, norm_sa, x_sa);
        for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = std::clamp(d[i], -clip_bound, clip_bound);
        return d;
    }

    double delta_r(const State& s, int a, const State& s_next) const {
        if (int(s.size()) != state_dim || int(s_next.size()) != state_dim || a < 0 || a >= n_actions)
            throw InputError("delta_r: input dimensions do not match the classifier");
        for (double v : s)
            if (std::isnan(v)) throw InputError("delta_r: NaN input");
        for (double v : s_next)
            if (std::isnan(v)) throw InputError("delta_r: NaN input");
        Mat xsa(state_dim + n_actions, 1), xsas(2 * state_dim + n_actions, 1);
        detail::put_sa(xsa, 0, s, a, n_actions);
        detail::put_sa(xsas, 0, s, a, n_actions);
        for (int k = 0; k < state_dim; ++k) xsas(state_dim + n_actions + k, 0) = s_next[std::size_t(k)];
        return delta_r(xsas, xsa)[0];
    }

    std::vector<double> delta_r(const OfflineDataset& ds) const {
        if (ds.empty()) return {};
        if (ds.meta.state_dim != state_dim) throw InputError("delta_r: dataset state_dim does not match classifier");
        for (const auto& t : ds.rows)
            if (t.a < 0 || t.a >= n_actions) throw InputError("delta_r: action out of range");
        Vec d = delta_r(features_sas(ds, n_actions), features_sa(ds, n_actions));
        return std::vector<double>(d.data(), d.data() + d.size());
    }
};

/// All-zero networks: Delta r is exactly 0 everywhere.
inline ClassifierPair zero_pair(int state_dim, int n_actions, std::vector<int> hidden = {64, 64}) {
    ClassifierPair p;
    p.state_dim = state_dim;
    p.n_actions = n_actions;
    p.hidden = hidden;
    auto sizes = [&](int in) {
        std::vector<int> s{in};
        s.insert(s.end(), hidden.begin(), hidden.end());
        s.push_back(2);
        return s;
    };
    p.sas = zero_mlp(sizes(2 * state_dim + n_actions));
    p.sa = zero_mlp(sizes(state_dim + n_actions));
    p.norm_sas = Normalizer::identity(2 * state_dim + n_actions);
    p.norm_sa = Normalizer::identity(state_dim + n_actions);
    return p;
}

namespace detail {
struct HeadResult {
    Mlp net;
    Normalizer norm;
    double final_loss = 0.0;
    long long per_class = 0;
};

/// One head. Each step draws batch/2 source and batch/2 target columns
/// (with replacement); an epoch is ceil(2 min(|S|,|T|) / batch) steps.
inline HeadResult train_head(const Mat& xs, const Mat& xt, const TrainConfig& cfg, std::uint64_t seed) {
    HeadResult h;
    h.norm = Normalizer::fit(xs, xt);
    Mat ns = h.norm.apply(xs), nt = h.norm.apply(xt);
    Rng rng(seed);
    std::vector<int> sizes{int(xs.rows())};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(2);
    h.net = make_mlp(sizes, rng);
    Adam opt(cfg.lr);
    const int half = cfg.batch / 2;
    const long long steps = (2 * std::min<long long>(xs.cols(), xt.cols()) + cfg.batch - 1) / cfg.batch;
    std::uniform_int_distribution<Eigen::Index> us(0, xs.cols() - 1), ut(0, xt.cols() - 1);
    std::vector<int> labels(std::size_t(cfg.batch));
    for (int i = 0; i < cfg.batch; ++i) labels[std::size_t(i)] = i < half ? 0 : 1;
    Mat x(xs.rows(), cfg.batch), dz;
    std::vector<Mat> acts;
    h.per_class = steps * half;
    for (int ep = 0; ep < cfg.epochs; ++ep) {
        double acc = 0.0;
        for (long long st = 0; st < steps; ++st) {
            for (int i = 0; i < half; ++i) x.col(i) = ns.col(us(rng));
            for (int i = 0; i < half; ++i) x.col(half + i) = nt.col(ut(rng));
            Mat z = h.net.forward(x, acts);
            acc += cross_entropy(z, labels, dz);
            opt.step(h.net, h.net.backward(acts, dz));
        }
        h.final_loss = acc / double(steps);
    }
    if (!h.net.finite()) throw NumericalError("classifier training diverged (non-finite weights)");
    return h;
}
}  // namespace detail

inline ClassifierPair train_pair(const OfflineDataset& source, const OfflineDataset& target, int n_actions,
                                 const TrainConfig& cfg) {
    cfg.validate();
    if (target.empty()) throw InputError("DARA requires target transitions: the target dataset is empty");
    if (source.empty()) throw InputError("classifier training needs source transitions");
    if (source.meta.state_dim != target.meta.state_dim) throw InputError("source and target state dimensions differ");
    ClassifierPair p;
    p.state_dim = source.meta.state_dim;
    p.n_actions = n_actions;
    p.hidden = cfg.hidden;
    auto hs = detail::train_head(features_sas(source, n_actions), features_sas(target, n_actions), cfg,
                                 mix_seed(cfg.seed, 0x515));
    auto ha = detail::train_head(features_sa(source, n_actions), features_sa(target, n_actions), cfg,
                                 mix_seed(cfg.seed, 0x5a));
    p.sas = std::move(hs.net);
    p.norm_sas = hs.norm;
    p.final_loss_sas = hs.final_loss;
    p.sa = std::move(ha.net);
    p.norm_sa = ha.norm;
    p.final_loss_sa = ha.final_loss;
    p.epoch_source_samples = p.epoch_target_samples = hs.per_class;
    return p;
}

inline ClassifierPair train_pair(const OfflineDataset& source, const OfflineDataset& target, const TrainConfig& cfg) {
    return train_pair(source, target, action_count(source.meta.env_id), cfg);
}

inline double grad_check_classifier(const Mlp& net, const Mat& x, const std::vector<int>& labels,
                                    std::uint64_t seed = 0) {
    return grad_check(net, classifier_loss(x, labels), 100, 1e-5, seed);
}

// ---------------------------------------------------------------------------
// Exact count-based scorer (test oracle)

class BayesScorer {
public:
    double clip_bound = 10.0;

    BayesScorer(const OfflineDataset& source, const OfflineDataset& target, double clip = 10.0) : clip_bound(clip) {
        for (const auto& t : source.rows) {
            ++sas_[{t.s, t.a, t.s_next}].first;
            ++sa_[{t.s, t.a}].first;
        }
        for (const auto& t : target.rows) {
            ++sas_[{t.s, t.a, t.s_next}].second;
            ++sa_[{t.s, t.a}].second;
        }
    }

    /// p(source | s,a,s') from raw counts.
    double p_source_sas(const State& s, int a, const State& s2) const {
        auto c = counts_sas(s, a, s2);
        return double(c.first) / double(c.first + c.second);
    }
    double p_source_sa(const State& s, int a) const {
        auto c = counts_sa(s, a);
        return double(c.first) / double(c.first + c.second);
    }

    /// Clipped log-odds difference. A pair (s,a) unseen in either domain
    /// carries no dynamics evidence and scores 0.
    double delta_r(const State& s, int a, const State& s2) const {
        auto cs = counts_sas(s, a, s2);
        auto ca = counts_sa(s, a);
        if (ca.first == 0 || ca.second == 0) return 0.0;
        double lo_sas = log_odds(cs), lo_sa = log_odds(ca);
        return std::clamp(lo_sas - lo_sa, -clip_bound, clip_bound);
    }

    std::vector<double> delta_r(const OfflineDataset& ds) const {
        std::vector<double> out;
        out.reserve(ds.size());
        for (const auto& t : ds.rows) out.push_back(delta_r(t.s, t.a, t.s_next));
        return out;
    }

    std::pair<long long, long long> counts_sas(const State& s, int a, const State& s2) const {
        auto it = sas_.find({s, a, s2});
        if (it == sas_.end()) throw InputError("count scorer: (s,a,s') key was never observed");
        return it->second;
    }
    std::pair<long long, long long> counts_sa(const State& s, int a) const {
        auto it = sa_.find({s, a});
        if (it == sa_.end()) throw InputError("count scorer: (s,a) key was never observed");
        return it->second;
    }

private:
    static double log_odds(std::pair<long long, long long> c) {
        const double n = double(c.first + c.second);
        double ls = c.first ? std::log(double(c.first)) - std::log(n) : -std::numeric_limits<double>::infinity();
        double lt = c.second ? std::log(double(c.second)) - std::log(n) : -std::numeric_limits<double>::infinity();
        return ls - lt;
    }

    std::map<std::tuple<State, int, State>, std::pair<long long, long long>> sas_;
    std::map<std::pair<State, int>, std::pair<long long, long long>> sa_;
};

// ---------------------------------------------------------------------------
// Serialization

inline void save(const ClassifierPair& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path + "' for writing");
    os << "format_version=1\nkind=classifier_pair\nstate_dim=" << p.state_dim << "\nn_actions=" << p.n_actions
       << "\nhidden=";
    for (std::size_t i = 0; i < p.hidden.size(); ++i) os << (i ? "," : "") << p.hidden[i];
    os << "\nclip_bound=" << fmt(p.clip_bound) << "\n";
    auto row = [&](const char* key, const Vec& v) {
        os << key << "=";
        for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? "," : "") << fmt(v[i]);
        os << "\n";
    };
    row("sas_mean", p.norm_sas.mean);
    row("sas_scale", p.norm_sas.scale);
    row("sa_mean", p.norm_sa.mean);
    row("sa_scale", p.norm_sa.scale);
    write_mlp(os, p.sas);
    write_mlp(os, p.sa);
    if (!os) throw IoError("write to '" + path + "' failed");
}

inline ClassifierPair load_classifier(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open classifier '" + path + "'");
    ClassifierPair p;
    try {
        if (detail::read_kv(is, "format_version") != "1") throw IoError("unsupported classifier format_version");
        if (detail::read_kv(is, "kind") != "classifier_pair") throw IoError("file is not a classifier pair");
        p.state_dim = int(parse_int(detail::read_kv(is, "state_dim"), "state_dim"));
        p.n_actions = int(parse_int(detail::read_kv(is, "n_actions"), "n_actions"));
        p.hidden.clear();
        for (auto& h : split(detail::read_kv(is, "hidden"), ',')) p.hidden.push_back(int(parse_int(h, "hidden")));
        p.clip_bound = parse_double(detail::read_kv(is, "clip_bound"), "clip_bound");
        auto vec = [&](const char* key) {
            auto f = split(detail::read_kv(is, key), ',');
            Vec v(Eigen::Index(f.size()));
            for (std::size_t i = 0; i < f.size(); ++i) v[Eigen::Index(i)] = parse_double(f[i], key);
            return v;
        };
        p.norm_sas.mean = vec("sas_mean");
        p.norm_sas.scale = vec("sas_scale");
        p.norm_sa.mean = vec("sa_mean");
        p.norm_sa.scale = vec("sa_scale");
    } catch (const InputError& e) {
        throw IoError(path + ": " + e.what());
    }
    p.sas = read_mlp(is);
    p.sa = read_mlp(is);
    if (p.sas.in_dim() != 2 * p.state_dim + p.n_actions || p.sa.in_dim() != p.state_dim + p.n_actions ||
        p.sas.out_dim() != 2 || p.sa.out_dim() != 2 || p.norm_sas.mean.size() != p.sas.in_dim() ||
        p.norm_sa.mean.size() != p.sa.in_dim())
        throw IoError(path + ": classifier dimensions are inconsistent");
    if (!(p.clip_bound > 0)) throw IoError(path + ": clip_bound must be positive");
    return p;
}

}  // namespace dara
