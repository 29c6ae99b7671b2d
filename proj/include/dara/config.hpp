#pragma once

// Sectioned key=value run configuration (INI syntax). Every key has a
// default; unknown sections or keys are rejected. Values stay strings until
// a typed config is built, so resolved.cfg echoes exactly what was used.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dara/augment.hpp"
#include "dara/classifier.hpp"
#include "dara/eval.hpp"
#include "dara/offline_rl.hpp"

namespace dara {

struct ConfigKey {
    const char* name;  // section.key
    const char* value;
    const char* doc;
};

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys{
        {"env.pair", "map2d", "environment pair: map2d, map2d-exchanged, map2d-identity, clip1d, tabular-random:<seed>:<S>:<A>"},
        {"data.source_size", "100000", "source transitions (10S arm)"},
        {"data.target_size", "10000", "target transitions"},
        {"data.behavior", "random", "behavior policy: random, medium, expert, medium-replay"},
        {"data.seed", "0", "collection seed"},
        {"classifier.hidden", "64,64", "hidden layer sizes"},
        {"classifier.lr", "0.001", "Adam step size"},
        {"classifier.batch", "256", "class-balanced batch size (even)"},
        {"classifier.epochs", "100", "epochs; one epoch = 2*min(|source|,|target|)/batch steps"},
        {"classifier.seed", "0", "initialization and batching seed"},
        {"classifier.clip_bound", "10", "clip for delta_r"},
        {"augment.eta", "0.1", "reward modification coefficient"},
        {"augment.record_delta", "0", "append delta_r as an extra column"},
        {"augment.floor_zero", "0", "clamp delta_r below at 0 (valid when source dynamics are deterministic)"},
        {"trainer.algorithm", "conservative", "fqi-constrained, conservative, dwr, model-based"},
        {"trainer.iterations", "5000", "max Bellman sweeps"},
        {"trainer.tol", "1e-9", "sup-norm stopping tolerance"},
        {"trainer.batch", "256", "batch size for MLP Q fits"},
        {"trainer.lr", "0.001", "step size for MLP Q fits"},
        {"trainer.alpha", "0.1", "conservatism weight"},
        {"trainer.eta", "0.1", "weight on Qtilde (dwr) or on delta_r in the model penalty (model-based)"},
        {"trainer.beta", "1", "advantage temperature (dwr)"},
        {"trainer.w_max", "20", "weight clip (dwr)"},
        {"trainer.lambda", "-1", "model penalty scale; negative means gamma*R_max/(1-gamma)"},
        {"trainer.rollout_len", "5", "model rollout length"},
        {"trainer.rollouts", "20000", "model rollouts"},
        {"trainer.ensemble_n", "4", "dynamics ensemble members"},
        {"trainer.reward_bound", "-1", "R_max for value bounds; negative means max |r| in the data"},
        {"trainer.seed", "0", "trainer seed"},
        {"ensemble.kind", "tabular", "dynamics member kind: tabular or mlp"},
        {"ensemble.std_floor", "0.0001", "stddev floor"},
        {"ensemble.prior_std", "1", "stddev reported for keys a tabular member never saw"},
        {"ensemble.hidden", "32,32", "mlp member hidden sizes"},
        {"ensemble.epochs", "200", "mlp member epochs"},
        {"ensemble.batch", "64", "mlp member batch size"},
        {"ensemble.lr", "0.003", "mlp member step size"},
        {"eval.episodes", "10", "evaluation episodes"},
        {"eval.seed", "0", "evaluation seed"},
        {"grid.envs", "map2d", "env pairs"},
        {"grid.arms", "10T,1T,1T+10S-noaug,1T+10S-dara", "arms"},
        {"grid.algorithms", "conservative", "trainers"},
        {"grid.etas", "0.1", "eta values for the DARA arm"},
        {"grid.target_sizes", "10000", "1T target sizes; the 10T arm collects ten times as many"},
        {"grid.seeds", "0,1,2,3,4", "seeds"},
        {"grid.workers", "1", "parallel workers"},
    };
    return keys;
}

class RunConfig {
public:
    RunConfig() {
        for (const auto& k : config_keys()) values_[k.name] = k.value;
    }

    static RunConfig from_file(const std::string& path) {
        RunConfig c;
        c.merge_file(path);
        return c;
    }

    void merge_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config '" + path + "'");
        boost::property_tree::ptree pt;
        try {
            boost::property_tree::read_ini(in, pt);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw InputError("config '" + path + "' line " + std::to_string(e.line()) + ": " + e.message());
        }
        for (const auto& [section, body] : pt) {
            if (body.empty()) throw InputError("config '" + path + "': key '" + section + "' outside a section");
            for (const auto& [key, v] : body) set(section + "." + key, v.get_value<std::string>());
        }
    }

    void set(const std::string& name, const std::string& value) {
        auto it = values_.find(name);
        if (it == values_.end()) throw InputError("unknown config key '" + name + "'");
        it->second = trim(value);
    }

    const std::string& get(const std::string& name) const {
        auto it = values_.find(name);
        if (it == values_.end()) throw InputError("unknown config key '" + name + "'");
        return it->second;
    }

    double num(const std::string& name) const { return parse_double(get(name), name); }
    long long integer(const std::string& name) const { return parse_int(get(name), name); }
    bool flag(const std::string& name) const {
        const auto& v = get(name);
        if (v == "1" || v == "true") return true;
        if (v == "0" || v == "false") return false;
        throw InputError(name + " must be 0/1 or true/false, got '" + v + "'");
    }
    std::vector<std::string> list(const std::string& name) const {
        std::vector<std::string> out;
        for (auto& p : split(get(name), ','))
            if (!trim(p).empty()) out.push_back(trim(p));
        return out;
    }
    std::vector<int> ints(const std::string& name) const {
        std::vector<int> out;
        for (auto& p : list(name)) out.push_back(int(parse_int(p, name)));
        return out;
    }

    TrainConfig classifier() const {
        TrainConfig c;
        c.hidden = ints("classifier.hidden");
        c.lr = num("classifier.lr");
        c.batch = int(integer("classifier.batch"));
        c.epochs = int(integer("classifier.epochs"));
        c.seed = std::uint64_t(integer("classifier.seed"));
        c.validate();
        return c;
    }

    double clip_bound() const {
        double c = num("classifier.clip_bound");
        if (!(c > 0)) throw InputError("classifier.clip_bound must be positive");
        return c;
    }

    AugmentConfig augment() const {
        AugmentConfig a;
        a.eta = num("augment.eta");
        a.record_delta = flag("augment.record_delta");
        a.floor_zero = flag("augment.floor_zero");
        a.validate();
        return a;
    }

    TrainerConfig trainer() const {
        TrainerConfig t;
        t.algorithm = get("trainer.algorithm");
        t.iterations = int(integer("trainer.iterations"));
        t.tol = num("trainer.tol");
        t.batch = int(integer("trainer.batch"));
        t.lr = num("trainer.lr");
        t.alpha = num("trainer.alpha");
        t.eta = num("trainer.eta");
        t.beta = num("trainer.beta");
        t.w_max = num("trainer.w_max");
        t.lambda = num("trainer.lambda");
        t.rollout_len = int(integer("trainer.rollout_len"));
        t.rollouts = int(integer("trainer.rollouts"));
        t.ensemble_n = int(integer("trainer.ensemble_n"));
        t.reward_bound = num("trainer.reward_bound");
        t.seed = std::uint64_t(integer("trainer.seed"));
        if (t.algorithm != "fqi-constrained" && t.algorithm != "conservative" && t.algorithm != "dwr" &&
            t.algorithm != "model-based")
            throw InputError("unknown trainer.algorithm '" + t.algorithm + "'");
        t.validate();
        return t;
    }

    EnsembleConfig ensemble() const {
        EnsembleConfig e;
        e.kind = get("ensemble.kind");
        if (e.kind != "tabular" && e.kind != "mlp") throw InputError("ensemble.kind must be tabular or mlp");
        e.std_floor = num("ensemble.std_floor");
        e.prior_std = num("ensemble.prior_std");
        e.hidden = ints("ensemble.hidden");
        e.epochs = int(integer("ensemble.epochs"));
        e.batch = int(integer("ensemble.batch"));
        e.lr = num("ensemble.lr");
        if (!(e.std_floor > 0) || !(e.prior_std > 0)) throw InputError("ensemble stddevs must be positive");
        return e;
    }

    GridSpec grid() const {
        GridSpec g;
        g.envs = list("grid.envs");
        g.arms = list("grid.arms");
        g.algorithms = list("grid.algorithms");
        g.etas.clear();
        for (auto& e : list("grid.etas")) g.etas.push_back(parse_double(e, "grid.etas"));
        g.target_sizes.clear();
        for (auto& s : list("grid.target_sizes")) g.target_sizes.push_back(parse_int(s, "grid.target_sizes"));
        g.seeds.clear();
        for (auto& s : list("grid.seeds")) g.seeds.push_back(parse_int(s, "grid.seeds"));
        g.source_size = integer("data.source_size");
        g.behavior = get("data.behavior");
        g.classifier = classifier();
        g.clip_bound = clip_bound();
        g.augment = augment();
        g.trainer = trainer();
        g.ensemble = ensemble();
        g.episodes = int(integer("eval.episodes"));
        g.workers = int(integer("grid.workers"));
        validate_grid(g);
        return g;
    }

    std::string resolved() const {
        std::ostringstream os;
        std::string section;
        for (const auto& k : config_keys()) {
            std::string name = k.name;
            auto dot = name.find('.');
            if (name.substr(0, dot) != section) {
                if (!section.empty()) os << '\n';
                section = name.substr(0, dot);
                os << '[' << section << "]\n";
            }
            os << name.substr(dot + 1) << '=' << values_.at(name) << '\n';
        }
        return os.str();
    }

    void write_resolved(const std::string& dir) const {
        std::string path = dir + "/resolved.cfg";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write '" + path + "'");
        out << resolved();
        if (!out) throw IoError("write failed for '" + path + "'");
    }

private:
    std::map<std::string, std::string> values_;
};

}  // namespace dara
