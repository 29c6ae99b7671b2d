#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dara {

/// Error categories double as CLI exit codes.
enum class ErrorKind { config = 2, io = 3, numerical = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    ErrorKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

/// Rejected input: bad arguments, unknown ids, dimension mismatches.
struct InputError : Error {
    explicit InputError(const std::string& m) : Error(ErrorKind::config, m) {}
};

/// File could not be read, written or parsed.
struct IoError : Error {
    explicit IoError(const std::string& m) : Error(ErrorKind::io, m) {}
};

/// Parse failure that knows the offending line (1-based).
struct ParseError : IoError {
    ParseError(const std::string& path, std::size_t line, const std::string& m)
        : IoError(path + ":" + std::to_string(line) + ": " + m), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

struct NumericalError : Error {
    explicit NumericalError(const std::string& m) : Error(ErrorKind::numerical, m) {}
};

using Rng = std::mt19937_64;

/// Deterministic sub-seed derivation (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline int uniform_int(Rng& rng, int n) {
    return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Shortest form that still round-trips: 17 significant digits.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Human-facing short form.
inline std::string fmt_short(double v, int prec = 6) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

inline double parse_double(const std::string& s, const std::string& what) {
    std::size_t pos = 0;
    double v;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw InputError("cannot parse " + what + " '" + s + "' as a number");
    }
    if (pos != s.size()) throw InputError("cannot parse " + what + " '" + s + "' as a number");
    return v;
}

inline long long parse_int(const std::string& s, const std::string& what) {
    std::size_t pos = 0;
    long long v;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        throw InputError("cannot parse " + what + " '" + s + "' as an integer");
    }
    if (pos != s.size()) throw InputError("cannot parse " + what + " '" + s + "' as an integer");
    return v;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Warnings go to stderr; trainers use this for recoverable fallbacks.
inline void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

}  // namespace dara
