#include "ldisc/cli.hpp"

#include "ldisc/environments.hpp"
#include "ldisc/errors.hpp"
#include "ldisc/memory.hpp"
#include "ldisc/optimizer.hpp"
#include "ldisc/parser.hpp"
#include "ldisc/sampler.hpp"
#include "ldisc/solver.hpp"

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <ios>
#include <iostream>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>

#ifndef LDISC_VERSION
#define LDISC_VERSION "0.0.0"
#endif

namespace ldisc::cli {

using nlohmann::json;
namespace fs = std::filesystem;

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string csv_line(const std::vector<std::string>& fields) {
    std::string line;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        line += csv_field(fields[i]);
    }
    line += '\n';
    return line;
}

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
        throw Error("SHA-256 computation failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

namespace {

class UsageError : public Error {
public:
    using Error::Error;
};

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) out.push_back(item);
    return out;
}

double to_double(const std::string& s) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw UsageError("not a number: '" + s + "'");
    }
    if (pos != s.size()) throw UsageError("not a number: '" + s + "'");
    return v;
}

std::uint64_t to_u64(const std::string& s) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw UsageError("not a non-negative integer: '" + s + "'");
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw UsageError("integer out of range: '" + s + "'");
    }
}

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
    const auto parts = split(text, ':');
    if (parts.size() == 3) {
        const double lo = to_double(parts[0]), hi = to_double(parts[1]);
        const std::uint64_t n = to_u64(parts[2]);
        if (n == 0) throw UsageError("grid needs at least one point");
        std::vector<double> grid(n);
        for (std::uint64_t i = 0; i < n; ++i)
            grid[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        if (n > 1) grid.back() = hi;
        return grid;
    }
    if (parts.size() != 1) throw UsageError("grid must be start:stop:count or a comma list");
    std::vector<double> grid;
    for (const auto& item : split(text, ',')) grid.push_back(to_double(item));
    if (grid.empty()) throw UsageError("empty grid");
    return grid;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    for (const auto& item : split(text, ',')) {
        const auto dots = item.find("..");
        if (dots == std::string::npos) {
            seeds.push_back(to_u64(item));
            continue;
        }
        const std::uint64_t lo = to_u64(item.substr(0, dots)), hi = to_u64(item.substr(dots + 2));
        if (hi < lo) throw UsageError("empty seed range '" + item + "'");
        for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    }
    if (seeds.empty()) throw UsageError("no seeds given");
    return seeds;
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw std::ios_base::failure("error reading '" + path + "'");
    return ss.str();
}

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// Where a command's data goes: files plus a manifest in an output directory,
// or stdout.
class Output {
public:
    Output(std::string command, const std::string& dir_flag, std::ostream& out)
        : command_(std::move(command)), out_(out) {
        std::string dir = dir_flag;
        if (dir.empty())
            if (const char* env = std::getenv("LDISC_OUT_DIR")) dir = env;
        if (!dir.empty()) dir_ = fs::path(dir);
        manifest_ = {{"schema", "ldisc.manifest/1"},
                     {"command", command_},
                     {"version", LDISC_VERSION},
                     {"inputs", json::array()},
                     {"outputs", json::array()}};
    }

    bool to_files() const { return dir_.has_value(); }

    void set_config(json config) { manifest_["config"] = std::move(config); }
    void set_seeds(const std::vector<std::uint64_t>& seeds) { manifest_["seeds"] = seeds; }
    void add_input(const std::string& label, std::string_view content) {
        manifest_["inputs"].push_back({{"source", label}, {"sha256", sha256_hex(content)}});
    }

    /// Writes one data file, or prints it when there is no output directory.
    void emit(const std::string& file, const std::string& schema, const std::string& content,
              bool print_without_dir = true) {
        if (!dir_) {
            if (print_without_dir) out_ << content;
            return;
        }
        write(*dir_ / file, content);
        manifest_["outputs"].push_back({{"file", file}, {"schema", schema}});
    }

    void finish() {
        if (!dir_) return;
        manifest_["timestamp"] = utc_timestamp();
        const std::string name = command_ + ".manifest.json";
        write(*dir_ / name, manifest_.dump(2) + "\n");
        out_ << "wrote " << manifest_["outputs"].size() << " file(s) and " << name << " to "
             << dir_->string() << "\n";
    }

private:
    static void write(const fs::path& path, const std::string& content) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw std::ios_base::failure("cannot create '" + path.parent_path().string() + "'");
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        if (!f) throw std::ios_base::failure("cannot write '" + path.string() + "'");
        f << content;
        f.close();
        if (!f) throw std::ios_base::failure("error writing '" + path.string() + "'");
    }

    std::string command_;
    std::ostream& out_;
    std::optional<fs::path> dir_;
    json manifest_;
};

// --env NAME | --file PATH, with an optional discount override.
struct ModelArgs {
    std::string env;
    std::string file;
    std::optional<double> gamma;

    void add(CLI::App* app, const std::string& default_env = "") {
        env = default_env;
        auto* e = app->add_option("--env", env, "built-in environment (" + join_names() + ")");
        auto* f = app->add_option("--file", file, "Cassandra .POMDP file");
        e->excludes(f);
        app->add_option("--gamma", gamma, "override the discount");
    }

    static std::string join_names() {
        std::string s;
        for (const auto& n : environment_names()) s += (s.empty() ? "" : ", ") + n;
        return s;
    }

    PomdpSource load(Output& output) const {
        PomdpSource src;
        if (!file.empty()) {
            const std::string text = read_file(file);
            src = parse_pomdp(text, file);
            src.origin = Origin::File;
            output.add_input(file, text);
        } else {
            if (env.empty()) throw UsageError("give --env or --file");
            src = environment(env);
            const auto& fixtures = fixture_names();
            const bool is_fixture = std::find(fixtures.begin(), fixtures.end(), env) != fixtures.end();
            output.add_input("builtin:" + env, is_fixture ? fixture_text(env) : to_cassandra(src));
        }
        if (gamma) {
            if (!(*gamma >= 0.0 && *gamma <= 1.0)) throw UsageError("--gamma must lie in [0,1]");
            src.pomdp = src.pomdp.with_gamma(*gamma);
        }
        require_valid(src.pomdp);
        return src;
    }

    json echo() const {
        json j;
        if (!file.empty()) j["file"] = file;
        else j["env"] = env;
        if (gamma) j["gamma"] = *gamma;
        return j;
    }
};

Policy policy_from_json(const json& j, const Pomdp& p) {
    const auto read = [&](const char* key) {
        const auto rows = j.at(key).get<std::vector<std::vector<double>>>();
        Matrix m(static_cast<Eigen::Index>(rows.size()),
                 static_cast<Eigen::Index>(rows.empty() ? 0 : rows[0].size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            if (rows[r].size() != static_cast<std::size_t>(m.cols()))
                throw UsageError("policy rows have different lengths");
            for (std::size_t c = 0; c < rows[r].size(); ++c)
                m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
        return m;
    };
    Policy pi = j.contains("logits") ? Policy::from_logits(read("logits")) : Policy(read("probs"));
    require_compatible(p, pi);
    return pi;
}

// uniform | random:N:SEED | file:PATH (a JSON object with "probs" or "logits",
// or a list of them).
std::vector<std::pair<std::string, Policy>> load_policies(const std::string& spec, const Pomdp& p,
                                                          Output& output) {
    std::vector<std::pair<std::string, Policy>> out;
    const std::size_t O = p.n_obs(), A = p.n_actions();
    if (spec == "uniform") {
        out.emplace_back("uniform", Policy::uniform(O, A));
        return out;
    }
    const auto parts = split(spec, ':');
    if (parts.size() >= 2 && parts[0] == "random") {
        if (parts.size() == 2) {
            // random:SEED, one policy
            const std::uint64_t seed = to_u64(parts[1]);
            out.emplace_back(std::to_string(0), random_policy(O, A, seed));
            return out;
        }
        if (parts.size() != 3) throw UsageError("policy source must be random:N:SEED");
        const std::uint64_t n = to_u64(parts[1]), seed = to_u64(parts[2]);
        if (n == 0) throw UsageError("random:N:SEED needs N >= 1");
        for (std::uint64_t i = 0; i < n; ++i)
            out.emplace_back(std::to_string(i), random_policy(O, A, derive_seed(seed, i)));
        return out;
    }
    if (spec.rfind("file:", 0) == 0) {
        const std::string path = spec.substr(5);
        const std::string text = read_file(path);
        output.add_input(path, text);
        json j;
        try {
            j = json::parse(text);
        } catch (const json::exception& e) {
            throw UsageError("policy file '" + path + "': " + e.what());
        }
        try {
            if (j.is_array())
                for (std::size_t i = 0; i < j.size(); ++i)
                    out.emplace_back(std::to_string(i), policy_from_json(j[i], p));
            else
                out.emplace_back("0", policy_from_json(j, p));
        } catch (const json::exception& e) {
            throw UsageError("policy file '" + path + "': " + e.what());
        }
        return out;
    }
    throw UsageError("unknown policy source '" + spec + "' (uniform, random:N:SEED, file:PATH)");
}

DiscrepancySpec make_spec(const std::string& lambdas, const std::string& norm) {
    const auto ls = split(lambdas, ',');
    if (ls.size() != 2) throw UsageError("--lambdas takes two values, e.g. 0,1");
    DiscrepancySpec spec;
    spec.lambda1 = to_double(ls[0]);
    spec.lambda2 = to_double(ls[1]);
    for (double l : {spec.lambda1, spec.lambda2})
        if (!(l >= 0.0 && l <= 1.0)) throw UsageError("lambdas must lie in [0,1]");
    try {
        spec.norm = norm_from_string(norm);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    return spec;
}

json spec_json(const DiscrepancySpec& s) {
    return {{"lambda1", s.lambda1}, {"lambda2", s.lambda2}, {"norm", to_string(s.norm)}};
}

std::string name_or_index(const std::vector<std::string>& names, std::size_t i) {
    return i < names.size() ? names[i] : std::to_string(i);
}

// ---------------------------------------------------------------- commands

struct ValidateArgs {
    std::string path;
    std::string env;
    bool json_mode = false;
};

int cmd_validate(const ValidateArgs& args, std::ostream& out) {
    json report = {{"schema", "ldisc.validate/1"}};
    int code = kOk;
    std::string message;
    std::optional<std::size_t> line;
    std::vector<ValidationIssue> issues;
    PomdpSource src;
    report["source"] = args.path.empty() ? "builtin:" + args.env : args.path;
    try {
        src = args.path.empty() ? environment(args.env) : parse_pomdp(read_file(args.path), args.path);
        const ValidationReport v = validate(src.pomdp);
        issues = v.issues;
        if (!v.ok()) {
            code = kDomainFailure;
            message = v.summary();
        }
    } catch (const std::ios_base::failure& e) {
        code = kIoError;
        message = e.what();
    } catch (const ParseError& e) {
        code = kUsage;
        message = e.what();
        line = e.line();
    } catch (const Error& e) {
        code = kDomainFailure;
        message = e.what();
    }

    report["status"] = code == kOk ? "pass" : code == kDomainFailure ? "invalid" : code == kUsage ? "parse_error" : "io_error";
    report["exit_code"] = code;
    if (!message.empty()) report["message"] = message;
    if (line) report["line"] = *line;
    report["issues"] = json::array();
    for (const auto& i : issues) report["issues"].push_back({{"check", i.check}, {"message", i.message}});
    if (code == kOk || code == kDomainFailure) {
        report["states"] = src.pomdp.n_states();
        report["actions"] = src.pomdp.n_actions();
        report["observations"] = src.pomdp.n_obs();
        report["gamma"] = src.pomdp.gamma();
        std::size_t terminal = 0;
        for (bool t : src.pomdp.terminal()) terminal += t ? 1 : 0;
        report["terminal_states"] = terminal;
    }

    if (args.json_mode) {
        out << report.dump(2) << "\n";
    } else if (code == kOk) {
        out << "ok: " << report["source"].get<std::string>() << " (" << src.pomdp.n_states()
            << " states, " << src.pomdp.n_actions() << " actions, " << src.pomdp.n_obs()
            << " observations, gamma " << src.pomdp.gamma() << ")\n";
    } else {
        out << report["status"].get<std::string>() << ": " << message << "\n";
    }
    return code;
}

struct SolveArgs {
    ModelArgs model;
    std::string policy = "uniform";
    std::string lambdas = "0,1";
    std::string format = "csv";
    std::string out_dir;
};

int cmd_solve(const SolveArgs& args, std::ostream& out) {
    Output output("solve", args.out_dir, out);
    const PomdpSource src = args.model.load(output);
    const auto policies = load_policies(args.policy, src.pomdp, output);
    if (policies.size() != 1) throw UsageError("solve takes a single policy");
    const Policy& pi = policies[0].second;
    std::vector<double> lambdas;
    for (const auto& l : split(args.lambdas, ',')) {
        lambdas.push_back(to_double(l));
        if (!(lambdas.back() >= 0.0 && lambdas.back() <= 1.0)) throw UsageError("lambdas must lie in [0,1]");
    }
    output.set_config({{"model", args.model.echo()}, {"policy", args.policy}, {"lambdas", lambdas}});

    const std::string schema = "ldisc.solve/1";
    std::string csv = csv_line({"schema", "obs", "obs_name", "action", "action_name", "lambda", "q", "condition"});
    json j = {{"schema", schema}, {"tables", json::array()}};
    for (double l : lambdas) {
        const QTable q = q_lambda(src.pomdp, pi, l);
        json table = {{"lambda", l}, {"condition", q.condition}, {"warnings", q.warnings}, {"values", json::array()}};
        for (Eigen::Index o = 0; o < q.values.rows(); ++o) {
            std::vector<double> row;
            for (Eigen::Index a = 0; a < q.values.cols(); ++a) {
                row.push_back(q.values(o, a));
                csv += csv_line({schema, std::to_string(o), name_or_index(src.obs_names, static_cast<std::size_t>(o)),
                                 std::to_string(a), name_or_index(src.action_names, static_cast<std::size_t>(a)),
                                 format_number(l), format_number(q.values(o, a)), format_number(q.condition)});
            }
            table["values"].push_back(row);
        }
        j["tables"].push_back(table);
    }
    if (args.format == "json")
        output.emit("solve.json", schema, j.dump(2) + "\n");
    else
        output.emit("solve.csv", schema, csv);
    output.finish();
    return kOk;
}

struct DiscrepArgs {
    ModelArgs model;
    std::string policies = "random:100:0";
    std::string lambdas = "0,1";
    std::string norm = "policy_weighted_l2";
    std::string format = "csv";
    std::string out_dir;
};

int cmd_discrep(const DiscrepArgs& args, std::ostream& out) {
    Output output("discrep", args.out_dir, out);
    const PomdpSource src = args.model.load(output);
    const DiscrepancySpec spec = make_spec(args.lambdas, args.norm);
    const auto policies = load_policies(args.policies, src.pomdp, output);
    output.set_config({{"model", args.model.echo()}, {"policies", args.policies}, {"discrepancy", spec_json(spec)}});

    const std::string schema = "ldisc.discrep/1";
    std::string csv = csv_line({"schema", "policy", "discrepancy"});
    json rows = json::array();
    double lo = std::numeric_limits<double>::infinity(), hi = -lo, total = 0.0;
    for (const auto& [id, pi] : policies) {
        const double ld = lambda_discrepancy(src.pomdp, pi, spec);
        lo = std::min(lo, ld);
        hi = std::max(hi, ld);
        total += ld;
        csv += csv_line({schema, id, format_number(ld)});
        rows.push_back({{"policy", id}, {"discrepancy", ld}});
    }
    const double mean = total / static_cast<double>(policies.size());
    for (const auto& [label, v] : {std::pair<const char*, double>{"min", lo}, {"max", hi}, {"mean", mean}})
        csv += csv_line({schema, label, format_number(v)});
    if (args.format == "json") {
        json j = {{"schema", schema}, {"rows", rows}, {"summary", {{"min", lo}, {"max", hi}, {"mean", mean}}}};
        output.emit("discrep.json", schema, j.dump(2) + "\n");
    } else {
        output.emit("discrep.csv", schema, csv);
    }
    output.finish();
    return kOk;
}

struct SweepPoArgs {
    std::string patterns = "corridor,junction,both";
    std::string grid = "0:1:11";
    std::size_t corridor_len = 5;
    double gamma = 1.0;
    std::string lambdas = "0,1";
    std::string norm = "occupancy_weighted_max";
    std::string out_dir;
};

int cmd_sweep_po(const SweepPoArgs& args, std::ostream& out) {
    Output output("sweep-po", args.out_dir, out);
    const DiscrepancySpec spec = make_spec(args.lambdas, args.norm);
    const std::vector<double> grid = parse_grid(args.grid);
    std::vector<AliasingPattern> patterns;
    for (const auto& name : split(args.patterns, ',')) {
        try {
            patterns.push_back(aliasing_from_string(name));
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }
    for (double m : grid)
        if (!(m >= 0.0 && m <= 1.0)) throw UsageError("mix values must lie in [0,1]");
    output.set_config({{"patterns", args.patterns},
                       {"grid", grid},
                       {"corridor_len", args.corridor_len},
                       {"gamma", args.gamma},
                       {"discrepancy", spec_json(spec)}});

    const PomdpSource base = tmaze_fully_observable(args.corridor_len, args.gamma);
    const Policy pi = tmaze_sweep_policy(args.corridor_len);
    const std::string schema = "ldisc.sweep_po/1";
    std::string csv = csv_line({"schema", "pattern", "mix", "discrepancy"});
    for (AliasingPattern pattern : patterns) {
        const Matrix aliased = tmaze_aliased_phi(args.corridor_len, pattern);
        for (double mix : grid) {
            const double ld = lambda_discrepancy(mix_observation(base.pomdp, aliased, mix), pi, spec);
            csv += csv_line({schema, to_string(pattern), format_number(mix), format_number(ld)});
        }
    }
    output.emit("sweep_po.csv", schema, csv);
    output.finish();
    return kOk;
}

struct OptimizeArgs {
    ModelArgs model;
    std::string n_mem = "2";
    std::string seeds = "0";
    OptimConfig cfg;
    std::string lambdas = "0,1";
    std::string norm = "policy_weighted_l2";
    bool pre_augment = false;
    bool no_traces = false;
    std::string out_dir;
};

int cmd_optimize_mem(OptimizeArgs args, std::ostream& out, std::ostream& err) {
    Output output("optimize-mem", args.out_dir, out);
    const PomdpSource src = args.model.load(output);
    args.cfg.discrepancy = make_spec(args.lambdas, args.norm);
    std::vector<std::size_t> n_mems;
    for (const auto& m : split(args.n_mem, ',')) {
        const std::uint64_t v = to_u64(m);
        if (v == 0) throw UsageError("--n-mem values must be at least 1");
        n_mems.push_back(static_cast<std::size_t>(v));
    }
    const std::vector<std::uint64_t> seeds = parse_seeds(args.seeds);
    try {
        args.cfg.check();
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    json cfg_echo = to_json(args.cfg);
    cfg_echo.erase("seed");
    output.set_config({{"model", args.model.echo()},
                       {"n_mem", n_mems},
                       {"pre_augment", args.pre_augment},
                       {"optim", cfg_echo}});
    output.set_seeds(seeds);

    const std::string schema = "ldisc.optimize_mem_summary/1";
    std::string csv = csv_line({"schema", "n_mem", "seed", "pre_augment", "initial_discrepancy",
                                "final_discrepancy", "initial_start_value", "final_start_value", "failed"});
    bool any_failed = false;
    for (std::size_t m : n_mems)
        for (std::uint64_t seed : seeds) {
            OptimConfig cfg = args.cfg;
            cfg.seed = seed;
            const ValueImprovementResult r = optimize_with_value_improvement(src.pomdp, m, cfg, args.pre_augment);
            if (r.status.failed) {
                any_failed = true;
                err << "n_mem " << m << " seed " << seed << ": " << r.failed_stage << " stage failed at step "
                    << r.status.failed_step << ": " << r.status.failure << "\n";
            }
            json report = to_json(r, !args.no_traces);
            report["schema"] = "ldisc.optimize_mem/1";
            report["seed"] = seed;
            report["config"] = to_json(cfg);
            output.emit("optimize_mem_n" + std::to_string(m) + "_seed" + std::to_string(seed) + ".json",
                        "ldisc.optimize_mem/1", report.dump(2) + "\n", false);
            csv += csv_line({schema, std::to_string(m), std::to_string(seed), args.pre_augment ? "true" : "false",
                             format_number(r.initial_discrepancy), format_number(r.final_discrepancy),
                             format_number(r.initial_start_value), format_number(r.final_start_value),
                             r.status.failed ? "true" : "false"});
        }
    output.emit("optimize_mem_summary.csv", schema, csv);
    output.finish();
    return any_failed ? kDomainFailure : kOk;
}

struct ParitySweepArgs {
    std::string perturbation = "start-probs";
    std::string grid;
    std::string policies = "random:100:0";
    std::string lambdas = "0,1";
    std::string norm = "policy_weighted_l2";
    double gamma = 0.9;
    std::string out_dir;
};

int cmd_parity_sweep(const ParitySweepArgs& args, std::ostream& out) {
    Output output("parity-sweep", args.out_dir, out);
    const DiscrepancySpec spec = make_spec(args.lambdas, args.norm);
    const bool start = args.perturbation == "start-probs";
    if (!start && args.perturbation != "stay-action")
        throw UsageError("--perturbation must be start-probs or stay-action");
    const std::vector<double> grid =
        parse_grid(args.grid.empty() ? (start ? "0:0.25:11" : "0:0.9:10") : args.grid);
    for (double v : grid) {
        if (start && !(v >= -0.25 && v <= 0.25)) throw UsageError("start-probs shifts must lie in [-0.25,0.25]");
        if (!start && !(v >= 0.0 && v < 1.0)) throw UsageError("stay-action probabilities must lie in [0,1)");
    }
    output.set_config({{"perturbation", args.perturbation},
                       {"grid", grid},
                       {"policies", args.policies},
                       {"gamma", args.gamma},
                       {"discrepancy", spec_json(spec)}});

    const std::string schema = "ldisc.parity_sweep/1";
    std::string csv = csv_line({"schema", "perturbation", "value", "n_policies", "min", "mean", "max"});
    for (double v : grid) {
        ParityOptions opt;
        opt.gamma = args.gamma;
        (start ? opt.start_shift : opt.stay_prob) = v;
        const PomdpSource src = parity_check(opt);
        const auto policies = load_policies(args.policies, src.pomdp, output);
        double lo = std::numeric_limits<double>::infinity(), hi = 0.0, total = 0.0;
        for (const auto& [id, pi] : policies) {
            const double ld = lambda_discrepancy(src.pomdp, pi, spec);
            lo = std::min(lo, ld);
            hi = std::max(hi, ld);
            total += ld;
        }
        csv += csv_line({schema, args.perturbation, format_number(v), std::to_string(policies.size()),
                         format_number(lo), format_number(total / static_cast<double>(policies.size())),
                         format_number(hi)});
    }
    output.emit("parity_sweep.csv", schema, csv);
    output.finish();
    return kOk;
}

struct SampleCheckArgs {
    ModelArgs model;
    std::string policy = "uniform";
    std::string lambdas = "0,1";
    std::string norm = "occupancy_weighted_l2";
    std::string weighting = "discounted";
    std::size_t episodes = 100000;
    std::size_t horizon = 0;
    std::size_t replicates = 200;
    std::uint64_t seed = 0;
    std::string dump;
    std::string out_dir;
};

int cmd_sample_check(const SampleCheckArgs& args, std::ostream& out) {
    if (args.episodes == 0) throw UsageError("--episodes must be at least 1");
    Output output("sample-check", args.out_dir, out);
    const PomdpSource src = args.model.load(output);
    const DiscrepancySpec spec = make_spec(args.lambdas, args.norm);
    const auto policies = load_policies(args.policy, src.pomdp, output);
    if (policies.size() != 1) throw UsageError("sample-check takes a single policy");
    SampleCheckOptions opt;
    opt.episodes = args.episodes;
    opt.horizon = args.horizon;
    opt.seed = args.seed;
    opt.replicates = args.replicates;
    try {
        opt.weighting = visit_weighting_from_string(args.weighting);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    output.set_config({{"model", args.model.echo()},
                       {"policy", args.policy},
                       {"discrepancy", spec_json(spec)},
                       {"weighting", args.weighting},
                       {"episodes", args.episodes},
                       {"horizon", args.horizon},
                       {"replicates", args.replicates}});
    output.set_seeds({args.seed});

    const SampleCheckReport report = sample_check(src.pomdp, policies[0].second, spec, opt);
    json j = to_json(report);
    j["discrepancy"] = spec_json(spec);
    j["weighting"] = args.weighting;
    j["seed"] = args.seed;
    output.emit("sample_check.json", "ldisc.sample_check/1", j.dump(2) + "\n");
    if (!args.dump.empty()) {
        const auto trajs = simulate(src.pomdp, policies[0].second, args.episodes, report.horizon, args.seed);
        std::ofstream f(args.dump, std::ios::binary | std::ios::trunc);
        if (!f) throw std::ios_base::failure("cannot write '" + args.dump + "'");
        write_jsonl(f, trajs);
        if (!f) throw std::ios_base::failure("error writing '" + args.dump + "'");
    }
    output.finish();
    return kOk;
}

void add_out(CLI::App* app, std::string& dir) {
    app->add_option("--out", dir, "output directory (default: $LDISC_OUT_DIR, else stdout)");
}

void add_optim_flags(CLI::App* app, OptimizeArgs& a) {
    app->add_option("--n-policies", a.cfg.n_random_policies, "random policies in the search")->capture_default_str();
    app->add_option("--mem-steps", a.cfg.mem_steps, "memory Adam steps")->capture_default_str();
    app->add_option("--policy-steps", a.cfg.policy_steps, "policy Adam steps")->capture_default_str();
    app->add_option("--step-size", a.cfg.step_size, "memory step size")->capture_default_str();
    app->add_option("--policy-step-size", a.cfg.policy_step_size, "policy step size")->capture_default_str();
    app->add_option("--adam-beta1", a.cfg.adam.beta1)->capture_default_str();
    app->add_option("--adam-beta2", a.cfg.adam.beta2)->capture_default_str();
    app->add_option("--adam-eps", a.cfg.adam.eps)->capture_default_str();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Lambda-discrepancy toolkit for tabular POMDPs", "ldisc"};
    app.require_subcommand(1);
    app.set_version_flag("--version", LDISC_VERSION);

    ValidateArgs validate_args;
    auto* validate = app.add_subcommand("validate", "parse and check a POMDP file");
    validate->add_option("path", validate_args.path, "Cassandra .POMDP file");
    validate->add_option("--env", validate_args.env, "check a built-in environment instead");
    validate->add_flag("--json", validate_args.json_mode, "machine-readable report");

    SolveArgs solve_args;
    auto* solve = app.add_subcommand("solve", "closed-form Q^lambda tables for one policy");
    solve_args.model.add(solve, "tmaze");
    solve->add_option("--policy", solve_args.policy, "uniform | random:SEED | file:PATH")->capture_default_str();
    solve->add_option("--lambdas", solve_args.lambdas, "comma-separated lambdas")->capture_default_str();
    solve->add_option("--format", solve_args.format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    add_out(solve, solve_args.out_dir);

    DiscrepArgs discrep_args;
    auto* discrep = app.add_subcommand("discrep", "lambda-discrepancy for a set of policies");
    discrep_args.model.add(discrep, "tmaze");
    discrep->add_option("--policies", discrep_args.policies, "uniform | random:N:SEED | file:PATH")
        ->capture_default_str();
    discrep->add_option("--lambdas", discrep_args.lambdas, "lambda1,lambda2")->capture_default_str();
    discrep->add_option("--norm", discrep_args.norm)->capture_default_str();
    discrep->add_option("--format", discrep_args.format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    add_out(discrep, discrep_args.out_dir);

    SweepPoArgs sweep_args;
    auto* sweep = app.add_subcommand("sweep-po", "T-maze discrepancy while mixing in aliased observations");
    sweep->add_option("--patterns", sweep_args.patterns, "corridor,junction,both")->capture_default_str();
    sweep->add_option("--grid", sweep_args.grid, "start:stop:count or comma list")->capture_default_str();
    sweep->add_option("--corridor-len", sweep_args.corridor_len)->capture_default_str();
    sweep->add_option("--gamma", sweep_args.gamma)->capture_default_str();
    sweep->add_option("--lambdas", sweep_args.lambdas)->capture_default_str();
    sweep->add_option("--norm", sweep_args.norm)->capture_default_str();
    add_out(sweep, sweep_args.out_dir);

    OptimizeArgs opt_args;
    auto* optimize = app.add_subcommand("optimize-mem", "memory optimization with value improvement");
    opt_args.model.add(optimize, "tmaze");
    optimize->add_option("--n-mem", opt_args.n_mem, "comma-separated memory sizes")->capture_default_str();
    optimize->add_option("--seeds", opt_args.seeds, "e.g. 0..29 or 1,5,9")->capture_default_str();
    add_optim_flags(optimize, opt_args);
    optimize->add_option("--lambdas", opt_args.lambdas)->capture_default_str();
    optimize->add_option("--norm", opt_args.norm)->capture_default_str();
    optimize->add_flag("--pre-augment", opt_args.pre_augment,
                       "search policies after augmenting with the initial random memory");
    optimize->add_flag("--no-traces", opt_args.no_traces, "leave optimization traces out of the reports");
    add_out(optimize, opt_args.out_dir);

    ParitySweepArgs parity_args;
    auto* parity = app.add_subcommand("parity-sweep", "parity check discrepancy under perturbations");
    parity->add_option("--perturbation", parity_args.perturbation, "start-probs | stay-action")
        ->capture_default_str();
    parity->add_option("--grid", parity_args.grid, "start:stop:count or comma list");
    parity->add_option("--policies", parity_args.policies)->capture_default_str();
    parity->add_option("--lambdas", parity_args.lambdas)->capture_default_str();
    parity->add_option("--norm", parity_args.norm)->capture_default_str();
    parity->add_option("--gamma", parity_args.gamma)->capture_default_str();
    add_out(parity, parity_args.out_dir);

    SampleCheckArgs sample_args;
    auto* sample = app.add_subcommand("sample-check", "compare sampled and closed-form discrepancy");
    sample_args.model.add(sample, "tiger");
    sample->add_option("--policy", sample_args.policy, "uniform | random:SEED | file:PATH")->capture_default_str();
    sample->add_option("--lambdas", sample_args.lambdas)->capture_default_str();
    sample->add_option("--norm", sample_args.norm)->capture_default_str();
    sample->add_option("--weighting", sample_args.weighting, "discounted | undiscounted")->capture_default_str();
    sample->add_option("--episodes", sample_args.episodes)->capture_default_str();
    sample->add_option("--horizon", sample_args.horizon, "0 picks one from the truncation bound")
        ->capture_default_str();
    sample->add_option("--replicates", sample_args.replicates, "bootstrap replicates")->capture_default_str();
    sample->add_option("--seed", sample_args.seed)->capture_default_str();
    sample->add_option("--dump-trajectories", sample_args.dump, "write the episodes as JSON lines");
    add_out(sample, sample_args.out_dir);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*validate) {
            if (validate_args.path.empty() == validate_args.env.empty())
                throw UsageError("validate takes a path or --env");
            return cmd_validate(validate_args, out);
        }
        if (*solve) return cmd_solve(solve_args, out);
        if (*discrep) return cmd_discrep(discrep_args, out);
        if (*sweep) return cmd_sweep_po(sweep_args, out);
        if (*optimize) return cmd_optimize_mem(opt_args, out, err);
        if (*parity) return cmd_parity_sweep(parity_args, out);
        if (*sample) return cmd_sample_check(sample_args, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << "\n";
        return kUsage;
    } catch (const std::ios_base::failure& e) {
        err << "I/O error: " << e.what() << "\n";
        return kIoError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kDomainFailure;
    }
    return kUsage;
}

}  // namespace ldisc::cli
