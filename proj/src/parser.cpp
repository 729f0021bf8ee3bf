#include "ldisc/parser.hpp"

#include "ldisc/errors.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <unordered_map>

namespace ldisc {

namespace {

constexpr double kObservationActionTol = 1e-9;
constexpr double kAbsorbingTol = 1e-12;

struct Token {
    std::string text;
    std::size_t line;
};

std::vector<Token> tokenize(std::string_view text) {
    std::vector<Token> out;
    std::size_t line = 1;
    std::size_t i = 0;
    while (i < text.size()) {
        const char ch = text[i];
        if (ch == '\n') {
            ++line;
            ++i;
        } else if (ch == '#') {
            while (i < text.size() && text[i] != '\n') ++i;
        } else if (std::isspace(static_cast<unsigned char>(ch))) {
            ++i;
        } else if (ch == ':') {
            out.push_back({":", line});
            ++i;
        } else {
            std::size_t j = i;
            while (j < text.size() && text[j] != ':' && text[j] != '#' &&
                   !std::isspace(static_cast<unsigned char>(text[j])))
                ++j;
            out.push_back({std::string(text.substr(i, j - i)), line});
            i = j;
        }
    }
    return out;
}

bool is_keyword(const std::string& t) {
    return t == "discount" || t == "values" || t == "states" || t == "actions" ||
           t == "observations" || t == "start" || t == "T" || t == "O" || t == "R";
}

std::optional<double> to_number(const std::string& t) {
    if (t.empty()) return std::nullopt;
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (end != t.c_str() + t.size()) return std::nullopt;
    return v;
}

std::optional<std::size_t> to_count(const std::string& t) {
    if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
        return std::nullopt;
    return static_cast<std::size_t>(std::stoull(t));
}

class Parser {
public:
    explicit Parser(std::string_view text) : tokens_(tokenize(text)) {}

    PomdpSource run(std::string name);

private:
    // token stream
    bool at_end() const { return pos_ >= tokens_.size(); }
    const Token& peek(std::size_t ahead = 0) const { return tokens_[pos_ + ahead]; }
    bool peek_is(const std::string& t, std::size_t ahead = 0) const {
        return pos_ + ahead < tokens_.size() && tokens_[pos_ + ahead].text == t;
    }
    std::size_t current_line() const {
        if (tokens_.empty()) return 1;
        return at_end() ? tokens_.back().line : peek().line;
    }
    [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, current_line()); }
    Token next() {
        if (at_end()) fail("unexpected end of file");
        return tokens_[pos_++];
    }
    void expect_colon() {
        if (at_end() || peek().text != ":") fail("expected ':'");
        ++pos_;
    }
    // True when the next token begins a new top-level entry.
    bool at_entry() const {
        return !at_end() && is_keyword(peek().text) && (peek_is(":", 1) || peek().text == "start");
    }
    double number() {
        const Token t = next();
        const auto v = to_number(t.text);
        if (!v) throw ParseError("expected a number, got '" + t.text + "'", t.line);
        return *v;
    }
    std::vector<double> numbers(std::size_t n) {
        std::vector<double> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(number());
        return out;
    }

    void parse_names(std::vector<std::string>& names, const char* what);
    std::vector<std::size_t> resolve(const Token& t, const std::vector<std::string>& names,
                                     const char* what) const;
    std::vector<std::size_t> spec(const std::vector<std::string>& names, const char* what) {
        const Token t = next();
        return resolve(t, names, what);
    }
    void require_dims(const char* entry) const {
        if (states_.empty() || actions_.empty() || obs_.empty())
            fail(std::string(entry) + " entry before states, actions, and observations are declared");
    }

    void parse_start();
    void parse_transition();
    void parse_observation();
    void parse_reward();

    std::size_t S() const { return states_.size(); }
    std::size_t A() const { return actions_.size(); }
    std::size_t O() const { return obs_.size(); }
    double& t_at(std::size_t a, std::size_t s, std::size_t s2) { return T_[(a * S() + s) * S() + s2]; }
    double& o_at(std::size_t a, std::size_t s2, std::size_t o) { return O_[(a * S() + s2) * O() + o]; }
    double& r_at(std::size_t a, std::size_t s, std::size_t s2, std::size_t o) {
        return R_[((a * S() + s) * S() + s2) * O() + o];
    }
    void allocate() {
        if (!T_.empty() || S() == 0 || A() == 0 || O() == 0) return;
        T_.assign(A() * S() * S(), 0.0);
        O_.assign(A() * S() * O(), 0.0);
        R_.assign(A() * S() * S() * O(), 0.0);
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;

    std::optional<double> discount_;
    std::vector<std::string> states_, actions_, obs_;
    std::optional<std::vector<double>> start_;
    std::vector<double> T_, O_, R_;
};

void Parser::parse_names(std::vector<std::string>& names, const char* what) {
    if (!names.empty()) fail(std::string("duplicate ") + what + " declaration");
    std::vector<std::string> list;
    while (!at_end() && !at_entry()) list.push_back(next().text);
    if (list.empty()) fail(std::string("empty ") + what + " declaration");
    if (list.size() == 1) {
        if (auto n = to_count(list.front())) {
            if (*n == 0) fail(std::string("zero ") + what);
            for (std::size_t i = 0; i < *n; ++i) names.push_back(std::to_string(i));
            return;
        }
    }
    names = std::move(list);
}

std::vector<std::size_t> Parser::resolve(const Token& t, const std::vector<std::string>& names,
                                         const char* what) const {
    std::vector<std::size_t> out;
    if (t.text == "*") {
        for (std::size_t i = 0; i < names.size(); ++i) out.push_back(i);
        return out;
    }
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == t.text) return {i};
    if (auto n = to_count(t.text)) {
        if (*n >= names.size())
            throw ParseError(std::string(what) + " index " + t.text + " out of range", t.line);
        return {*n};
    }
    throw ParseError(std::string("unknown ") + what + " '" + t.text + "'", t.line);
}

void Parser::parse_start() {
    require_dims("start");
    if (peek_is("include") || peek_is("exclude")) fail("start include/exclude is not supported");
    expect_colon();
    if (peek_is("uniform")) {
        ++pos_;
        start_ = std::vector<double>(S(), 1.0 / static_cast<double>(S()));
        return;
    }
    if (!at_end() && !to_number(peek().text)) {
        const Token t = next();
        const auto idx = resolve(t, states_, "state");
        std::vector<double> v(S(), 0.0);
        for (auto i : idx) v[i] = 1.0 / static_cast<double>(idx.size());
        start_ = std::move(v);
        return;
    }
    std::vector<double> v;
    while (!at_end() && !at_entry()) v.push_back(number());
    if (v.size() != S())
        fail("start distribution has " + std::to_string(v.size()) + " entries, expected " +
             std::to_string(S()));
    start_ = std::move(v);
}

void Parser::parse_transition() {
    require_dims("T");
    allocate();
    expect_colon();
    const auto as = spec(actions_, "action");
    if (peek_is(":")) {
        ++pos_;
        const auto ss = spec(states_, "state");
        if (peek_is(":")) {
            ++pos_;
            const auto s2s = spec(states_, "state");
            const double v = number();
            for (auto a : as) for (auto s : ss) for (auto s2 : s2s) t_at(a, s, s2) = v;
            return;
        }
        std::vector<double> row;
        if (peek_is("uniform")) {
            ++pos_;
            row.assign(S(), 1.0 / static_cast<double>(S()));
        } else {
            row = numbers(S());
        }
        for (auto a : as) for (auto s : ss) for (std::size_t s2 = 0; s2 < S(); ++s2) t_at(a, s, s2) = row[s2];
        return;
    }
    if (peek_is("uniform") || peek_is("identity")) {
        const bool identity = next().text == "identity";
        for (auto a : as)
            for (std::size_t s = 0; s < S(); ++s)
                for (std::size_t s2 = 0; s2 < S(); ++s2)
                    t_at(a, s, s2) = identity ? (s == s2 ? 1.0 : 0.0) : 1.0 / static_cast<double>(S());
        return;
    }
    const auto m = numbers(S() * S());
    for (auto a : as)
        for (std::size_t s = 0; s < S(); ++s)
            for (std::size_t s2 = 0; s2 < S(); ++s2) t_at(a, s, s2) = m[s * S() + s2];
}

void Parser::parse_observation() {
    require_dims("O");
    allocate();
    expect_colon();
    const auto as = spec(actions_, "action");
    if (peek_is(":")) {
        ++pos_;
        const auto ss = spec(states_, "state");
        if (peek_is(":")) {
            ++pos_;
            const auto os = spec(obs_, "observation");
            const double v = number();
            for (auto a : as) for (auto s : ss) for (auto o : os) o_at(a, s, o) = v;
            return;
        }
        std::vector<double> row;
        if (peek_is("uniform")) {
            ++pos_;
            row.assign(O(), 1.0 / static_cast<double>(O()));
        } else {
            row = numbers(O());
        }
        for (auto a : as) for (auto s : ss) for (std::size_t o = 0; o < O(); ++o) o_at(a, s, o) = row[o];
        return;
    }
    if (peek_is("uniform")) {
        ++pos_;
        for (auto a : as)
            for (std::size_t s = 0; s < S(); ++s)
                for (std::size_t o = 0; o < O(); ++o) o_at(a, s, o) = 1.0 / static_cast<double>(O());
        return;
    }
    if (peek_is("identity")) {
        if (S() != O()) fail("identity observation matrix needs as many observations as states");
        ++pos_;
        for (auto a : as)
            for (std::size_t s = 0; s < S(); ++s)
                for (std::size_t o = 0; o < O(); ++o) o_at(a, s, o) = s == o ? 1.0 : 0.0;
        return;
    }
    const auto m = numbers(S() * O());
    for (auto a : as)
        for (std::size_t s = 0; s < S(); ++s)
            for (std::size_t o = 0; o < O(); ++o) o_at(a, s, o) = m[s * O() + o];
}

void Parser::parse_reward() {
    require_dims("R");
    allocate();
    expect_colon();
    const auto as = spec(actions_, "action");
    expect_colon();
    const auto ss = spec(states_, "state");
    if (peek_is(":")) {
        ++pos_;
        const auto s2s = spec(states_, "state");
        if (peek_is(":")) {
            ++pos_;
            const auto os = spec(obs_, "observation");
            const double v = number();
            for (auto a : as) for (auto s : ss) for (auto s2 : s2s) for (auto o : os) r_at(a, s, s2, o) = v;
            return;
        }
        const auto row = numbers(O());
        for (auto a : as) for (auto s : ss) for (auto s2 : s2s)
            for (std::size_t o = 0; o < O(); ++o) r_at(a, s, s2, o) = row[o];
        return;
    }
    const auto m = numbers(S() * O());
    for (auto a : as) for (auto s : ss)
        for (std::size_t s2 = 0; s2 < S(); ++s2)
            for (std::size_t o = 0; o < O(); ++o) r_at(a, s, s2, o) = m[s2 * O() + o];
}

PomdpSource Parser::run(std::string name) {
    while (!at_end()) {
        const Token head = next();
        if (head.text == "discount") {
            expect_colon();
            discount_ = number();
        } else if (head.text == "values") {
            expect_colon();
            const Token v = next();
            if (v.text == "cost") throw Unsupported("values: cost is not supported");
            if (v.text != "reward") throw ParseError("values must be 'reward' or 'cost'", v.line);
        } else if (head.text == "states") {
            expect_colon();
            parse_names(states_, "states");
        } else if (head.text == "actions") {
            expect_colon();
            parse_names(actions_, "actions");
        } else if (head.text == "observations") {
            expect_colon();
            parse_names(obs_, "observations");
        } else if (head.text == "start") {
            parse_start();
        } else if (head.text == "T") {
            parse_transition();
        } else if (head.text == "O") {
            parse_observation();
        } else if (head.text == "R") {
            parse_reward();
        } else {
            throw ParseError("unexpected token '" + head.text + "'", head.line);
        }
    }
    if (!discount_) fail("missing discount");
    require_dims("end of file:");
    allocate();

    const std::size_t nS = S(), nA = A(), nO = O();
    Matrix phi(static_cast<Eigen::Index>(nS), static_cast<Eigen::Index>(nO));
    for (std::size_t s = 0; s < nS; ++s) {
        for (std::size_t o = 0; o < nO; ++o) {
            const double ref = o_at(0, s, o);
            for (std::size_t a = 1; a < nA; ++a) {
                if (std::abs(o_at(a, s, o) - ref) > kObservationActionTol) {
                    throw ActionDependentObservations(
                        "observation probability O(" + obs_[o] + " | " + actions_[a] + ", " +
                        states_[s] + ") differs from the value under action " + actions_[0]);
                }
            }
            phi(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(o)) = ref;
        }
    }

    Matrix T(static_cast<Eigen::Index>(nS * nA), static_cast<Eigen::Index>(nS));
    Matrix R = Matrix::Zero(static_cast<Eigen::Index>(nS), static_cast<Eigen::Index>(nA));
    for (std::size_t s = 0; s < nS; ++s) {
        for (std::size_t a = 0; a < nA; ++a) {
            double expected = 0.0;
            bool constant = true;
            for (std::size_t s2 = 0; s2 < nS; ++s2) {
                const double t = t_at(a, s, s2);
                T(static_cast<Eigen::Index>(s * nA + a), static_cast<Eigen::Index>(s2)) = t;
                for (std::size_t o = 0; o < nO; ++o) constant = constant && r_at(a, s, s2, o) == r_at(a, s, 0, 0);
                if (t == 0.0) continue;
                for (std::size_t o = 0; o < nO; ++o) expected += t * o_at(a, s2, o) * r_at(a, s, s2, o);
            }
            // a reward that ignores s' and o is kept exactly, so writing and
            // re-reading a file does not drift by rounding
            R(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = constant ? r_at(a, s, 0, 0) : expected;
        }
    }

    std::vector<bool> terminal(nS, false);
    for (std::size_t s = 0; s < nS; ++s) {
        bool absorbing = true;
        for (std::size_t a = 0; a < nA && absorbing; ++a) {
            if (std::abs(t_at(a, s, s) - 1.0) > kAbsorbingTol) absorbing = false;
            if (R(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) != 0.0) absorbing = false;
        }
        terminal[s] = absorbing;
    }

    Vector p0(static_cast<Eigen::Index>(nS));
    if (start_) {
        for (std::size_t s = 0; s < nS; ++s) p0(static_cast<Eigen::Index>(s)) = (*start_)[s];
    } else {
        p0.setConstant(1.0 / static_cast<double>(nS));
    }

    PomdpSource src;
    src.name = std::move(name);
    src.origin = Origin::File;
    src.pomdp = Pomdp(std::move(T), std::move(R), std::move(phi), std::move(p0), *discount_,
                      std::move(terminal));
    src.state_names = states_;
    src.action_names = actions_;
    src.obs_names = obs_;
    return src;
}

std::string sanitize(const std::string& name) {
    std::string out = name;
    for (char& c : out)
        if (c == ':' || c == '#' || std::isspace(static_cast<unsigned char>(c))) c = '_';
    if (out.empty()) out = "_";
    return out;
}

}  // namespace

PomdpSource parse_pomdp(std::string_view text, std::string name) {
    return Parser(text).run(std::move(name));
}

PomdpSource load_pomdp_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw std::ios_base::failure("cannot read " + path);
    return parse_pomdp(buf.str(), path);
}

std::string to_cassandra(const PomdpSource& src) {
    const Pomdp& p = src.pomdp;
    const std::size_t S = p.n_states(), A = p.n_actions(), O = p.n_obs();
    const auto names_or_index = [](const std::vector<std::string>& names, std::size_t n) {
        std::vector<std::string> out;
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(i < names.size() ? sanitize(names[i]) : "x" + std::to_string(i));
        return out;
    };
    const auto states = names_or_index(src.state_names, S);
    const auto actions = names_or_index(src.action_names, A);
    const auto obs = names_or_index(src.obs_names, O);

    std::ostringstream os;
    os << std::setprecision(17);
    os << "# " << src.name << "\n";
    os << "discount: " << p.gamma() << "\nvalues: reward\n";
    const auto list = [&os](const char* key, const std::vector<std::string>& names) {
        os << key << ":";
        for (const auto& n : names) os << ' ' << n;
        os << '\n';
    };
    list("states", states);
    list("actions", actions);
    list("observations", obs);
    os << "start:";
    for (std::size_t s = 0; s < S; ++s) os << ' ' << p.p0()(static_cast<Eigen::Index>(s));
    os << "\n\n";
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t s = 0; s < S; ++s) {
            os << "T: " << actions[a] << " : " << states[s] << "\n";
            for (std::size_t s2 = 0; s2 < S; ++s2) os << (s2 ? " " : "") << p.T(s, a, s2);
            os << '\n';
        }
    os << '\n';
    for (std::size_t s = 0; s < S; ++s) {
        os << "O: * : " << states[s] << "\n";
        for (std::size_t o = 0; o < O; ++o)
            os << (o ? " " : "") << p.phi()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(o));
        os << '\n';
    }
    os << '\n';
    for (std::size_t a = 0; a < A; ++a)
        for (std::size_t s = 0; s < S; ++s) {
            const double r = p.rewards()(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a));
            if (r != 0.0) os << "R: " << actions[a] << " : " << states[s] << " : * : * " << r << '\n';
        }
    return os.str();
}

}  // namespace ldisc
