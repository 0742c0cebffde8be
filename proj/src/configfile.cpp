#include "prism/configfile.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace prism::configfile {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    std::size_t e = s.find_last_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\''))) {
        return s.substr(1, s.size() - 2);
    }
    return s;
}

}  // namespace

double Value::as_double() const {
    try {
        return std::stod(raw);
    } catch (const std::exception&) {
        throw std::runtime_error("config value '" + raw + "' is not a number");
    }
}

long long Value::as_int() const {
    try {
        return std::stoll(raw);
    } catch (const std::exception&) {
        throw std::runtime_error("config value '" + raw + "' is not an integer");
    }
}

bool Value::as_bool() const {
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    throw std::runtime_error("config value '" + raw + "' is not a boolean");
}

std::vector<double> Value::as_double_array() const {
    std::vector<double> out;
    if (!is_array) {
        out.push_back(as_double());
        return out;
    }
    for (const auto& item : array) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw std::runtime_error("config array item '" + item +
                                     "' is not a number");
        }
    }
    return out;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream file(path);
    if (!file) {
        throw std::invalid_argument("cannot open config file: " + path);
    }
    std::ostringstream ss;
    ss << file.rdbuf();
    return parse_string(ss.str());
}

Config Config::parse_string(const std::string& text) {
    Config config;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // Strip comments outside quotes.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line = line.substr(0, i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;

        if (line.front() == '[') {
            if (line.back() != ']') {
                throw std::runtime_error("config line " + std::to_string(line_no) +
                                         ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }

        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        std::string value_text = trim(line.substr(eq + 1));
        if (key.empty() || value_text.empty()) {
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": empty key or value");
        }

        Value value;
        if (value_text.front() == '[') {
            if (value_text.back() != ']') {
                throw std::runtime_error("config line " + std::to_string(line_no) +
                                         ": unterminated array");
            }
            value.is_array = true;
            std::string body = value_text.substr(1, value_text.size() - 2);
            std::istringstream items(body);
            std::string item;
            while (std::getline(items, item, ',')) {
                item = trim(item);
                if (!item.empty()) value.array.push_back(unquote(item));
            }
            value.raw = value_text;
        } else {
            value.raw = unquote(value_text);
        }

        const std::string dotted = section.empty() ? key : section + "." + key;
        config.values_[dotted] = std::move(value);
    }
    return config;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

const Value& Config::at(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        throw std::runtime_error("config key not found: " + key);
    }
    return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? at(key).as_double() : fallback;
}

long long Config::get_int(const std::string& key, long long fallback) const {
    return has(key) ? at(key).as_int() : fallback;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    return has(key) ? at(key).as_bool() : fallback;
}

std::string Config::get_string(const std::string& key,
                               const std::string& fallback) const {
    return has(key) ? at(key).as_string() : fallback;
}

pipeline::RunConfig load_run_config(const Config& config) {
    pipeline::RunConfig run;
    run.k_proposers = static_cast<int>(config.get_int("run.k", 3));
    run.r_reviewers = static_cast<int>(config.get_int("run.r", 1));
    run.s_synth_iters = static_cast<int>(config.get_int("run.s", 3));
    run.aggregator =
        pipeline::aggregator_from_string(config.get_string("run.aggregator", "prism"));
    run.backend =
        pipeline::backend_from_string(config.get_string("run.backend", "simulated"));
    run.proposer_temperature = config.get_double("run.proposer_temperature", 0.7);
    run.synthesis_temperature = config.get_double("run.synthesis_temperature", 0.0);
    run.seed.root_seed = static_cast<std::uint64_t>(config.get_int("run.seed", 42));

    const double p = config.get_double("world.p", 0.4);
    const double rho = config.get_double("world.rho", 0.0);
    run.world.population =
        simworld::AgentPopulation::common(run.k_proposers, p, rho);
    run.world.task.per_problem_p = config.get_double("world.task_p", p);
    run.world.task.correct_variants =
        static_cast<int>(config.get_int("world.correct_variants", 1));
    run.world.task.incorrect_variants =
        static_cast<int>(config.get_int("world.incorrect_variants", 4));
    run.world.reviewer.error_rate = config.get_double("world.reviewer_error", 0.2);
    run.world.reviewer.count_reviewers = run.r_reviewers;
    run.world.synth_success = config.get_double("world.synth_success", -1.0);
    run.world.synth_faithful = config.get_bool("world.synth_faithful", true);
    run.world.selection_uses_reports =
        config.get_bool("world.selection_uses_reports", true);
    run.world.has_executor = config.get_bool("world.has_executor", true);

    run.costs.c_prop = config.get_int("costs.prop", 800);
    run.costs.c_rev = config.get_int("costs.rev", 400);
    run.costs.c_syn = config.get_int("costs.syn", 1200);

    // Role labels/instructions can be overridden one by one.
    auto roles = llm::default_roles();
    for (auto& role : roles) {
        std::string key = "roles." + role.label;
        for (auto& c : key) c = static_cast<char>(std::tolower(c));
        if (config.has(key)) role.instruction = config.at(key).as_string();
    }
    run.roles = std::move(roles);
    if (run.backend != pipeline::Backend::kSimulated &&
        static_cast<int>(run.roles.size()) != run.k_proposers) {
        // Chat backends need one role per proposer; pad with generic roles.
        while (static_cast<int>(run.roles.size()) < run.k_proposers) {
            const auto n = std::to_string(run.roles.size() + 1);
            run.roles.push_back({"Generalist" + n, "Solve the task carefully."});
        }
        run.roles.resize(static_cast<std::size_t>(run.k_proposers));
    }
    return run;
}

montecarlo::SweepGrid load_sweep_grid(const Config& config) {
    montecarlo::SweepGrid grid;
    grid.trials_per_cell = config.get_int("sweep.trials", 100000);
    for (const char* axis : {"K", "R", "S", "p", "eps0", "rho", "M", "synth"}) {
        const std::string key = std::string("sweep.") + axis;
        if (config.has(key)) {
            grid.axes.emplace_back(axis, config.at(key).as_double_array());
        }
    }
    return grid;
}

}  // namespace prism::configfile
