#include "roattn/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace roattn::config {

namespace {

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) {
        return {};
    }
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument("trailing characters");
        }
        return d;
    } catch (const std::exception&) {
        throw std::runtime_error("bad numeric value for " + key + ": " + v);
    }
}

long long to_int(const std::string& v, const std::string& key) {
    try {
        std::size_t used = 0;
        const long long n = std::stoll(v, &used);
        if (used != v.size()) {
            throw std::invalid_argument("trailing characters");
        }
        return n;
    } catch (const std::exception&) {
        throw std::runtime_error("bad integer value for " + key + ": " + v);
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw std::runtime_error("bad boolean value for " + key + ": " + v);
}

std::vector<int> to_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) {
            continue;
        }
        out.push_back(static_cast<int>(to_int(item, key)));
    }
    if (out.empty()) {
        throw std::runtime_error("empty list for " + key);
    }
    return out;
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_list(const std::vector<int>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) {
            out += ",";
        }
        out += std::to_string(v[i]);
    }
    return out;
}

std::vector<int> first_n(int n, int total) {
    std::vector<int> out;
    for (int i = 0; i < std::min(n, total); ++i) {
        out.push_back(i);
    }
    return out;
}

std::vector<int> last_n(int n, int total) {
    std::vector<int> out;
    for (int i = std::max(0, total - n); i < total; ++i) {
        out.push_back(i);
    }
    return out;
}

}  // namespace

RunConfig default_config() {
    RunConfig cfg;
    cfg.sim.num_layers = 12;
    cfg.sim.num_heads = 2;
    cfg.sim.d_k = 8;
    cfg.sim.t_max = 512;
    cfg.sim.num_visual_tokens = 8;
    cfg.sim.seed = 42;
    cfg.sim.ro_layers = first_n(6, cfg.sim.num_layers);
    cfg.sim.tt_layers = last_n(8, cfg.sim.num_layers);
    finalize(cfg);
    return cfg;
}

void finalize(RunConfig& cfg) {
    cfg.sim.tt_routing.t_max = cfg.sim.t_max;
    geom::validate(cfg.axg);
    sim::validate(cfg.sim);
}

RunConfig parse_config(const std::string& text, const std::string& origin) {
    RunConfig cfg = default_config();
    bool saw_ro_layers = false;
    bool saw_tt_layers = false;
    bool saw_num_layers = false;

    std::string section;
    std::stringstream ss(text);
    std::string raw;
    std::size_t lineno = 0;
    while (std::getline(ss, raw)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            if (section != "geometry" && section != "ro_rpb" && section != "tt_prior" &&
                section != "attention_sim" && section != "paths" && section != "kernels") {
                throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                         ": unknown section [" + section + "]");
            }
            continue;
        }
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const std::string qkey = section + "." + key;

        if (section == "geometry") {
            if (key == "alpha") cfg.axg.alpha = to_double(value, qkey);
            else if (key == "beta") cfg.axg.beta = to_double(value, qkey);
            else if (key == "gamma") cfg.axg.gamma = to_double(value, qkey);
            else if (key == "max_bins") cfg.axg.max_bins = static_cast<int>(to_int(value, qkey));
            else if (key == "deskew_enabled") cfg.axg.deskew_enabled = to_bool(value, qkey);
            else if (key == "deskew_range_deg") cfg.axg.deskew_range_deg = to_double(value, qkey);
            else throw std::runtime_error(origin + ": unknown key " + qkey);
        } else if (section == "ro_rpb") {
            if (key == "num_buckets") cfg.sim.ro_buckets.num_buckets = static_cast<int>(to_int(value, qkey));
            else if (key == "exact_span") cfg.sim.ro_buckets.exact_span = static_cast<int>(to_int(value, qkey));
            else if (key == "max_distance") cfg.sim.ro_buckets.max_distance = static_cast<int>(to_int(value, qkey));
            else if (key == "gate_init_lo") cfg.sim.ro_gate_init_lo = to_double(value, qkey);
            else if (key == "gate_init_hi") cfg.sim.ro_gate_init_hi = to_double(value, qkey);
            else if (key == "init_scale") cfg.sim.ro_table_init_scale = to_double(value, qkey);
            else throw std::runtime_error(origin + ": unknown key " + qkey);
        } else if (section == "tt_prior") {
            if (key == "tolerance") cfg.sim.tt_routing.tolerance = to_double(value, qkey);
            else if (key == "bins") cfg.sim.tt_routing.bins = to_int_list(value, qkey);
            else if (key == "pool_k") cfg.sim.tt_routing.pool_k = static_cast<int>(to_int(value, qkey));
            else if (key == "gate_init_lo") cfg.sim.tt_gate_init_lo = to_double(value, qkey);
            else if (key == "gate_init_hi") cfg.sim.tt_gate_init_hi = to_double(value, qkey);
            else throw std::runtime_error(origin + ": unknown key " + qkey);
        } else if (section == "attention_sim") {
            if (key == "num_layers") {
                cfg.sim.num_layers = static_cast<int>(to_int(value, qkey));
                saw_num_layers = true;
            } else if (key == "num_heads") cfg.sim.num_heads = static_cast<int>(to_int(value, qkey));
            else if (key == "d_k") cfg.sim.d_k = static_cast<int>(to_int(value, qkey));
            else if (key == "t_max") cfg.sim.t_max = static_cast<int>(to_int(value, qkey));
            else if (key == "num_visual_tokens") cfg.sim.num_visual_tokens = static_cast<int>(to_int(value, qkey));
            else if (key == "seed") cfg.sim.seed = static_cast<std::uint64_t>(to_int(value, qkey));
            else if (key == "ro_layers") {
                cfg.sim.ro_layers = to_int_list(value, qkey);
                saw_ro_layers = true;
            } else if (key == "tt_layers") {
                cfg.sim.tt_layers = to_int_list(value, qkey);
                saw_tt_layers = true;
            } else if (key == "ro_enabled") cfg.sim.ro_enabled = to_bool(value, qkey);
            else if (key == "tt_enabled") cfg.sim.tt_enabled = to_bool(value, qkey);
            else if (key == "gate_mode") {
                if (value == "sigmoid") cfg.sim.gate_mode = rorpb::GateMode::sigmoid;
                else if (value == "raw") cfg.sim.gate_mode = rorpb::GateMode::raw;
                else throw std::runtime_error("bad gate_mode: " + value);
            } else throw std::runtime_error(origin + ": unknown key " + qkey);
        } else if (section == "paths") {
            if (key == "input") cfg.input_path = value;
            else if (key == "out_dir") cfg.out_dir = value;
            else throw std::runtime_error(origin + ": unknown key " + qkey);
        } else if (section == "kernels") {
            if (key == "backend") cfg.kernel_backend = value;
            else throw std::runtime_error(origin + ": unknown key " + qkey);
        } else {
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": key outside any section: " + key);
        }
    }

    // layer placements follow the layer count unless given explicitly
    if (saw_num_layers && !saw_ro_layers) {
        cfg.sim.ro_layers = first_n(6, cfg.sim.num_layers);
    }
    if (saw_num_layers && !saw_tt_layers) {
        cfg.sim.tt_layers = last_n(8, cfg.sim.num_layers);
    }
    finalize(cfg);
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config: " + path);
    }
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

std::string serialize_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "[geometry]\n";
    out << "alpha = " << fmt_double(cfg.axg.alpha) << "\n";
    out << "beta = " << fmt_double(cfg.axg.beta) << "\n";
    out << "gamma = " << fmt_double(cfg.axg.gamma) << "\n";
    out << "max_bins = " << cfg.axg.max_bins << "\n";
    out << "deskew_enabled = " << (cfg.axg.deskew_enabled ? "true" : "false") << "\n";
    out << "deskew_range_deg = " << fmt_double(cfg.axg.deskew_range_deg) << "\n";
    out << "\n[ro_rpb]\n";
    out << "num_buckets = " << cfg.sim.ro_buckets.num_buckets << "\n";
    out << "exact_span = " << cfg.sim.ro_buckets.exact_span << "\n";
    out << "max_distance = " << cfg.sim.ro_buckets.max_distance << "\n";
    out << "gate_init_lo = " << fmt_double(cfg.sim.ro_gate_init_lo) << "\n";
    out << "gate_init_hi = " << fmt_double(cfg.sim.ro_gate_init_hi) << "\n";
    out << "init_scale = " << fmt_double(cfg.sim.ro_table_init_scale) << "\n";
    out << "\n[tt_prior]\n";
    out << "tolerance = " << fmt_double(cfg.sim.tt_routing.tolerance) << "\n";
    out << "bins = " << fmt_list(cfg.sim.tt_routing.bins) << "\n";
    out << "pool_k = " << cfg.sim.tt_routing.pool_k << "\n";
    out << "gate_init_lo = " << fmt_double(cfg.sim.tt_gate_init_lo) << "\n";
    out << "gate_init_hi = " << fmt_double(cfg.sim.tt_gate_init_hi) << "\n";
    out << "\n[attention_sim]\n";
    out << "num_layers = " << cfg.sim.num_layers << "\n";
    out << "num_heads = " << cfg.sim.num_heads << "\n";
    out << "d_k = " << cfg.sim.d_k << "\n";
    out << "t_max = " << cfg.sim.t_max << "\n";
    out << "num_visual_tokens = " << cfg.sim.num_visual_tokens << "\n";
    out << "seed = " << cfg.sim.seed << "\n";
    out << "ro_layers = " << fmt_list(cfg.sim.ro_layers) << "\n";
    out << "tt_layers = " << fmt_list(cfg.sim.tt_layers) << "\n";
    out << "ro_enabled = " << (cfg.sim.ro_enabled ? "true" : "false") << "\n";
    out << "tt_enabled = " << (cfg.sim.tt_enabled ? "true" : "false") << "\n";
    out << "gate_mode = " << (cfg.sim.gate_mode == rorpb::GateMode::sigmoid ? "sigmoid" : "raw")
        << "\n";
    out << "\n[paths]\n";
    out << "input = " << cfg.input_path << "\n";
    out << "out_dir = " << cfg.out_dir << "\n";
    out << "\n[kernels]\n";
    out << "backend = " << cfg.kernel_backend << "\n";
    return out.str();
}

void save_config(const RunConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot write config: " + path);
    }
    out << serialize_config(cfg);
}

}  // namespace roattn::config
