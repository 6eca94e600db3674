#include "ipfcad/config.hpp"

#include <charconv>
#include <cstdlib>
#include <functional>
#include <map>

namespace ipfcad {

namespace {

std::string trim(const std::string& s) {
    const size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        raise(ErrorCode::InvalidArgument, "config key '" + key + "': bad numeric value '" + value + "'");
    return out;
}

int64_t parse_int(const std::string& key, const std::string& value) {
    int64_t out = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        raise(ErrorCode::InvalidArgument, "config key '" + key + "': bad integer value '" + value + "'");
    return out;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
    uint64_t out = 0;
    const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        raise(ErrorCode::InvalidArgument, "config key '" + key + "': bad unsigned value '" + value + "'");
    return out;
}

bool parse_flag(const std::string& key, const std::string& value) {
    if (value == "1" || value == "true") return true;
    if (value == "0" || value == "false") return false;
    raise(ErrorCode::InvalidArgument, "config key '" + key + "': expected 0/1, got '" + value + "'");
}

}  // namespace

void PipelineConfig::validate() const {
    blocking.validate();
    segmentation.validate();
    training.validate();
    make_architecture();  // rejects unparseable or chain-broken stacks
    if (window_width_hu <= 0) raise(ErrorCode::InvalidArgument, "window_width_hu must be positive");
}

PipelineConfig parse_config(const std::string& text) {
    PipelineConfig cfg;
    const std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters = {
        {"roi", [&](auto& k, auto& v) { cfg.blocking.roi_px = static_cast<int>(parse_int(k, v)); }},
        {"padding", [&](auto& k, auto& v) { cfg.blocking.padding_px = static_cast<int>(parse_int(k, v)); }},
        {"min_labeled_fraction",
         [&](auto& k, auto& v) { cfg.blocking.min_labeled_fraction = parse_double(k, v); }},
        {"balance_ratio_minority",
         [&](auto& k, auto& v) { cfg.blocking.balance_ratios[0] = parse_double(k, v); }},
        {"balance_ratio_other",
         [&](auto& k, auto& v) { cfg.blocking.balance_ratios[1] = parse_double(k, v); }},
        {"balance_ratio_healthy",
         [&](auto& k, auto& v) { cfg.blocking.balance_ratios[2] = parse_double(k, v); }},
        {"air_threshold_hu",
         [&](auto& k, auto& v) { cfg.segmentation.air_threshold_hu = static_cast<int32_t>(parse_int(k, v)); }},
        {"min_object_area",
         [&](auto& k, auto& v) { cfg.segmentation.min_object_area_px = static_cast<int32_t>(parse_int(k, v)); }},
        {"fill_holes", [&](auto& k, auto& v) { cfg.segmentation.fill_holes = parse_flag(k, v); }},
        {"sentinel_hu",
         [&](auto& k, auto& v) { cfg.segmentation.excluded_sentinel_hu = static_cast<int32_t>(parse_int(k, v)); }},
        {"window_center_hu",
         [&](auto& k, auto& v) { cfg.window_center_hu = static_cast<int32_t>(parse_int(k, v)); }},
        {"window_width_hu",
         [&](auto& k, auto& v) { cfg.window_width_hu = static_cast<int32_t>(parse_int(k, v)); }},
        {"learning_rate", [&](auto& k, auto& v) { cfg.training.learning_rate = parse_double(k, v); }},
        {"momentum", [&](auto& k, auto& v) { cfg.training.momentum = parse_double(k, v); }},
        {"batch_size", [&](auto& k, auto& v) { cfg.training.batch_size = static_cast<int>(parse_int(k, v)); }},
        {"epochs", [&](auto& k, auto& v) { cfg.training.epochs = static_cast<int>(parse_int(k, v)); }},
        {"dropout_p", [&](auto& k, auto& v) { cfg.training.dropout_p = parse_double(k, v); }},
        {"validation_fraction",
         [&](auto& k, auto& v) { cfg.training.validation_fraction = parse_double(k, v); }},
        {"seed", [&](auto& k, auto& v) { cfg.seed = parse_u64(k, v); }},
        {"architecture", [&](auto&, auto& v) { cfg.architecture = v; }},
    };

    size_t pos = 0;
    int line_no = 0;
    while (pos < text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        std::string line = trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            raise(ErrorCode::InvalidArgument,
                  "config line " + std::to_string(line_no) + ": expected key=value");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        const auto it = setters.find(key);
        if (it == setters.end())
            raise(ErrorCode::InvalidArgument, "unknown config key '" + key + "'");
        it->second(key, value);
    }

    // One seed feeds both the balancing and training streams.
    cfg.blocking.rng_seed = cfg.seed;
    cfg.training.rng_seed = cfg.seed;
    cfg.validate();
    return cfg;
}

std::string dump_config(const PipelineConfig& config) {
    std::string out = "# ipfcad pipeline configuration\n";
    out += "roi=" + std::to_string(config.blocking.roi_px) + '\n';
    out += "padding=" + std::to_string(config.blocking.padding_px) + '\n';
    out += "min_labeled_fraction=" + format_double(config.blocking.min_labeled_fraction) + '\n';
    out += "balance_ratio_minority=" + format_double(config.blocking.balance_ratios[0]) + '\n';
    out += "balance_ratio_other=" + format_double(config.blocking.balance_ratios[1]) + '\n';
    out += "balance_ratio_healthy=" + format_double(config.blocking.balance_ratios[2]) + '\n';
    out += "air_threshold_hu=" + std::to_string(config.segmentation.air_threshold_hu) + '\n';
    out += "min_object_area=" + std::to_string(config.segmentation.min_object_area_px) + '\n';
    out += "fill_holes=" + std::string(config.segmentation.fill_holes ? "1" : "0") + '\n';
    out += "sentinel_hu=" + std::to_string(config.segmentation.excluded_sentinel_hu) + '\n';
    out += "window_center_hu=" + std::to_string(config.window_center_hu) + '\n';
    out += "window_width_hu=" + std::to_string(config.window_width_hu) + '\n';
    out += "learning_rate=" + format_double(config.training.learning_rate) + '\n';
    out += "momentum=" + format_double(config.training.momentum) + '\n';
    out += "batch_size=" + std::to_string(config.training.batch_size) + '\n';
    out += "epochs=" + std::to_string(config.training.epochs) + '\n';
    out += "dropout_p=" + format_double(config.training.dropout_p) + '\n';
    out += "validation_fraction=" + format_double(config.training.validation_fraction) + '\n';
    out += "seed=" + std::to_string(config.seed) + '\n';
    out += "architecture=" + config.architecture + '\n';
    return out;
}

}  // namespace ipfcad
