#include "io/config_file.hpp"

#include "rganet/engine/serialize.hpp"

#include <fstream>
#include <sstream>

namespace rganet {
namespace io {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

} // namespace

KvMap parse_kv_text(const std::string& text) {
    KvMap kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw IoError("config line " + std::to_string(lineno) + " is not 'key = value': " +
                          trim(line));
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

KvMap parse_kv_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_kv_text(ss.str());
}

std::string kv_get(const KvMap& kv, const std::string& key, const std::string& fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : it->second;
}

long kv_get_int(const KvMap& kv, const std::string& key, long fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stol(it->second);
    } catch (const std::exception&) {
        throw IoError("config key '" + key + "' is not an integer: " + it->second);
    }
}

double kv_get_double(const KvMap& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stod(it->second);
    } catch (const std::exception&) {
        throw IoError("config key '" + key + "' is not a number: " + it->second);
    }
}

bool kv_get_bool(const KvMap& kv, const std::string& key, bool fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    const std::string& v = it->second;
    if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
    if (v == "0" || v == "false" || v == "no" || v == "off") return false;
    throw IoError("config key '" + key + "' is not a boolean: " + v);
}

model::ModelConfig model_config_from_kv(const KvMap& kv) {
    model::ModelConfig c;
    c.scales = kv_get_int(kv, "model.scales", c.scales);
    c.k = kv_get_int(kv, "model.k", c.k);
    c.s = kv_get_int(kv, "model.s", c.s);
    const std::string ess = kv_get(kv, "model.ess_sizes", "");
    if (!ess.empty()) c.ess_sizes = model::parse_index_list(ess);
    else if (c.scales != 5) throw IoError("config: model.ess_sizes required when model.scales != 5");
    const std::string blocked = kv_get(kv, "model.blocked_highways", "");
    c.blocked_highways.clear();
    if (!blocked.empty())
        for (Index b : model::parse_index_list(blocked)) c.blocked_highways.insert(b);
    const long preset = kv_get_int(kv, "model.block_preset", -1);
    if (preset >= 0)
        c.blocked_highways = model::ModelConfig::blocked_preset(c.scales, preset);
    c.with_du = kv_get_bool(kv, "model.with_du", c.with_du);
    c.num_classes = kv_get_int(kv, "model.num_classes", c.num_classes);
    c.input_h = kv_get_int(kv, "model.input_h", c.input_h);
    c.input_w = kv_get_int(kv, "model.input_w", c.input_w);
    const std::string vu = kv_get(kv, "model.vu_mode", "nearest");
    if (vu != "nearest" && vu != "deconv") throw IoError("config: model.vu_mode must be nearest|deconv");
    c.vu_mode = vu == "deconv" ? model::VuMode::deconv : model::VuMode::nearest;
    c.decoder_ess = kv_get_bool(kv, "model.decoder_ess", c.decoder_ess);
    c.decoder_ess_n = kv_get_int(kv, "model.decoder_ess_n", c.decoder_ess_n);
    return c;
}

TrainFileConfig parse_train_config(const std::string& path) {
    const KvMap kv = parse_kv_file(path);
    TrainFileConfig c;
    c.model = model_config_from_kv(kv);

    const std::string kind = kv_get(kv, "loss.kind", "focal");
    if (kind != "focal" && kind != "ce") throw IoError("config: loss.kind must be focal|ce");
    c.loss.kind = kind == "focal" ? optim::LossKind::focal : optim::LossKind::ce;
    c.loss.gamma = kv_get_double(kv, "loss.gamma", c.loss.gamma);
    const std::string alphas = kv_get(kv, "loss.alphas", "");
    if (!alphas.empty()) {
        c.loss.alphas.clear();
        std::istringstream is(alphas);
        std::string item;
        while (std::getline(is, item, ',')) c.loss.alphas.push_back(std::stod(item));
    }
    c.loss.validate();

    c.opt.lr = static_cast<float>(kv_get_double(kv, "optim.lr", c.opt.lr));
    c.opt.beta1 = static_cast<float>(kv_get_double(kv, "optim.beta1", c.opt.beta1));
    c.opt.beta2 = static_cast<float>(kv_get_double(kv, "optim.beta2", c.opt.beta2));
    c.opt.eps = static_cast<float>(kv_get_double(kv, "optim.eps", c.opt.eps));
    c.opt.weight_decay =
        static_cast<float>(kv_get_double(kv, "optim.weight_decay", c.opt.weight_decay));

    c.epochs = static_cast<int>(kv_get_int(kv, "train.epochs", c.epochs));
    c.batch_size = static_cast<int>(kv_get_int(kv, "train.batch_size", c.batch_size));
    check(c.batch_size >= 1, "config: train.batch_size must be >= 1");
    c.seed = static_cast<std::uint64_t>(kv_get_int(kv, "train.seed", 1));
    c.checkpoint_every = static_cast<int>(kv_get_int(kv, "train.checkpoint_every", 0));
    c.target_iou = kv_get_double(kv, "train.target_iou", 0.0);
    c.bn_recalibrate = static_cast<int>(kv_get_int(kv, "train.bn_recalibrate", c.bn_recalibrate));

    std::istringstream augs(kv_get(kv, "train.augment", ""));
    std::string aug;
    while (std::getline(augs, aug, ',')) {
        const std::string a = trim(aug);
        if (a.empty() || a == "none") continue;
        if (a == "hflip") c.aug_hflip = true;
        else if (a == "shift") c.aug_shift = true;
        else if (a == "rotate90") c.aug_rotate90 = true;
        else throw IoError("config: unknown augmentation '" + a + "'");
    }
    if (c.aug_rotate90 && c.model.input_h != c.model.input_w)
        throw IoError("config: rotate90 requires a square input size");

    c.data_dir = kv_get(kv, "data.dir", "");
    c.label_map = kv_get(kv, "data.label_map", "");
    c.use_synth = kv_get_bool(kv, "synth.enable", false) || c.data_dir.empty();
    c.synth.count = static_cast<int>(kv_get_int(kv, "synth.count", c.synth.count));
    c.synth.h = c.model.input_h;
    c.synth.w = c.model.input_w;
    c.synth.min_objects = static_cast<int>(kv_get_int(kv, "synth.min_objects", c.synth.min_objects));
    c.synth.max_objects = static_cast<int>(kv_get_int(kv, "synth.max_objects", c.synth.max_objects));
    c.synth.frac_lo = kv_get_double(kv, "synth.frac_lo", c.synth.frac_lo);
    c.synth.frac_hi = kv_get_double(kv, "synth.frac_hi", c.synth.frac_hi);

    c.out_checkpoint = kv_get(kv, "out.checkpoint", c.out_checkpoint);
    c.out_log = kv_get(kv, "out.log", c.out_log);
    return c;
}

} // namespace io
} // namespace rganet
