#include "pvad/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

using json = nlohmann::json;

namespace pvad {

namespace {

constexpr const char* kMagic = "HYWA1";
constexpr const char* kPatchMagic = "HYWAPATCH1";

json layout_to_json(const Layout& lay) {
    json arr = json::array();
    for (const auto& e : lay.entries) {
        json j;
        j["name"] = e.name;
        j["offset"] = e.offset;
        j["shape"] = e.shape;
        arr.push_back(j);
    }
    return arr;
}

Layout layout_from_json(const json& arr) {
    Layout lay;
    for (const auto& j : arr) {
        LayoutEntry e;
        e.name = j.at("name").get<std::string>();
        e.offset = j.at("offset").get<int>();
        e.shape = j.at("shape").get<std::vector<int>>();
        lay.entries.push_back(std::move(e));
    }
    return lay;
}

void write_blob(std::ofstream& os, const std::vector<float>& a, const std::vector<float>& b) {
    const std::size_t bytes = (a.size() + b.size()) * sizeof(float);
    os << "BLOB " << bytes << "\n";
    os.write(reinterpret_cast<const char*>(a.data()),
             static_cast<std::streamsize>(a.size() * sizeof(float)));
    os.write(reinterpret_cast<const char*>(b.data()),
             static_cast<std::streamsize>(b.size() * sizeof(float)));
}

std::vector<char> read_blob(std::ifstream& is, const std::string& path) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("BLOB ", 0) != 0) {
        throw DataError(path + ": missing BLOB section");
    }
    const std::size_t bytes = std::stoull(line.substr(5));
    std::vector<char> raw(bytes);
    is.read(raw.data(), static_cast<std::streamsize>(bytes));
    if (!is) throw DataError(path + ": truncated blob");
    return raw;
}

}  // namespace

ad::Tensor normalize_features(const Checkpoint& ck, ad::Tensor feats) {
    if (ck.feat_mean.empty()) return feats;
    const int F = feats.cols();
    if (static_cast<std::size_t>(F) != ck.feat_mean.size()) {
        throw DimensionError("normalize_features: " + std::to_string(F) + " columns vs " +
                             std::to_string(ck.feat_mean.size()) + " stored statistics");
    }
    for (int t = 0; t < feats.rows(); ++t) {
        for (int f = 0; f < F; ++f) {
            feats.at(t, f) = (feats.at(t, f) - ck.feat_mean[static_cast<std::size_t>(f)]) /
                             ck.feat_std[static_cast<std::size_t>(f)];
        }
    }
    return feats;
}

void normalize_frame(const Checkpoint& ck, std::vector<float>& frame) {
    if (ck.feat_mean.empty()) return;
    if (frame.size() != ck.feat_mean.size()) {
        throw DimensionError("normalize_frame: " + std::to_string(frame.size()) +
                             " values vs " + std::to_string(ck.feat_mean.size()) +
                             " stored statistics");
    }
    for (std::size_t f = 0; f < frame.size(); ++f) {
        frame[f] = (frame[f] - ck.feat_mean[f]) / ck.feat_std[f];
    }
}

std::vector<float> normalize_embedding(const Checkpoint& ck, std::vector<float> emb) {
    if (ck.embed_mean.empty()) return emb;
    if (emb.size() != ck.embed_mean.size()) {
        throw DimensionError("normalize_embedding: " + std::to_string(emb.size()) +
                             " values vs " + std::to_string(ck.embed_mean.size()) +
                             " stored statistics");
    }
    const float inv = static_cast<float>(1.0 / ck.embed_scale);
    for (std::size_t i = 0; i < emb.size(); ++i) {
        emb[i] = (emb[i] - ck.embed_mean[i]) * inv;
    }
    return emb;
}

std::string fnv1a_hex(const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

void save_checkpoint(const std::string& path, Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_checkpoint: cannot open " + path);

    std::vector<char> blob((ck.model.trunk.values.size() + ck.model.cond.values.size()) *
                           sizeof(float));
    std::memcpy(blob.data(), ck.model.trunk.values.data(),
                ck.model.trunk.values.size() * sizeof(float));
    std::memcpy(blob.data() + ck.model.trunk.values.size() * sizeof(float),
                ck.model.cond.values.data(), ck.model.cond.values.size() * sizeof(float));
    ck.digest = fnv1a_hex(blob.data(), blob.size());

    json j;
    j["mode"] = cond_kind_name(ck.model.mode);
    j["feat_dim"] = ck.model.feat_dim;
    j["embed_dim"] = ck.model.embed_dim;
    j["vad"] = {{"input_dim", ck.model.vad.input_dim},
                {"pre_hidden", ck.model.vad.pre_hidden},
                {"lstm_hidden", ck.model.vad.lstm_hidden},
                {"num_classes", ck.model.vad.num_classes},
                {"patch_targets", ck.model.vad.patch_targets}};
    j["hyper"] = {{"input_dim", ck.model.hyper.input_dim},
                  {"hidden", ck.model.hyper.hidden},
                  {"blocks", ck.model.hyper.blocks},
                  {"output_dim", ck.model.hyper.output_dim}};
    j["trunk_layout"] = layout_to_json(ck.model.trunk.layout);
    j["cond_layout"] = layout_to_json(ck.model.cond.layout);
    j["embed"] = {{"dim", ck.embed_cfg.dim}, {"proj_seed", ck.embed_cfg.proj_seed}};
    j["features"] = {{"sample_rate", ck.feat_cfg.sample_rate},
                     {"window_s", ck.feat_cfg.window_s},
                     {"hop_s", ck.feat_cfg.hop_s},
                     {"fft_size", ck.feat_cfg.fft_size},
                     {"num_mels", ck.feat_cfg.num_mels},
                     {"fmin_hz", ck.feat_cfg.fmin_hz},
                     {"fmax_hz", ck.feat_cfg.fmax_hz},
                     {"log_floor", ck.feat_cfg.log_floor}};
    j["train"] = {{"lr", ck.train_cfg.lr},
                  {"beta1", ck.train_cfg.beta1},
                  {"beta2", ck.train_cfg.beta2},
                  {"adam_eps", ck.train_cfg.adam_eps},
                  {"grad_clip", ck.train_cfg.grad_clip},
                  {"batch", ck.train_cfg.batch},
                  {"max_epochs", ck.train_cfg.max_epochs},
                  {"patience", ck.train_cfg.patience},
                  {"improve_eps", ck.train_cfg.improve_eps},
                  {"seed", ck.train_cfg.seed},
                  {"mode", cond_kind_name(ck.train_cfg.mode)},
                  {"init_from", ck.train_cfg.init_from},
                  {"hyper_hidden", ck.train_cfg.hyper_hidden},
                  {"class_weights", ck.train_cfg.class_weights},
                  {"embed_jitter", ck.train_cfg.embed_jitter},
                  {"patch_penalty", ck.train_cfg.patch_penalty}};
    j["feat_norm"] = {{"mean", ck.feat_mean}, {"std", ck.feat_std}};
    j["embed_norm"] = {{"mean", ck.embed_mean}, {"scale", ck.embed_scale}};
    j["blob_digest"] = ck.digest;

    os << kMagic << "\n" << j.dump() << "\n";
    write_blob(os, ck.model.trunk.values, ck.model.cond.values);
    if (!os) throw DataError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_checkpoint: cannot open " + path);
    std::string magic;
    std::getline(is, magic);
    if (magic != kMagic) throw DataError("load_checkpoint: bad magic '" + magic + "' in " + path);
    std::string manifest;
    std::getline(is, manifest);
    json j = json::parse(manifest);

    Checkpoint ck;
    ck.model.mode = cond_kind_from(j.at("mode").get<std::string>());
    ck.model.feat_dim = j.at("feat_dim").get<int>();
    ck.model.embed_dim = j.at("embed_dim").get<int>();
    const json& v = j.at("vad");
    ck.model.vad.input_dim = v.at("input_dim").get<int>();
    ck.model.vad.pre_hidden = v.at("pre_hidden").get<int>();
    ck.model.vad.lstm_hidden = v.at("lstm_hidden").get<int>();
    ck.model.vad.num_classes = v.at("num_classes").get<int>();
    ck.model.vad.patch_targets = v.at("patch_targets").get<std::vector<std::string>>();
    const json& h = j.at("hyper");
    ck.model.hyper.input_dim = h.at("input_dim").get<int>();
    ck.model.hyper.hidden = h.at("hidden").get<int>();
    ck.model.hyper.blocks = h.at("blocks").get<int>();
    ck.model.hyper.output_dim = h.at("output_dim").get<int>();
    ck.model.trunk.layout = layout_from_json(j.at("trunk_layout"));
    ck.model.cond.layout = layout_from_json(j.at("cond_layout"));
    ck.embed_cfg.dim = j.at("embed").at("dim").get<int>();
    ck.embed_cfg.proj_seed = j.at("embed").at("proj_seed").get<std::uint64_t>();
    const json& f = j.at("features");
    ck.feat_cfg.sample_rate = f.at("sample_rate").get<int>();
    ck.feat_cfg.window_s = f.at("window_s").get<double>();
    ck.feat_cfg.hop_s = f.at("hop_s").get<double>();
    ck.feat_cfg.fft_size = f.at("fft_size").get<int>();
    ck.feat_cfg.num_mels = f.at("num_mels").get<int>();
    ck.feat_cfg.fmin_hz = f.at("fmin_hz").get<double>();
    ck.feat_cfg.fmax_hz = f.at("fmax_hz").get<double>();
    ck.feat_cfg.log_floor = f.at("log_floor").get<double>();
    ck.embed_cfg.features = ck.feat_cfg;
    const json& t = j.at("train");
    ck.train_cfg.lr = t.at("lr").get<double>();
    ck.train_cfg.beta1 = t.at("beta1").get<double>();
    ck.train_cfg.beta2 = t.at("beta2").get<double>();
    ck.train_cfg.adam_eps = t.at("adam_eps").get<double>();
    ck.train_cfg.grad_clip = t.at("grad_clip").get<double>();
    ck.train_cfg.batch = t.at("batch").get<int>();
    ck.train_cfg.max_epochs = t.at("max_epochs").get<int>();
    ck.train_cfg.patience = t.at("patience").get<int>();
    ck.train_cfg.improve_eps = t.at("improve_eps").get<double>();
    ck.train_cfg.seed = t.at("seed").get<std::uint64_t>();
    ck.train_cfg.mode = cond_kind_from(t.at("mode").get<std::string>());
    ck.train_cfg.init_from = t.at("init_from").get<std::string>();
    ck.train_cfg.hyper_hidden = t.at("hyper_hidden").get<int>();
    ck.train_cfg.class_weights = t.at("class_weights").get<bool>();
    if (t.contains("embed_jitter")) ck.train_cfg.embed_jitter = t.at("embed_jitter").get<double>();
    if (t.contains("patch_penalty")) {
        ck.train_cfg.patch_penalty = t.at("patch_penalty").get<double>();
    }
    if (j.contains("feat_norm")) {
        ck.feat_mean = j.at("feat_norm").at("mean").get<std::vector<float>>();
        ck.feat_std = j.at("feat_norm").at("std").get<std::vector<float>>();
    }
    if (j.contains("embed_norm")) {
        ck.embed_mean = j.at("embed_norm").at("mean").get<std::vector<float>>();
        ck.embed_scale = j.at("embed_norm").at("scale").get<double>();
    }

    const std::vector<char> raw = read_blob(is, path);
    const std::string digest = fnv1a_hex(raw.data(), raw.size());
    if (digest != j.at("blob_digest").get<std::string>()) {
        throw CorruptionError("load_checkpoint: blob digest mismatch in " + path);
    }
    ck.digest = digest;

    const std::size_t trunk_n = static_cast<std::size_t>(ck.model.trunk.layout.total());
    const std::size_t cond_n = static_cast<std::size_t>(ck.model.cond.layout.total());
    if (raw.size() != (trunk_n + cond_n) * sizeof(float)) {
        throw CorruptionError("load_checkpoint: blob size does not match layouts in " + path);
    }
    ck.model.trunk.values.resize(trunk_n);
    ck.model.cond.values.resize(cond_n);
    std::memcpy(ck.model.trunk.values.data(), raw.data(), trunk_n * sizeof(float));
    std::memcpy(ck.model.cond.values.data(), raw.data() + trunk_n * sizeof(float),
                cond_n * sizeof(float));
    return ck;
}

void save_patch(const std::string& path, const WeightPatch& patch,
                const std::string& checkpoint_digest, const std::string& embedding_digest) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("save_patch: cannot open " + path);
    json j;
    j["checkpoint_digest"] = checkpoint_digest;
    j["embedding_digest"] = embedding_digest;
    json entries = json::array();
    std::vector<float> flat;
    for (const auto& [name, t] : patch.entries) {
        json e;
        e["name"] = name;
        e["shape"] = t.shape;
        entries.push_back(e);
        flat.insert(flat.end(), t.data.begin(), t.data.end());
    }
    j["entries"] = entries;
    j["origin"] = patch.origin == WeightPatch::Origin::hypernet ? "hypernet" : "zero";
    j["blob_digest"] = fnv1a_hex(flat.data(), flat.size() * sizeof(float));
    os << kPatchMagic << "\n" << j.dump() << "\n";
    write_blob(os, flat, {});
    if (!os) throw DataError("save_patch: write failed for " + path);
}

WeightPatch load_patch(const std::string& path, std::string* checkpoint_digest,
                       std::string* embedding_digest) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("load_patch: cannot open " + path);
    std::string magic;
    std::getline(is, magic);
    if (magic != kPatchMagic) throw DataError("load_patch: bad magic '" + magic + "' in " + path);
    std::string manifest;
    std::getline(is, manifest);
    json j = json::parse(manifest);
    if (checkpoint_digest) *checkpoint_digest = j.at("checkpoint_digest").get<std::string>();
    if (embedding_digest) *embedding_digest = j.at("embedding_digest").get<std::string>();

    const std::vector<char> raw = read_blob(is, path);
    if (fnv1a_hex(raw.data(), raw.size()) != j.at("blob_digest").get<std::string>()) {
        throw CorruptionError("load_patch: blob digest mismatch in " + path);
    }
    WeightPatch patch;
    patch.origin = j.at("origin").get<std::string>() == "hypernet" ? WeightPatch::Origin::hypernet
                                                                   : WeightPatch::Origin::zero;
    std::size_t off = 0;
    for (const auto& e : j.at("entries")) {
        const std::string name = e.at("name").get<std::string>();
        const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        if ((off + n) * sizeof(float) > raw.size()) {
            throw CorruptionError("load_patch: entries exceed blob in " + path);
        }
        std::vector<float> vals(n);
        std::memcpy(vals.data(), raw.data() + off * sizeof(float), n * sizeof(float));
        patch.entries[name] = ad::Tensor(shape, std::move(vals));
        off += n;
    }
    return patch;
}

}  // namespace pvad
