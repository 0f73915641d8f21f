// pvad: synthesize corpora, train and evaluate personalized VAD models, and
// run frame-level inference from the command line.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pvad/checkpoint.hpp"
#include "pvad/eval.hpp"
#include "pvad/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_empty_or_force(const std::string& dir, bool force) {
    if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
        throw pvad::ConfigError("output directory '" + dir +
                                "' is not empty; pass --force to write into it anyway");
    }
}

pvad::TrainConfig load_train_config(const std::string& path) {
    pvad::TrainConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw pvad::ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw pvad::ConfigError("config file '" + path + "': " + e.what());
    }
    if (j.contains("lr")) cfg.lr = j["lr"].get<double>();
    if (j.contains("beta1")) cfg.beta1 = j["beta1"].get<double>();
    if (j.contains("beta2")) cfg.beta2 = j["beta2"].get<double>();
    if (j.contains("adam_eps")) cfg.adam_eps = j["adam_eps"].get<double>();
    if (j.contains("grad_clip")) cfg.grad_clip = j["grad_clip"].get<double>();
    if (j.contains("batch")) cfg.batch = j["batch"].get<int>();
    if (j.contains("max_epochs")) cfg.max_epochs = j["max_epochs"].get<int>();
    if (j.contains("patience")) cfg.patience = j["patience"].get<int>();
    if (j.contains("improve_eps")) cfg.improve_eps = j["improve_eps"].get<double>();
    if (j.contains("hyper_hidden")) cfg.hyper_hidden = j["hyper_hidden"].get<int>();
    if (j.contains("class_weights")) cfg.class_weights = j["class_weights"].get<bool>();
    if (j.contains("embed_jitter")) cfg.embed_jitter = j["embed_jitter"].get<double>();
    if (j.contains("patch_penalty")) cfg.patch_penalty = j["patch_penalty"].get<double>();
    return cfg;
}

pvad::SpeakerEmbedding embed_files(const std::vector<std::string>& wavs,
                                   const pvad::EmbedConfig& ec) {
    std::vector<pvad::SpeakerEmbedding> embs;
    for (const std::string& w : wavs) embs.push_back(pvad::embed(pvad::read_wav(w), ec));
    return pvad::average_embeddings(embs);
}

const char* label_name(int c) {
    switch (c) {
        case pvad::kNs: return "ns";
        case pvad::kTss: return "tss";
        case pvad::kNtss: return "ntss";
    }
    return "?";
}

int run_app(int argc, char** argv) {
    CLI::App app{"personalized voice activity detection"};
    app.require_subcommand(1);

    // --- synth ---
    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled corpus");
    std::string synth_out;
    pvad::CorpusConfig ccfg;
    bool force = false;
    synth->add_option("--out", synth_out, "output corpus directory")->required();
    synth->add_option("--seed", ccfg.seed, "master corpus seed");
    synth->add_option("--train-speakers", ccfg.train_speakers);
    synth->add_option("--val-speakers", ccfg.val_speakers);
    synth->add_option("--test-speakers", ccfg.test_speakers);
    synth->add_option("--train-mixtures", ccfg.train_mixtures);
    synth->add_option("--val-mixtures", ccfg.val_mixtures);
    synth->add_option("--test-mixtures", ccfg.test_mixtures);
    synth->add_option("--enroll-s", ccfg.enroll_s, "enrollment utterance length (s)");
    synth->add_option("--min-utts", ccfg.min_utts, "min speakers per mixture");
    synth->add_option("--max-utts", ccfg.max_utts, "max speakers per mixture");
    synth->add_option("--utt-min-s", ccfg.utt_min_s);
    synth->add_option("--utt-max-s", ccfg.utt_max_s);
    synth->add_flag("--reverb", ccfg.reverb, "apply synthetic reverb to mixtures");
    synth->add_flag("--force", force, "write into a non-empty output directory");

    // --- train ---
    auto* train = app.add_subcommand("train", "train a conditioned VAD model");
    std::string train_corpus, train_out, train_cfg_path, train_mode = "hywa", init_from;
    std::uint64_t train_seed = 1;
    train->add_option("--corpus", train_corpus, "corpus directory from `pvad synth`")->required();
    train->add_option("--out", train_out, "checkpoint output path")->required();
    train->add_option("--config", train_cfg_path, "JSON training config overrides");
    train->add_option("--mode", train_mode, "none|concat|add|mul|film|hywa");
    train->add_option("--seed", train_seed, "training seed");
    train->add_option("--init-from", init_from, "checkpoint to warm-start the trunk from");

    // --- enroll ---
    auto* enroll = app.add_subcommand("enroll", "compute a speaker embedding (and patch)");
    std::string en_ckpt, en_emb_out, en_patch_out;
    std::vector<std::string> en_wavs;
    enroll->add_option("--ckpt", en_ckpt, "trained checkpoint")->required();
    enroll->add_option("--wav", en_wavs, "enrollment wav file(s)")->required();
    enroll->add_option("--out", en_emb_out, "embedding output path")->required();
    enroll->add_option("--patch-out", en_patch_out,
                       "also write the hypernetwork weight patch here (hywa checkpoints)");

    // --- run ---
    auto* run = app.add_subcommand("run", "frame-level inference on a wav file");
    std::string run_ckpt, run_emb, run_wav;
    std::vector<std::string> run_enroll;
    bool stream = false, no_patch = false;
    run->add_option("--ckpt", run_ckpt, "trained checkpoint")->required();
    run->add_option("--wav", run_wav, "input wav file")->required();
    run->add_option("--embedding", run_emb, "embedding file from `pvad enroll`");
    run->add_option("--enroll", run_enroll, "enrollment wav(s), embedded on the fly");
    run->add_flag("--stream", stream, "frame-by-frame streaming inference");
    run->add_flag("--no-patch", no_patch, "skip speaker conditioning (baseline trunk)");

    // --- eval ---
    auto* eval = app.add_subcommand("eval", "evaluate checkpoints on the test split");
    std::string ev_corpus, ev_scenario = "all";
    std::vector<std::string> ev_ckpts;
    bool per_snr = false;
    eval->add_option("--corpus", ev_corpus, "corpus directory")->required();
    eval->add_option("--ckpt", ev_ckpts, "checkpoint path(s); repeat for multiple seeds/modes")
        ->required();
    eval->add_option("--scenario", ev_scenario, "clean|seen|unseen|all");
    eval->add_flag("--per-snr", per_snr, "average per-SNR APs instead of pooling frames");

    CLI11_PARSE(app, argc, argv);

    if (*synth) {
        require_empty_or_force(synth_out, force);
        pvad::build_corpus(ccfg, synth_out);
        std::cout << "wrote corpus to " << synth_out << "\n";
        return 0;
    }

    if (*train) {
        pvad::TrainConfig cfg = load_train_config(train_cfg_path);
        cfg.mode = pvad::cond_kind_from(train_mode);
        cfg.seed = train_seed;
        cfg.init_from = init_from;
        pvad::TrainReport rep;
        pvad::Checkpoint ck = pvad::fit(cfg, train_corpus, &rep, &std::cout);
        pvad::save_checkpoint(train_out, ck);
        std::cout << "best epoch " << (rep.best_epoch + 1) << " val_loss " << rep.best_val_loss
                  << " (" << rep.wall_s << " s); checkpoint " << train_out << " digest "
                  << ck.digest << "\n";
        return 0;
    }

    if (*enroll) {
        pvad::Checkpoint ck = pvad::load_checkpoint(en_ckpt);
        const pvad::SpeakerEmbedding emb = embed_files(en_wavs, ck.embed_cfg);
        pvad::write_embedding(en_emb_out, emb, ck.embed_cfg);
        std::cout << "wrote embedding " << en_emb_out << "\n";
        if (!en_patch_out.empty()) {
            if (ck.model.mode != pvad::CondKind::hywa) {
                throw pvad::ConfigError("--patch-out requires a hywa checkpoint (this one is '" +
                                        pvad::cond_kind_name(ck.model.mode) + "')");
            }
            const pvad::WeightPatch patch = pvad::hypernet_forward(
                ck.model.cond, ck.model.hyper, ck.model.vad,
                pvad::normalize_embedding(ck, emb.values));
            const std::string emb_digest = pvad::fnv1a_hex(
                emb.values.data(), emb.values.size() * sizeof(float));
            pvad::save_patch(en_patch_out, patch, ck.digest, emb_digest);
            std::cout << "wrote patch " << en_patch_out << "\n";
        }
        return 0;
    }

    if (*run) {
        pvad::Checkpoint ck = pvad::load_checkpoint(run_ckpt);
        std::vector<float> emb(static_cast<std::size_t>(ck.embed_cfg.dim), 0.0f);
        const bool needs_emb = ck.model.mode != pvad::CondKind::none && !no_patch;
        if (needs_emb) {
            if (!run_emb.empty()) {
                emb = pvad::normalize_embedding(ck, pvad::read_embedding(run_emb).values);
            } else if (!run_enroll.empty()) {
                emb = pvad::normalize_embedding(ck, embed_files(run_enroll, ck.embed_cfg).values);
            } else {
                throw pvad::ConfigError(
                    "run: this checkpoint needs a target speaker; pass --embedding or --enroll "
                    "(or --no-patch for the unconditioned trunk)");
            }
        }
        pvad::Model model = ck.model;
        if (no_patch) {
            if (model.mode == pvad::CondKind::concat) {
                throw pvad::ConfigError("run: --no-patch is not defined for concat models");
            }
            model.mode = pvad::CondKind::none;
        }
        pvad::PersonalizedVad pv = pvad::personalize(model, emb);
        const pvad::Waveform w = pvad::read_wav(run_wav);
        const pvad::FeatureMatrix fm = pvad::log_mel(w, ck.feat_cfg);
        const pvad::ad::Tensor feats = pvad::normalize_features(ck, pvad::feature_tensor(fm));

        pvad::ad::Tensor logits;
        if (stream) {
            logits = pvad::ad::Tensor({fm.num_frames, model.vad.num_classes}, 0.0f);
            std::vector<float> frame(static_cast<std::size_t>(fm.num_mels));
            for (int t = 0; t < fm.num_frames; ++t) {
                for (int f = 0; f < fm.num_mels; ++f) frame[static_cast<std::size_t>(f)] = fm.at(t, f);
                pvad::normalize_frame(ck, frame);
                const std::vector<float> out = pv.step(frame);
                for (int c = 0; c < model.vad.num_classes; ++c) logits.at(t, c) = out[static_cast<std::size_t>(c)];
            }
        } else {
            logits = pv.forward(feats);
        }
        const pvad::ad::Tensor probs = pvad::ad::softmax(logits);
        for (int t = 0; t < probs.rows(); ++t) {
            int best = 0;
            for (int c = 1; c < probs.cols(); ++c) {
                if (probs.at(t, c) > probs.at(t, best)) best = c;
            }
            std::printf("%d\t%.3f\t%.6f\t%.6f\t%.6f\t%s\n", t, t * fm.hop_s, probs.at(t, 0),
                        probs.at(t, 1), probs.at(t, 2), label_name(best));
        }
        return 0;
    }

    if (*eval) {
        std::map<std::string, std::vector<std::string>> by_mode;
        for (const std::string& path : ev_ckpts) {
            const pvad::Checkpoint ck = pvad::load_checkpoint(path);
            by_mode[pvad::cond_kind_name(ck.model.mode)].push_back(path);
        }
        std::vector<std::string> scenarios;
        if (ev_scenario == "all") {
            scenarios = {"clean", "seen", "unseen"};
        } else if (ev_scenario == "clean" || ev_scenario == "seen" || ev_scenario == "unseen") {
            scenarios = {ev_scenario};
        } else {
            throw pvad::ConfigError("eval: unknown scenario '" + ev_scenario + "'");
        }
        const std::vector<pvad::CompareRow> rows =
            pvad::compare_modes(by_mode, ev_corpus, scenarios, per_snr);
        std::cout << pvad::format_table(rows);
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run_app(argc, argv);
    } catch (const pvad::DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const pvad::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
