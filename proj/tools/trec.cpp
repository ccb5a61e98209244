#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "trec/data.hpp"
#include "trec/eval.hpp"
#include "trec/features.hpp"
#include "trec/models.hpp"
#include "trec/synth.hpp"
#include "trec/training.hpp"

namespace fs = std::filesystem;
using namespace trec;

namespace {

struct RatioSpec {
    double train = 0.8, val = 0.1, test = 0.1;
};

RatioSpec parse_ratios(const std::string& s) {
    RatioSpec r;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf", &r.train, &r.val, &r.test) != 3)
        throw ArgumentError("ratios must look like 0.8,0.1,0.1");
    return r;
}

FeatureNorm parse_norm(const std::string& s) {
    if (s == "none") return FeatureNorm::none;
    if (s == "standardize") return FeatureNorm::per_dim_standardize;
    if (s == "l2") return FeatureNorm::unit_l2_column;
    throw ArgumentError("unknown feature norm: " + s);
}

FeatureMatrix load_feature_file(const std::string& path,
                                const Dataset& dataset, FeatureNorm norm) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open feature file: " + path);
    FeatureMatrix fm = path.size() > 4 && path.substr(path.size() - 4) == ".tsv"
                           ? load_features_tsv(in, dataset)
                           : load_features(in, dataset);
    return normalize_features(fm, norm);
}

std::vector<int> parse_cutoffs(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    if (out.empty()) throw ArgumentError("empty cutoff list");
    return out;
}

// hyperparameters shared by train subcommand
struct TrainArgs {
    std::string data_dir, variant = "dcf", features, out, trace;
    std::string feature_norm = "standardize";
    TrainConfig cfg;
    double lambda3 = 0.3, lambda4 = 0.3, lambda5 = 0.5, lambda6 = 0.2,
           lambda7 = 0.5, lambda8 = 0.5;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
    cmd->add_option("--data", a.data_dir, "split directory from ingest/synth")
        ->required();
    cmd->add_option("--variant", a.variant,
                    "dcf|dcfa|mf|vbpr|cp|pitf|cmtf|mp|rand");
    cmd->add_option("--features", a.features, "feature file (.bin or .tsv)");
    cmd->add_option("--feature-norm", a.feature_norm, "none|standardize|l2");
    cmd->add_option("--out", a.out, "checkpoint output path")->required();
    cmd->add_option("--trace", a.trace, "training trace TSV path");
    cmd->add_option("--k1", a.cfg.K1, "user-item latent dim");
    cmd->add_option("--k2", a.cfg.K2, "time-item latent dim");
    cmd->add_option("--lambda1", a.cfg.lambda1);
    cmd->add_option("--lambda2", a.cfg.lambda2);
    cmd->add_option("--lambda3", a.lambda3);
    cmd->add_option("--lambda4", a.lambda4);
    cmd->add_option("--lambda5", a.lambda5);
    cmd->add_option("--lambda6", a.lambda6);
    cmd->add_option("--lambda7", a.lambda7);
    cmd->add_option("--lambda8", a.lambda8);
    cmd->add_option("--eta", a.cfg.eta, "learning rate");
    cmd->add_option("--batch-size", a.cfg.batch_size);
    cmd->add_option("--negatives", a.cfg.negatives_per_positive);
    cmd->add_option("--iter-max", a.cfg.iter_max);
    cmd->add_option("--conv-tol", a.cfg.conv_tol);
    cmd->add_option("--conv-patience", a.cfg.conv_patience);
    cmd->add_option("--init-scale", a.cfg.init_scale);
    cmd->add_option("--seed", a.cfg.seed);
    cmd->add_option("--eval-every", a.cfg.eval_every,
                    "validation metrics every N iterations (0 = off)");
    cmd->add_option("--eval-cutoff", a.cfg.eval_cutoff);
    cmd->add_option("--eval-max-users", a.cfg.eval_max_users);
}

int run_train(TrainArgs& a) {
    a.cfg.lambda_theta[0] = a.lambda3;
    a.cfg.lambda_theta[1] = a.lambda4;
    a.cfg.lambda_theta[2] = a.lambda5;
    a.cfg.lambda_theta[3] = a.lambda6;
    a.cfg.lambda_theta[4] = a.lambda7;
    a.cfg.lambda_theta[5] = a.lambda8;

    Variant variant = variant_from_name(a.variant);
    Split split = load_split(a.data_dir);
    const Dataset& train = split.train;

    FeatureMatrix features;
    bool have_features = false;
    if (variant_uses_features(variant)) {
        if (a.features.empty())
            throw ArgumentError("--variant " + a.variant +
                                " requires --features");
        features =
            load_feature_file(a.features, train, parse_norm(a.feature_norm));
        have_features = true;
    }
    const FeatureMatrix* fptr = have_features ? &features : nullptr;

    ModelParams params;
    TrainTrace trace;
    switch (variant) {
        case Variant::mp:
            params = fit_mp(train);
            break;
        case Variant::random:
            params = make_rand_params(train, a.cfg.seed);
            break;
        case Variant::cmtf:
            std::tie(params, trace) =
                train_mse_cmtf(train, a.cfg, &split.validation);
            break;
        case Variant::tucker:
            throw ArgumentError("tucker has no trainer");
        default:
            std::tie(params, trace) =
                train_bpr(train, fptr, variant, a.cfg, &split.validation);
    }

    save_checkpoint_file(a.out, params);
    if (!a.trace.empty()) trace.save_tsv(a.trace);

    if (!split.validation.empty()) {
        auto report = evaluate_model(make_scorer(params, fptr), train,
                                     split.validation, {a.cfg.eval_cutoff});
        std::printf("validation recall@%d=%.6f ndcg@%d=%.6f pairs=%ld\n",
                    a.cfg.eval_cutoff, report.recall(a.cfg.eval_cutoff),
                    a.cfg.eval_cutoff, report.ndcg(a.cfg.eval_cutoff),
                    report.users_evaluated);
    }
    std::printf("checkpoint written: %s\n", a.out.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"coupled tensor-factorization recommender"};
    app.require_subcommand(1);

    // ingest
    struct {
        std::string interactions, out, ratios = "0.8,0.1,0.1";
        int k_core = 5;
        int64_t min_timestamp = -1;
        int64_t interval_seconds = 604800;
        uint64_t seed = 1;
    } ing;
    auto* ingest = app.add_subcommand("ingest", "build a dataset from a log");
    ingest->set_config("--config");
    ingest->add_option("--interactions", ing.interactions,
                       "tab-separated interactions file")
        ->required();
    ingest->add_option("--out", ing.out, "output directory")->required();
    ingest->add_option("--k-core", ing.k_core, "k-core filter threshold");
    ingest->add_option("--min-timestamp", ing.min_timestamp,
                       "drop records before this epoch time");
    ingest->add_option("--interval-seconds", ing.interval_seconds);
    ingest->add_option("--ratios", ing.ratios, "train,val,test");
    ingest->add_option("--seed", ing.seed);

    // synth
    SynthConfig syn;
    std::string syn_out;
    std::string syn_ratios = "0.8,0.1,0.1";
    auto* synth = app.add_subcommand("synth", "generate a planted corpus");
    synth->set_config("--config");
    synth->add_option("--out", syn_out, "output directory")->required();
    synth->add_option("--users", syn.users);
    synth->add_option("--items", syn.items);
    synth->add_option("--intervals", syn.intervals);
    synth->add_option("--groups", syn.groups);
    synth->add_option("--density", syn.density);
    synth->add_option("--affinity-boost", syn.affinity_boost);
    synth->add_option("--season-amp", syn.season_amp);
    synth->add_option("--feature-dim", syn.feature_dim);
    synth->add_option("--feature-noise", syn.feature_noise);
    synth->add_option("--ratios", syn_ratios, "train,val,test");
    synth->add_option("--seed", syn.seed);

    // train
    TrainArgs tr;
    auto* train = app.add_subcommand("train", "train a model");
    train->set_config("--config");
    add_train_options(train, tr);

    // eval
    struct {
        std::string data_dir, split = "test", reference, out, features;
        std::string feature_norm = "standardize";
        std::string cutoffs = "5,10,20,50,100";
        std::vector<std::string> checkpoints;
        bool include_cold = false;
        bool no_exclude_train = false;
    } ev;
    auto* eval = app.add_subcommand("eval", "evaluate checkpoints");
    eval->set_config("--config");
    eval->add_option("--data", ev.data_dir)->required();
    eval->add_option("--split", ev.split, "validation|test");
    eval->add_option("--checkpoint", ev.checkpoints, "checkpoint file(s)")
        ->required();
    eval->add_option("--reference", ev.reference,
                     "model name for relative improvement");
    eval->add_option("--cutoffs", ev.cutoffs);
    eval->add_option("--features", ev.features);
    eval->add_option("--feature-norm", ev.feature_norm);
    eval->add_option("--out", ev.out, "metrics TSV path");
    eval->add_flag("--include-cold", ev.include_cold);
    eval->add_flag("--no-exclude-train", ev.no_exclude_train);

    // predict
    struct {
        std::string data_dir, checkpoint, user, features;
        std::string feature_norm = "standardize";
        int interval = 0;
        int n = 10;
    } pr;
    auto* predict = app.add_subcommand("predict", "top-n items for a user");
    predict->set_config("--config");
    predict->add_option("--data", pr.data_dir)->required();
    predict->add_option("--checkpoint", pr.checkpoint)->required();
    predict->add_option("--user", pr.user, "raw user id")->required();
    predict->add_option("--interval", pr.interval, "time interval index");
    predict->add_option("-n,--top-n", pr.n);
    predict->add_option("--features", pr.features);
    predict->add_option("--feature-norm", pr.feature_norm);

    CLI11_PARSE(app, argc, argv);

    try {
        if (ingest->parsed()) {
            std::ifstream in(ing.interactions);
            if (!in)
                throw Error("cannot open interactions file: " +
                            ing.interactions);
            auto interactions = parse_interactions(in);
            if (ing.min_timestamp >= 0) {
                std::erase_if(interactions, [&](const Interaction& rec) {
                    return rec.timestamp < ing.min_timestamp;
                });
                if (interactions.empty()) throw EmptyInput();
            }
            interactions = kcore_filter(std::move(interactions), ing.k_core);
            if (interactions.empty())
                throw Error("k-core filter removed every interaction");
            auto grid = build_time_grid(interactions, ing.interval_seconds);
            auto dataset = build_dataset(interactions, grid);
            auto r = parse_ratios(ing.ratios);
            auto split = split_dataset(dataset, r.train, r.val, r.test, ing.seed);
            save_split(ing.out, split);
            std::printf(
                "ingested: P=%d Q=%d R=%d train=%zu val=%zu test=%zu\n",
                split.train.P, split.train.Q, split.train.R,
                split.train.triples.size(), split.validation.size(),
                split.test.size());
        } else if (synth->parsed()) {
            auto corpus = synth_corpus(syn);
            if (corpus.interactions.empty())
                throw Error("synthetic corpus came out empty; raise density");
            auto grid =
                build_time_grid(corpus.interactions, syn.interval_seconds);
            auto dataset = build_dataset(corpus.interactions, grid);
            auto r = parse_ratios(syn_ratios);
            auto split = split_dataset(dataset, r.train, r.val, r.test, syn.seed);
            save_split(syn_out, split);

            std::ofstream raw(syn_out + "/interactions.tsv");
            for (const auto& rec : corpus.interactions)
                raw << rec.user << '\t' << rec.item << '\t' << rec.timestamp
                    << '\n';
            std::ofstream feat(syn_out + "/features.bin", std::ios::binary);
            save_features(feat, corpus.features, corpus.item_ids);
            std::printf(
                "synthesized: P=%d Q=%d R=%d positives=%zu features=%dx%d\n",
                split.train.P, split.train.Q, split.train.R,
                dataset.triples.size(), corpus.features.K, corpus.features.Q);
        } else if (train->parsed()) {
            return run_train(tr);
        } else if (eval->parsed()) {
            Split split = load_split(ev.data_dir);
            const auto& holdout =
                ev.split == "validation" ? split.validation : split.test;
            if (ev.split != "validation" && ev.split != "test")
                throw ArgumentError("--split must be validation or test");
            auto cutoffs = parse_cutoffs(ev.cutoffs);

            FeatureMatrix features;
            bool have_features = false;
            std::vector<std::pair<std::string, MetricsReport>> reports;
            std::vector<ModelParams> models;
            models.reserve(ev.checkpoints.size());
            std::vector<std::string> names;
            for (const auto& path : ev.checkpoints) {
                models.push_back(load_checkpoint_file(path));
                if (models.back().vocab_hash != split.train.vocab_hash())
                    throw VocabMismatch("checkpoint " + path +
                                        " was trained on a different dataset");
                if (variant_uses_features(models.back().variant) &&
                    !have_features) {
                    if (ev.features.empty())
                        throw ArgumentError(
                            "a feature-based checkpoint needs --features");
                    features = load_feature_file(ev.features, split.train,
                                                 parse_norm(ev.feature_norm));
                    have_features = true;
                }
                names.push_back(fs::path(path).stem().string());
            }
            for (size_t i = 0; i < models.size(); ++i) {
                const FeatureMatrix* fptr =
                    variant_uses_features(models[i].variant) ? &features
                                                             : nullptr;
                reports.emplace_back(
                    names[i],
                    evaluate_model(make_scorer(models[i], fptr), split.train,
                                   holdout, cutoffs, !ev.no_exclude_train,
                                   ev.include_cold));
            }
            std::string ref = ev.reference.empty() ? names.front() : ev.reference;
            std::fputs(compare_models(reports, ref).c_str(), stdout);
            if (!ev.out.empty()) write_metrics_tsv(ev.out, reports);
        } else if (predict->parsed()) {
            Split split = load_split(pr.data_dir);
            ModelParams params = load_checkpoint_file(pr.checkpoint);
            if (params.vocab_hash != split.train.vocab_hash())
                throw VocabMismatch(
                    "checkpoint was trained on a different dataset");
            auto uit = split.train.user_index.find(pr.user);
            if (uit == split.train.user_index.end())
                throw UnknownUser("unknown user id: " + pr.user);
            if (pr.interval < 0 || pr.interval >= split.train.R)
                throw UnknownInterval("interval out of range: " +
                                      std::to_string(pr.interval));
            FeatureMatrix features;
            const FeatureMatrix* fptr = nullptr;
            if (variant_uses_features(params.variant)) {
                if (pr.features.empty())
                    throw ArgumentError(
                        "a feature-based checkpoint needs --features");
                features = load_feature_file(pr.features, split.train,
                                             parse_norm(pr.feature_norm));
                fptr = &features;
            }
            auto scorer = make_scorer(params, fptr);
            auto items = top_n(scorer, split.train, uit->second, pr.interval,
                               pr.n, true);
            for (int q : items)
                std::printf("%s\t%.6f\n", split.train.item_ids[q].c_str(),
                            scorer(uit->second, q, pr.interval));
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
