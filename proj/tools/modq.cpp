/*
 * Copyright 2026 The modq Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */


// modq command line tool.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "modq/modq.hpp"

namespace {

using modq::CorpusStore;

std::vector<std::size_t> parse_ks(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    std::size_t pos = 0;
    const auto v = std::stoul(part, &pos);
    if (pos != part.size() || v == 0) throw modq::Error("invalid cutoff '" + part + "'");
    ks.push_back(v);
  }
  if (ks.empty()) throw modq::Error("no cutoffs given");
  return ks;
}

std::vector<double> parse_fractions(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) out.push_back(std::stod(part));
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::size_t parse_count(const std::string& s) {
  std::size_t pos = 0;
  const auto v = std::stoul(s, &pos);
  if (pos != s.size()) throw modq::Error("not a count: '" + s + "'");
  return v;
}

/// set1 / set2 (chronological halves), all, or a file of article ids.
modq::ArticleSet resolve_articles(const CorpusStore& corpus, const std::string& which, double chrono) {
  if (which == "all") {
    modq::ArticleSet all;
    for (const auto& [id, a] : corpus.articles()) all.push_back(id);
    return all;
  }
  if (which == "set1" || which == "set2") {
    auto [s1, s2] = modq::chronological_split(corpus, chrono);
    return which == "set1" ? s1 : s2;
  }
  std::ifstream in(which);
  if (!in) throw modq::Error("--articles must be set1, set2, all or a readable file: " + which);
  modq::ArticleSet out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    corpus.article(line);  // throws on unknown ids
    out.push_back(line);
  }
  return out;
}

std::unique_ptr<modq::EmbeddingTable> maybe_embeddings(const std::string& path) {
  if (path.empty()) return nullptr;
  return std::make_unique<modq::EmbeddingTable>(modq::load_embeddings(path));
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw modq::Error("cannot write " + path);
  out << body;
}

httplib::Server* g_server = nullptr;
void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modq: rank news comments by predicted probability of being featured"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a comment JSONL file and print its manifest");
  std::string ingest_path, ingest_out;
  ingest->add_option("path", ingest_path, "Comment JSONL")->required();
  ingest->add_option("--out", ingest_out, "Write the canonical (sorted, cleaned) corpus here");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted signal");
  modq::SynthConfig synth_cfg;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  synth->add_option("--articles", synth_cfg.n_articles, "Number of articles")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output JSONL")->required();
  synth->add_option("--mean-comments", synth_cfg.mean_comments)->capture_default_str();
  synth->add_option("--users", synth_cfg.n_users)->capture_default_str();
  synth->add_option("--featured-mean", synth_cfg.featured_mean)->capture_default_str();
  synth->add_option("--noise", synth_cfg.noise)->capture_default_str();

  // split
  auto* split = app.add_subcommand("split", "Chronological, train/val/test and downsampling split");
  std::string split_corpus, split_out, split_tvt = "0.8,0.1,0.1";
  modq::SplitSpec split_spec;
  split->add_option("--corpus", split_corpus, "Comment JSONL")->required();
  split->add_option("--chrono", split_spec.chrono_fraction, "Share of articles in set 1")->capture_default_str();
  split->add_option("--tvt", split_tvt, "Train,validation,test fractions")->capture_default_str();
  split->add_option("--downsample", split_spec.downsample_ratio, "Featured share after downsampling")
      ->capture_default_str();
  split->add_option("--seed", split_spec.seed)->capture_default_str();
  split->add_option("--out", split_out, "Write the split plan (JSON) here");

  // train
  auto* train = app.add_subcommand("train", "Train a model preset");
  std::string train_corpus, train_split, train_out, train_preset = "rf_bow", train_emb, train_rows = "downsampled";
  std::uint64_t train_seed = 0;
  std::size_t train_workers = 1;
  train->add_option("--corpus", train_corpus, "Comment JSONL")->required();
  train->add_option("--split", train_split, "Split plan from `modq split`")->required();
  train->add_option("--preset", train_preset, "rf, rf_bow or rf_emb")->capture_default_str();
  train->add_option("--rows", train_rows, "downsampled or train")->capture_default_str();
  train->add_option("--embeddings", train_emb, "Embedding table (required for rf_emb)");
  train->add_option("--seed", train_seed)->capture_default_str();
  train->add_option("--workers", train_workers)->capture_default_str();
  train->add_option("--out", train_out, "Model file")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "NDCG@k and classification metrics per article set");
  std::string eval_model, eval_corpus, eval_articles = "set2", eval_k = "3,5,10", eval_emb, eval_json;
  double eval_chrono = 0.5;
  std::size_t eval_random = 100;
  std::uint64_t eval_seed = 0;
  eval->add_option("--model", eval_model, "Model file")->required();
  eval->add_option("--corpus", eval_corpus, "Comment JSONL")->required();
  eval->add_option("--articles", eval_articles, "set1, set2, all or a file of article ids")->capture_default_str();
  eval->add_option("--chrono", eval_chrono, "Share of articles in set 1")->capture_default_str();
  eval->add_option("--k", eval_k, "Comma separated cutoffs")->capture_default_str();
  eval->add_option("--embeddings", eval_emb);
  eval->add_option("--random-shuffles", eval_random, "Shuffles for the random ranker (0 disables)")
      ->capture_default_str();
  eval->add_option("--seed", eval_seed, "Seed of the random ranker")->capture_default_str();
  eval->add_option("--json", eval_json, "Also write the full report as JSON");

  // explain
  auto* explain = app.add_subcommand("explain", "Per-feature contributions of one comment's score");
  std::string ex_model, ex_corpus, ex_comment, ex_emb;
  std::size_t ex_top = 15;
  explain->add_option("--model", ex_model)->required();
  explain->add_option("--corpus", ex_corpus)->required();
  explain->add_option("--comment", ex_comment)->required();
  explain->add_option("--embeddings", ex_emb);
  explain->add_option("--top", ex_top, "Contributions to print (0 prints all)")->capture_default_str();

  // error-analysis
  auto* errs = app.add_subcommand("error-analysis", "Mean feature values and contributions per outcome");
  std::string ea_model, ea_corpus, ea_articles = "set2", ea_emb, ea_json;
  double ea_chrono = 0.5;
  std::size_t ea_k = 5, ea_top = 10;
  errs->add_option("--model", ea_model)->required();
  errs->add_option("--corpus", ea_corpus)->required();
  errs->add_option("--articles", ea_articles)->capture_default_str();
  errs->add_option("--chrono", ea_chrono)->capture_default_str();
  errs->add_option("--k", ea_k)->capture_default_str();
  errs->add_option("--top", ea_top, "Features per report")->capture_default_str();
  errs->add_option("--embeddings", ea_emb);
  errs->add_option("--json", ea_json, "Also write both reports as JSON");

  // grid
  auto* grid = app.add_subcommand("grid", "Hyperparameter grid scored on the validation split");
  std::string gr_corpus, gr_split, gr_preset = "rf", gr_rows = "downsampled", gr_emb, gr_json;
  std::string gr_trees, gr_depth, gr_min_split, gr_max_features;
  std::size_t gr_k = 5, gr_workers = 1;
  std::uint64_t gr_seed = 0;
  grid->add_option("--corpus", gr_corpus)->required();
  grid->add_option("--split", gr_split, "Split plan from `modq split`")->required();
  grid->add_option("--preset", gr_preset, "Feature set and base hyperparameters")->capture_default_str();
  grid->add_option("--rows", gr_rows, "downsampled or train")->capture_default_str();
  grid->add_option("--n-estimators", gr_trees, "e.g. 100,200");
  grid->add_option("--max-depth", gr_depth, "e.g. 10,20,none");
  grid->add_option("--min-split", gr_min_split, "e.g. 2,10");
  grid->add_option("--max-features", gr_max_features, "sqrt, all or a count, e.g. sqrt,all,8");
  grid->add_option("--k", gr_k)->capture_default_str();
  grid->add_option("--seed", gr_seed)->capture_default_str();
  grid->add_option("--workers", gr_workers)->capture_default_str();
  grid->add_option("--embeddings", gr_emb);
  grid->add_option("--json", gr_json, "Write all results as JSON");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP API for moderators");
  std::string sv_model, sv_corpus, sv_addr = "127.0.0.1:8080", sv_picks = "picks.jsonl", sv_emb;
  serve->add_option("--model", sv_model)->required();
  serve->add_option("--corpus", sv_corpus)->required();
  serve->add_option("--addr", sv_addr, "host:port")->capture_default_str();
  serve->add_option("--picks", sv_picks, "Pick log (JSONL)")->capture_default_str();
  serve->add_option("--embeddings", sv_emb);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const auto corpus = modq::ingest_comments(ingest_path);
      const auto& m = corpus.manifest();
      nlohmann::json out = {{"records", m.records},
                            {"rejected_records", m.rejected_records},
                            {"orphan_replies", m.orphan_replies},
                            {"articles", corpus.articles().size()},
                            {"file_digests", m.file_digests},
                            {"diagnostics", m.diagnostics}};
      std::cout << out.dump(2) << '\n';
      if (!ingest_out.empty()) modq::write_jsonl(corpus, ingest_out);
    } else if (*synth) {
      const auto corpus = modq::synth_generate(synth_cfg, synth_seed);
      modq::write_jsonl(corpus, synth_out);
      std::size_t featured = 0;
      for (const auto& c : corpus.comments()) featured += c.featured();
      std::cout << "wrote " << corpus.size() << " comments (" << featured << " featured) in "
                << corpus.articles().size() << " articles to " << synth_out << '\n';
    } else if (*split) {
      const auto f = parse_fractions(split_tvt);
      if (f.size() != 3) throw modq::Error("--tvt needs three comma separated fractions");
      split_spec.train_fraction = f[0];
      split_spec.validation_fraction = f[1];
      split_spec.test_fraction = f[2];
      const auto corpus = modq::ingest_comments(split_corpus);
      const auto plan = modq::make_split_plan(corpus, split_spec);
      const auto j = modq::to_json(corpus, plan);
      std::cout << nlohmann::json{{"set1_articles", plan.set1.size()},
                                  {"set2_articles", plan.set2.size()},
                                  {"summary", j.at("summary")}}
                       .dump(2)
                << '\n';
      if (!split_out.empty()) modq::save_split_plan(corpus, plan, split_out);
    } else if (*train) {
      const auto corpus = modq::ingest_comments(train_corpus);
      const auto plan = modq::load_split_plan(corpus, train_split);
      if (train_rows != "downsampled" && train_rows != "train") {
        throw modq::Error("--rows must be downsampled or train");
      }
      const auto& rows = train_rows == "train" ? plan.tvt.train : plan.train_downsampled;
      const auto emb = maybe_embeddings(train_emb);
      const auto model = modq::train_preset(modq::parse_preset(train_preset), corpus, rows, train_seed,
                                            emb.get(), train_workers);
      modq::save_model(model, train_out);
      std::cout << "trained " << train_preset << " on " << rows.size() << " rows ("
                << model.forest.schema.size() << " features); digest " << modq::model_digest(model)
                << '\n';
    } else if (*eval) {
      const auto ks = parse_ks(eval_k);
      const auto corpus = modq::ingest_comments(eval_corpus);
      const auto model = modq::load_model(eval_model);
      const auto emb = maybe_embeddings(eval_emb);
      const auto articles = resolve_articles(corpus, eval_articles, eval_chrono);
      std::vector<modq::EvaluationReport> reports;
      reports.push_back(modq::evaluate_articles(modq::ForestScorer(model, corpus, emb.get()), corpus,
                                                articles, ks, "model"));
      reports.push_back(
          modq::evaluate_articles(modq::BaselineScorer(corpus), corpus, articles, ks, "baseline"));
      std::cout << modq::format_reports(reports);
      nlohmann::json out = {{"model", reports[0].to_json()}, {"baseline", reports[1].to_json()}};
      if (eval_random > 0) {
        const auto random = modq::random_ranker_ndcg(corpus, articles, ks, eval_random, eval_seed);
        std::cout << "random ranker (" << eval_random << " shuffles):";
        nlohmann::json means;
        for (std::size_t j = 0; j < ks.size(); ++j) {
          std::printf("  NDCG@%zu %.2f", ks[j], random[j]);
          means[std::to_string(ks[j])] = random[j];
        }
        std::cout << std::flush;
        std::printf("\n");
        out["random"] = {{"shuffles", eval_random}, {"mean_ndcg", means}};
      }
      if (!eval_json.empty()) write_text(eval_json, out.dump(2) + "\n");
    } else if (*explain) {
      const auto corpus = modq::ingest_comments(ex_corpus);
      const auto model = modq::load_model(ex_model);
      const auto emb = maybe_embeddings(ex_emb);
      const modq::ForestScorer scorer(model, corpus, emb.get());
      const auto i = corpus.find(ex_comment);
      if (!i) throw modq::NotFoundError("unknown comment: " + ex_comment);
      const auto b = modq::decompose_comment(scorer, *i);
      std::printf("comment %s  predicted %.6f  bias %.6f\n", ex_comment.c_str(), b.predicted, b.bias);
      std::size_t shown = 0;
      for (const auto& [f, c] : b.ranked()) {
        if (ex_top != 0 && shown++ == ex_top) break;
        std::printf("  %-32s %+.6f\n", model.forest.schema.names[f].c_str(), c);
      }
    } else if (*errs) {
      const auto corpus = modq::ingest_comments(ea_corpus);
      const auto model = modq::load_model(ea_model);
      const auto emb = maybe_embeddings(ea_emb);
      const modq::ForestScorer scorer(model, corpus, emb.get());
      const auto articles = resolve_articles(corpus, ea_articles, ea_chrono);
      const auto result = modq::error_analysis(scorer, articles, ea_k, modq::kProbabilityThreshold, ea_top);
      std::cout << result.rank_based.to_text() << '\n' << result.threshold_based.to_text();
      if (!ea_json.empty()) {
        write_text(ea_json, nlohmann::json{{"rank", result.rank_based.to_json()},
                                           {"threshold", result.threshold_based.to_json()}}
                                    .dump(2) +
                                "\n");
      }
    } else if (*grid) {
      const auto corpus = modq::ingest_comments(gr_corpus);
      const auto plan = modq::load_split_plan(corpus, gr_split);
      if (gr_rows != "downsampled" && gr_rows != "train") throw modq::Error("--rows must be downsampled or train");
      const auto& rows = gr_rows == "train" ? plan.tvt.train : plan.train_downsampled;
      const auto emb = maybe_embeddings(gr_emb);
      const auto preset = modq::parse_preset(gr_preset);
      modq::GridSpec spec;
      for (const auto& v : split_list(gr_trees)) spec.n_estimators.push_back(parse_count(v));
      for (const auto& v : split_list(gr_depth)) {
        spec.max_depth.push_back(v == "none" ? std::nullopt : std::optional<std::size_t>(parse_count(v)));
      }
      for (const auto& v : split_list(gr_min_split)) spec.min_samples_split.push_back(parse_count(v));
      for (const auto& v : split_list(gr_max_features)) {
        spec.max_features.push_back(v == "sqrt"  ? modq::MaxFeatures::sqrt()
                                    : v == "all" ? modq::MaxFeatures::all()
                                                 : modq::MaxFeatures::fixed(parse_count(v)));
      }
      const auto features = modq::preset_features(preset, corpus, rows, emb.get());
      const auto results = modq::grid_search(corpus, features, rows, plan.tvt.validation, spec,
                                             modq::preset_hyperparams(preset, gr_seed), gr_k, gr_workers, emb.get());
      std::printf("%-6s %-6s %-6s %-10s %10s %8s\n", "trees", "depth", "split", "features",
                  ("NDCG@" + std::to_string(gr_k)).c_str(), "F1");
      nlohmann::json all = nlohmann::json::array();
      for (const auto& r : results) {
        const auto& hp = r.hyperparams;
        const auto mf = hp.max_features.kind == modq::MaxFeatures::Kind::kSqrt  ? std::string("sqrt")
                        : hp.max_features.kind == modq::MaxFeatures::Kind::kAll ? std::string("all")
                                                                                : std::to_string(hp.max_features.k);
        std::printf("%-6zu %-6s %-6zu %-10s %10s %8.3f\n", hp.n_estimators,
                    hp.max_depth ? std::to_string(*hp.max_depth).c_str() : "none", hp.min_samples_split, mf.c_str(),
                    r.mean_ndcg ? std::to_string(*r.mean_ndcg).substr(0, 6).c_str() : "-", r.classification.f1);
        all.push_back(r.to_json());
      }
      if (!gr_json.empty()) write_text(gr_json, all.dump(2) + "\n");
    } else if (*serve) {
      const auto colon = sv_addr.rfind(':');
      if (colon == std::string::npos) throw modq::Error("--addr must be host:port");
      const auto host = sv_addr.substr(0, colon);
      const int port = std::stoi(sv_addr.substr(colon + 1));
      auto corpus = std::make_shared<const CorpusStore>(modq::ingest_comments(sv_corpus));
      auto model = std::make_shared<const modq::Model>(modq::load_model(sv_model));
      std::shared_ptr<const modq::EmbeddingTable> emb = maybe_embeddings(sv_emb);
      modq::Service service(corpus, model, emb, sv_picks);
      auto server = modq::make_http_server(service);
      g_server = server.get();
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "modq: serving model " << service.model_version() << " on " << host << ':' << port
                << '\n';
      if (!server->listen(host, port)) throw modq::Error("cannot listen on " + sv_addr);
    }
  } catch (const std::exception& e) {
    std::cerr << "modq: error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
