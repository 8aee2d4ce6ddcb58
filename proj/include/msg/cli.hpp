#pragma once

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "msg/analysis.hpp"
#include "msg/corpus.hpp"
#include "msg/harness.hpp"
#include "msg/instructgen.hpp"
#include "msg/jsonl.hpp"
#include "msg/mcqgen.hpp"
#include "msg/remote.hpp"
#include "msg/templating.hpp"
#include "msg/types.hpp"

namespace msg::cli {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 ok, 1 validation failure, 2 operational error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitError = 2;

namespace detail {

inline std::string env_or(const char* name, const std::string& fallback = {}) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

// Provenance stamp embedded in every artifact: a hash of the semantically
// relevant configuration (output locations excluded) plus the master seed.
struct Meta {
  std::string config_hash;
  uint64_t seed = 0;

  Json to_json() const {
    return Json{{"config_hash", config_hash}, {"seed", seed}, {"tool_version", kVersion}};
  }
};

inline Meta make_meta(const Json& semantic_config, uint64_t seed) {
  Meta m;
  m.seed = seed;
  m.config_hash = str::hex64(str::fnv1a64(semantic_config.dump()));
  return m;
}

inline void emit_error(const std::string& code, const std::string& message) {
  Json err{{"error", Json{{"code", code}, {"message", message}}}};
  std::cerr << err.dump() << "\n";
}

// Identity of a corpus input for config hashing: its own provenance hash when
// the file carries one, so derived artifacts hash the same no matter where
// the corpus file sits.
inline std::string corpus_identity(const std::string& path) {
  std::ifstream in(path);
  std::string first_line;
  if (in && std::getline(in, first_line) && !first_line.empty()) {
    try {
      Json j = Json::parse(first_line);
      if (jsonl::is_meta_line(j) && j.contains("config_hash"))
        return "meta:" + j.at("config_hash").get<std::string>();
    } catch (const nlohmann::json::parse_error&) {
    }
  }
  return path;
}

// "yon:20,what:20,corr:20" -> exact per-type counts. "auto" splits `count`
// evenly over the target's applicable types (remainder to the earlier types).
inline std::map<QuestionType, size_t> parse_mcq_mix(const std::string& mix, size_t count,
                                                    GroundingTarget target) {
  std::map<QuestionType, size_t> out;
  const bool caption_target =
      target == GroundingTarget::Entity || target == GroundingTarget::Number;
  if (mix == "auto") {
    std::vector<QuestionType> types = {
        QuestionType::YesOrNo,
        caption_target ? QuestionType::FillInTheBlank : QuestionType::What,
        QuestionType::Correction};
    size_t base = count / types.size(), extra = count % types.size();
    for (size_t i = 0; i < types.size(); ++i) out[types[i]] = base + (i < extra ? 1 : 0);
    return out;
  }
  for (const auto& part : str::split_list(mix)) {
    auto kv = str::split(part, ':');
    if (kv.size() != 2) throw IoError("bad mix entry '" + part + "', expected type:count");
    auto qt = question_type_from_string(kv[0]);
    if (!qt) throw IoError("unknown question type '" + kv[0] + "' in mix");
    out[*qt] = static_cast<size_t>(std::stoull(str::trim(kv[1])));
  }
  return out;
}

// "mr:2,vp:1,fc:1" ratios scaled to exact counts summing to `count`
// (largest-remainder rounding).
inline std::map<InstructionType, size_t> parse_instruct_mix(const std::string& mix,
                                                            size_t count) {
  std::vector<std::pair<InstructionType, double>> weights;
  for (const auto& part : str::split_list(mix)) {
    auto kv = str::split(part, ':');
    if (kv.size() != 2) throw IoError("bad mix entry '" + part + "', expected type:weight");
    auto it = instruction_type_from_string(kv[0]);
    if (!it) throw IoError("unknown instruction type '" + kv[0] + "' in mix");
    weights.emplace_back(*it, std::stod(str::trim(kv[1])));
  }
  if (weights.empty()) throw IoError("empty instruction mix");
  double total = 0;
  for (auto& [t, w] : weights) total += w;
  std::map<InstructionType, size_t> out;
  std::vector<std::pair<double, InstructionType>> remainders;
  size_t assigned = 0;
  for (auto& [t, w] : weights) {
    double exact = static_cast<double>(count) * w / total;
    size_t floor_count = static_cast<size_t>(exact);
    out[t] = floor_count;
    assigned += floor_count;
    remainders.emplace_back(exact - static_cast<double>(floor_count), t);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (size_t i = 0; assigned < count && i < remainders.size(); ++i, ++assigned)
    out[remainders[i].second]++;
  return out;
}

inline std::string stored_image_path(const std::string& prefix, const fs::path& full) {
  if (prefix.empty()) return full.generic_string();
  return prefix + "/" + full.filename().generic_string();
}

struct ScorerHandle {
  std::unique_ptr<distractor::SimilarityScorer> scorer;
};

inline ScorerHandle make_scorer(const std::string& kind) {
  ScorerHandle h;
  if (kind == "lexical") {
    h.scorer = std::make_unique<distractor::LexicalScorer>();
  } else if (kind == "remote") {
    std::string endpoint = env_or("MSG_EMBED_ENDPOINT");
    if (endpoint.empty())
      throw ScorerUnavailable("--scorer remote requires MSG_EMBED_ENDPOINT");
    remote::EndpointConfig config;
    config.url = endpoint;
    config.api_key = env_or("MSG_API_KEY");
    h.scorer = std::make_unique<distractor::RemoteScorer>(remote::embed_fetch(config));
  } else {
    throw IoError("unknown scorer '" + kind + "' (expected lexical or remote)");
  }
  return h;
}

inline std::vector<MCQItem> load_suite(const fs::path& path) {
  std::vector<MCQItem> items;
  jsonl::for_each_line(path, [&](size_t, const Json& j) {
    if (jsonl::is_meta_line(j)) return;
    items.push_back(MCQItem::from_json(j));
  });
  if (items.empty()) throw EmptyCorpus("suite " + path.string() + " has no items");
  return items;
}

}  // namespace detail

// ---- shared option bundles --------------------------------------------------------

struct GenMcqOptions {
  std::string corpus;
  std::string adapter = "canonical";
  std::string template_pool = "assets/templates";
  std::string thesaurus = "assets/thesaurus";
  std::string target = "all";
  size_t count = 60;
  std::string mix = "auto";
  uint64_t seed = 0;
  double grounded_prob = 0.25;
  double sim_threshold = 0.6;
  double label_cap = 0.10;
  std::string scorer = "lexical";
  size_t concurrency = 1;
  int stroke = 3;
  std::string out = "out/suites";
  std::string images_out;
  std::string images_prefix;  // stored path prefix; defaults to images_out as typed

  Json semantic_config() const {
    return Json{{"command", "gen-mcq"},   {"corpus", detail::corpus_identity(corpus)},
                {"adapter", adapter},     {"template_pool", template_pool},
                {"thesaurus", thesaurus}, {"target", target},
                {"count", count},         {"mix", mix},
                {"seed", seed},           {"grounded_prob", grounded_prob},
                {"sim_threshold", sim_threshold}, {"label_cap", label_cap},
                {"scorer", scorer},       {"stroke", stroke}};
  }
};

struct GenInstructOptions {
  std::string corpus;
  std::string adapter = "canonical";
  std::string template_pool = "assets/templates";
  std::string thesaurus = "assets/thesaurus";
  size_t count = 1000;
  std::string mix = "mr:1,vp:1,fc:1";
  uint64_t seed = 0;
  double sim_threshold = 0.6;
  std::string scorer = "lexical";
  std::string paraphrase = "off";  // off | endpoint
  size_t concurrency = 1;
  int stroke = 3;
  std::string out = "out/instructions.jsonl";
  std::string images_out;
  std::string images_prefix;

  Json semantic_config() const {
    return Json{{"command", "gen-instruct"}, {"corpus", detail::corpus_identity(corpus)},
                {"adapter", adapter},        {"template_pool", template_pool},
                {"thesaurus", thesaurus},    {"count", count},
                {"mix", mix},                {"seed", seed},
                {"sim_threshold", sim_threshold}, {"scorer", scorer},
                {"paraphrase", paraphrase},  {"stroke", stroke}};
  }
};

// ---- subcommand implementations ------------------------------------------------------

inline int cmd_ingest(const std::string& in, const std::string& format, const std::string& out,
                      std::string report_path, uint64_t seed) {
  corpus::IngestReport report;
  auto records = corpus::ingest(in, format, &report);

  Json semantic{{"command", "ingest"}, {"in", in}, {"format", format}};
  auto meta = detail::make_meta(semantic, seed);

  jsonl::Writer writer(out);
  Json meta_line = meta.to_json();
  meta_line["image_base"] = ".";  // record paths are already resolved
  writer.write_meta(meta_line);
  for (const auto& rec : records) writer.write(corpus::record_to_json(rec));
  writer.commit();

  if (report_path.empty()) report_path = out + ".report.json";
  Json report_json = report.to_json();
  report_json["meta"] = meta.to_json();
  jsonl::write_json_file(report_path, report_json);
  std::cout << "ingested " << report.ingested << " records (" << report.dropped << " dropped) -> "
            << out << "\n";
  return kExitOk;
}

inline int cmd_gen_mcq(const GenMcqOptions& opts) {
  auto records = corpus::ingest(opts.corpus, opts.adapter);
  corpus::CorpusIndex index(std::move(records));
  auto pool = templating::load_pool(opts.template_pool);
  auto thesaurus = distractor::Thesaurus::load(opts.thesaurus);
  auto scorer = detail::make_scorer(opts.scorer);

  std::unique_ptr<visprompt::RenderCache> cache;
  if (!opts.images_out.empty())
    cache = std::make_unique<visprompt::RenderCache>(fs::path(opts.images_out));

  mcqgen::AssemblyContext ctx;
  ctx.pool = &pool;
  ctx.thesaurus = &thesaurus;
  ctx.scorer = scorer.scorer.get();
  ctx.sim_threshold = opts.sim_threshold;
  ctx.render_cache = cache.get();
  ctx.stroke = opts.stroke;

  std::vector<GroundingTarget> targets;
  if (opts.target == "all") {
    targets.assign(kAllTargets.begin(), kAllTargets.end());
  } else {
    auto t = target_from_string(opts.target);
    if (!t) throw IoError("unknown target '" + opts.target + "'");
    targets.push_back(*t);
  }

  auto meta = detail::make_meta(opts.semantic_config(), opts.seed);
  const std::string prefix =
      !opts.images_prefix.empty() ? opts.images_prefix
                                  : (opts.images_out.empty() ? "" : opts.images_out);

  std::vector<std::pair<std::string, std::string>> manifest;  // item id -> file
  const bool multi = targets.size() > 1;
  fs::path out_path(opts.out);
  if (multi) fs::create_directories(out_path);

  size_t total = 0;
  for (GroundingTarget target : targets) {
    mcqgen::SuiteSpec spec;
    spec.target = target;
    spec.mix = detail::parse_mcq_mix(opts.mix, opts.count, target);
    spec.seed = opts.seed;
    spec.grounded_probability = opts.grounded_prob;
    spec.label_cap_fraction = opts.label_cap;
    spec.concurrency = opts.concurrency;

    auto result = mcqgen::generate_suite(index, spec, ctx);
    for (auto& item : result.items) {
      if (item.rendered_image) {
        fs::path full(*item.rendered_image);
        item.rendered_image = detail::stored_image_path(prefix, full);
        manifest.emplace_back(item.id, *item.rendered_image);
      }
    }

    fs::path suite_file =
        multi ? out_path / (str::lower(to_string(target)) + ".jsonl") : out_path;
    jsonl::Writer writer(suite_file);
    writer.write_meta(meta.to_json());
    for (const auto& item : result.items) writer.write(item.to_json());
    writer.commit();

    Json summary = result.summary.to_json();
    summary["skipped"] = result.skipped;
    summary["meta"] = meta.to_json();
    jsonl::write_json_file(suite_file.string() + ".summary.json", summary);
    total += result.items.size();
    std::cout << "generated " << result.items.size() << " items -> "
              << suite_file.generic_string() << "\n";
  }

  if (cache) {
    jsonl::Writer mwriter(cache->dir() / "manifest.jsonl");
    mwriter.write_meta(meta.to_json());
    for (const auto& [id, file] : manifest)
      mwriter.write(Json{{"mcq_id", id}, {"file", file}});
    mwriter.commit();
  }
  std::cout << "total " << total << " items\n";
  return kExitOk;
}

inline int cmd_gen_instruct(const GenInstructOptions& opts) {
  auto records = corpus::ingest(opts.corpus, opts.adapter);
  corpus::CorpusIndex index(std::move(records));
  auto pool = templating::load_pool(opts.template_pool, /*require_mcq_cells=*/false);
  auto thesaurus = distractor::Thesaurus::load(opts.thesaurus);
  auto scorer = detail::make_scorer(opts.scorer);

  std::unique_ptr<visprompt::RenderCache> cache;
  if (!opts.images_out.empty())
    cache = std::make_unique<visprompt::RenderCache>(fs::path(opts.images_out));

  mcqgen::AssemblyContext ctx;
  ctx.pool = &pool;
  ctx.thesaurus = &thesaurus;
  ctx.scorer = scorer.scorer.get();
  ctx.sim_threshold = opts.sim_threshold;
  ctx.render_cache = cache.get();
  ctx.stroke = opts.stroke;

  instructgen::InstructSpec spec;
  spec.mix = detail::parse_instruct_mix(opts.mix, opts.count);
  spec.seed = opts.seed;
  spec.concurrency = opts.concurrency;

  instructgen::RewriteFn rewrite;  // null = identity
  std::shared_ptr<remote::RewriteClient> rewrite_client;
  if (opts.paraphrase == "endpoint") {
    std::string endpoint = detail::env_or("MSG_REWRITE_ENDPOINT");
    if (endpoint.empty())
      throw ServiceUnavailable("--paraphrase endpoint requires MSG_REWRITE_ENDPOINT");
    remote::EndpointConfig config;
    config.url = endpoint;
    config.api_key = detail::env_or("MSG_API_KEY");
    rewrite_client = std::make_shared<remote::RewriteClient>(config);
    rewrite = [rewrite_client](const std::string& text) { return rewrite_client->rewrite(text); };
  } else if (opts.paraphrase != "off") {
    throw IoError("--paraphrase must be 'off' or 'endpoint'");
  }

  auto result = instructgen::generate_corpus(index, spec, ctx, rewrite);
  const std::string prefix =
      !opts.images_prefix.empty() ? opts.images_prefix
                                  : (opts.images_out.empty() ? "" : opts.images_out);
  for (auto& rec : result.records)
    if (rec.rendered_image)
      rec.rendered_image = detail::stored_image_path(prefix, fs::path(*rec.rendered_image));

  auto meta = detail::make_meta(opts.semantic_config(), opts.seed);
  jsonl::Writer writer(opts.out);
  writer.write_meta(meta.to_json());
  for (const auto& rec : result.records) writer.write(rec.to_json());
  writer.commit();
  std::cout << "generated " << result.records.size() << " instruction records -> " << opts.out
            << " (skipped " << result.skipped << ")";
  if (opts.paraphrase != "off")
    std::cout << " [paraphrase: " << result.paraphrase_stats.rewritten << " rewritten, "
              << result.paraphrase_stats.rejected << " rejected, "
              << result.paraphrase_stats.service_failures << " service failures]";
  std::cout << "\n";
  return kExitOk;
}

inline int cmd_validate(const std::string& suite_path, const std::string& images_base,
                        const std::string& out) {
  auto items = detail::load_suite(suite_path);
  Json violations = Json::array();
  for (const auto& item : items) {
    auto v = mcqgen::validate(item, images_base);
    for (const auto& reason : v)
      violations.push_back(Json{{"item_id", item.id}, {"violation", reason}});
  }
  Json doc{{"suite", suite_path},
           {"items", items.size()},
           {"violations", violations},
           {"ok", violations.empty()}};
  if (out.empty()) {
    std::cout << doc.dump(2) << "\n";
  } else {
    jsonl::write_json_file(out, doc);
    std::cout << (violations.empty() ? "ok: " : "INVALID: ") << items.size() << " items, "
              << violations.size() << " violations -> " << out << "\n";
  }
  return violations.empty() ? kExitOk : kExitValidation;
}

struct EvalOptions {
  std::string suite;
  std::string respondent = "oracle";  // oracle | random | constant:<L> | remote
  uint64_t seed = 0;
  std::string model_endpoint;
  std::string model_name = "default";
  std::string out = "out/responses.jsonl";
  size_t concurrency = 1;
  bool resume = true;
  bool fallback_extract = false;
};

inline std::unique_ptr<harness::Respondent> make_respondent(const EvalOptions& opts) {
  if (opts.respondent == "oracle") return std::make_unique<harness::OracleRespondent>();
  if (opts.respondent == "random")
    return std::make_unique<harness::RandomRespondent>(opts.seed);
  if (str::starts_with(opts.respondent, "constant:"))
    return std::make_unique<harness::ConstantRespondent>(opts.respondent.substr(9));
  if (opts.respondent == "remote") {
    remote::EndpointConfig config;
    config.url = !opts.model_endpoint.empty() ? opts.model_endpoint
                                              : detail::env_or("MSG_MODEL_ENDPOINT");
    if (config.url.empty())
      throw EndpointUnreachable("remote respondent requires --model-endpoint");
    config.model = opts.model_name;
    config.api_key = detail::env_or("MSG_API_KEY");
    return std::make_unique<remote::RemoteRespondent>("remote-" + opts.model_name, config);
  }
  throw IoError("unknown respondent '" + opts.respondent +
                "' (expected oracle, random, constant:<letter>, remote)");
}

inline int cmd_eval(const EvalOptions& opts) {
  auto items = detail::load_suite(opts.suite);
  auto respondent = make_respondent(opts);

  harness::RunOptions run_opts;
  run_opts.concurrency = opts.concurrency;
  run_opts.resume = opts.resume;
  if (opts.fallback_extract) {
    std::string endpoint = detail::env_or("MSG_EXTRACT_ENDPOINT");
    if (endpoint.empty())
      throw FallbackUnavailable("--fallback-extract requires MSG_EXTRACT_ENDPOINT");
    remote::EndpointConfig config;
    config.url = endpoint;
    config.model = opts.model_name;
    config.api_key = detail::env_or("MSG_API_KEY");
    run_opts.fallback = remote::extract_fallback(config);
  }

  auto responses = harness::run_eval(*respondent, items, opts.out, run_opts);
  size_t errors = 0, unextracted = 0;
  for (const auto& r : responses) {
    if (!r.error.empty()) ++errors;
    else if (!r.letter) ++unextracted;
  }
  std::cout << "evaluated " << responses.size() << " items with " << respondent->id() << " -> "
            << opts.out << " (" << errors << " errors, " << unextracted << " unextracted)\n";
  return kExitOk;
}

inline int cmd_score(const std::string& suite_path, const std::string& responses_path,
                     const std::string& out, std::string respondent_id) {
  auto items = detail::load_suite(suite_path);
  std::vector<harness::ModelResponse> responses;
  jsonl::for_each_line(responses_path, [&](size_t, const Json& j) {
    if (jsonl::is_meta_line(j)) {
      if (respondent_id.empty() && j.contains("respondent"))
        respondent_id = j.at("respondent").get<std::string>();
      return;
    }
    responses.push_back(harness::ModelResponse::from_json(j));
  });
  auto result = harness::score(items, responses, respondent_id);
  Json doc = result.to_json();
  if (out.empty()) {
    std::cout << doc.dump(2) << "\n";
  } else {
    jsonl::write_json_file(out, doc);
    std::cout << respondent_id << ": overall " << str::format2(result.overall.accuracy())
              << " -> " << out << "\n";
  }
  return kExitOk;
}

struct AnalyzeOptions {
  std::vector<std::string> results;          // EvalResult JSON files
  std::string import_file;                   // external results (accuracy table)
  std::string import_before;                 // external gains: before/after pair
  std::string import_after;
  std::string group_by = "target";           // target | type
  double alpha = 0.05;
  std::string out = "out/report";
};

inline int cmd_analyze(const AnalyzeOptions& opts) {
  fs::create_directories(opts.out);
  fs::path out_dir(opts.out);

  std::optional<analysis::Table> table;
  std::optional<analysis::RankMatrix> matrix;

  if (!opts.import_file.empty()) {
    table = analysis::import_table_file(opts.import_file);
    matrix = analysis::rank_matrix(*table);
  } else if (!opts.results.empty()) {
    std::vector<harness::EvalResult> results;
    for (const auto& path : opts.results)
      results.push_back(harness::EvalResult::from_json(jsonl::read_json_file(path)));
    analysis::GroupKey key =
        opts.group_by == "type" ? analysis::GroupKey::Type : analysis::GroupKey::Target;
    table = analysis::accuracy_table(results, key);

    // Rank observations over the finer target x type cells when available.
    std::set<std::string> cells;
    for (const auto& r : results)
      for (const auto& [c, _] : r.by_cell) cells.insert(c);
    if (cells.size() >= 2 && results.size() >= 2) {
      analysis::RankMatrix m;
      m.observations.assign(cells.begin(), cells.end());
      for (const auto& r : results) {
        m.models.push_back(r.respondent);
        std::vector<double> row;
        for (const auto& c : m.observations) {
          auto it = r.by_cell.find(c);
          row.push_back(it == r.by_cell.end() ? 0.0 : it->second.accuracy());
        }
        m.values.push_back(std::move(row));
      }
      matrix = std::move(m);
    }
  }

  if (table) {
    std::ofstream(out_dir / "accuracy.tsv") << analysis::render_tsv(*table);
    std::ofstream(out_dir / "accuracy.txt") << analysis::render_text(*table);
    std::cout << analysis::render_text(*table);
  }

  if (!opts.import_before.empty() && !opts.import_after.empty()) {
    auto before = analysis::import_table_file(opts.import_before);
    auto after = analysis::import_table_file(opts.import_after);
    auto gains = analysis::gain_table(before, after);
    std::ofstream(out_dir / "gains.tsv") << analysis::render_gain_tsv(gains);
    std::ofstream(out_dir / "gains.txt") << analysis::render_gain_text(gains);
    std::cout << analysis::render_gain_text(gains);
  }

  if (matrix && matrix->models.size() >= 2 && matrix->observations.size() >= 2) {
    auto cd = analysis::cd_analysis(*matrix, opts.alpha);
    jsonl::write_json_file(out_dir / "cd.json", cd.to_json());
    std::ofstream(out_dir / "cd_diagram.svg") << analysis::cd_diagram_svg(cd);
    std::ofstream(out_dir / "cd_diagram.txt") << analysis::cd_diagram_text(cd);
    std::cout << analysis::cd_diagram_text(cd);
  }
  std::cout << "report -> " << opts.out << "\n";
  return kExitOk;
}

struct DemoOptions {
  std::string assets = "assets";
  std::string out = "demo-out";
  uint64_t seed = 42;
  size_t concurrency = 1;
  size_t count_per_target = 60;
  size_t instruct_count = 60;
};

inline int cmd_demo(const DemoOptions& opts) {
  fs::path out(opts.out);
  fs::create_directories(out);
  fs::path assets(opts.assets);

  Json semantic{{"command", "demo"},
                {"seed", opts.seed},
                {"count_per_target", opts.count_per_target},
                {"instruct_count", opts.instruct_count}};
  auto meta = detail::make_meta(semantic, opts.seed);

  // 1. ingest the bundled mini corpus
  int rc = cmd_ingest((assets / "minicorpus" / "records.jsonl").string(), "canonical",
                      (out / "corpus" / "canonical.jsonl").string(),
                      (out / "corpus" / "ingest_report.json").string(), opts.seed);
  if (rc != kExitOk) return rc;

  auto records = corpus::ingest(out / "corpus" / "canonical.jsonl", "canonical");
  corpus::CorpusIndex index(std::move(records));
  Json summary = corpus::summarize_corpus(index).to_json();
  summary["meta"] = meta.to_json();
  jsonl::write_json_file(out / "corpus" / "summary.json", summary);

  // 2. generate one suite per grounding target
  GenMcqOptions gen;
  gen.corpus = (out / "corpus" / "canonical.jsonl").string();
  gen.template_pool = (assets / "templates").string();
  gen.thesaurus = (assets / "thesaurus").string();
  gen.target = "all";
  gen.count = opts.count_per_target;
  gen.seed = opts.seed;
  gen.concurrency = opts.concurrency;
  gen.out = (out / "suites").string();
  gen.images_out = (out / "images").string();
  gen.images_prefix = "images";
  rc = cmd_gen_mcq(gen);
  if (rc != kExitOk) return rc;

  // 3. validate every generated suite; combine into one evaluation suite
  std::vector<MCQItem> all_items;
  Json all_violations = Json::array();
  for (GroundingTarget target : kAllTargets) {
    fs::path suite = out / "suites" / (str::lower(to_string(target)) + std::string(".jsonl"));
    auto items = detail::load_suite(suite);
    for (const auto& item : items) {
      for (const auto& v : mcqgen::validate(item, out))
        all_violations.push_back(Json{{"item_id", item.id}, {"violation", v}});
      all_items.push_back(item);
    }
  }
  Json validation{{"items", all_items.size()},
                  {"violations", all_violations},
                  {"ok", all_violations.empty()},
                  {"meta", meta.to_json()}};
  jsonl::write_json_file(out / "validation.json", validation);
  if (!all_violations.empty()) {
    detail::emit_error("validation", "demo suite failed validation");
    return kExitValidation;
  }
  {
    jsonl::Writer writer(out / "suites" / "all.jsonl");
    writer.write_meta(meta.to_json());
    for (const auto& item : all_items) writer.write(item.to_json());
    writer.commit();
  }

  // 4. a small instruction corpus from the same records
  GenInstructOptions gi;
  gi.corpus = (out / "corpus" / "canonical.jsonl").string();
  gi.template_pool = (assets / "templates").string();
  gi.thesaurus = (assets / "thesaurus").string();
  gi.count = opts.instruct_count;
  gi.seed = opts.seed;
  gi.concurrency = opts.concurrency;
  gi.out = (out / "instructions.jsonl").string();
  gi.images_out = (out / "images").string();
  gi.images_prefix = "images";
  rc = cmd_gen_instruct(gi);
  if (rc != kExitOk) return rc;

  // 5. evaluate the mock respondents and score them
  std::vector<std::string> result_files;
  struct MockSpec {
    std::string kind;
  };
  for (const std::string& kind : {"oracle", "random", "constant:A"}) {
    EvalOptions ev;
    ev.suite = (out / "suites" / "all.jsonl").string();
    ev.respondent = kind;
    ev.seed = opts.seed;
    ev.concurrency = opts.concurrency;
    auto respondent = make_respondent(ev);
    std::string id = respondent->id();
    ev.out = (out / "responses" / (id + ".jsonl")).string();
    rc = cmd_eval(ev);
    if (rc != kExitOk) return rc;
    std::string result_file = (out / "results" / (id + ".json")).string();
    rc = cmd_score(ev.suite, ev.out, result_file, id);
    if (rc != kExitOk) return rc;
    result_files.push_back(result_file);
  }

  // 6. comparison report
  AnalyzeOptions an;
  an.results = result_files;
  an.group_by = "target";
  an.out = (out / "report").string();
  rc = cmd_analyze(an);
  if (rc != kExitOk) return rc;

  Json config_dump = semantic;
  config_dump["meta"] = meta.to_json();
  jsonl::write_json_file(out / "config.json", config_dump);
  std::cout << "demo complete -> " << opts.out << "\n";
  return kExitOk;
}

// ---- entry point ---------------------------------------------------------------------

inline int run(std::vector<std::string> args) {
  CLI::App app{"Deterministic toolchain for semantic-grounding MCQ suites, fine-grained "
               "instruction corpora, and black-box model evaluation"};
  app.set_config("--config", "", "Read options from a config file (section per subcommand)");
  app.require_subcommand(1);

  // ingest
  std::string in_path, in_format = "canonical", ingest_out = "out/canonical.jsonl", report_path;
  uint64_t ingest_seed = 0;
  auto* ingest = app.add_subcommand("ingest", "Normalize source annotations into canonical records");
  ingest->add_option("--in", in_path, "Source annotation file")->required();
  ingest->add_option("--format", in_format, "Adapter id");
  ingest->add_option("--out", ingest_out, "Canonical JSONL output path");
  ingest->add_option("--report", report_path, "Ingestion report path");
  ingest->add_option("--seed", ingest_seed, "Master seed recorded in provenance");

  // gen-mcq
  GenMcqOptions mcq;
  auto* gen_mcq = app.add_subcommand("gen-mcq", "Generate multiple-choice evaluation suites");
  gen_mcq->add_option("--corpus", mcq.corpus, "Canonical corpus JSONL")->required();
  gen_mcq->add_option("--adapter", mcq.adapter, "Corpus adapter id");
  gen_mcq->add_option("--template-pool", mcq.template_pool, "Template pool directory");
  gen_mcq->add_option("--thesaurus", mcq.thesaurus, "Thesaurus directory");
  gen_mcq->add_option("--target", mcq.target, "Grounding target or 'all'");
  gen_mcq->add_option("--count", mcq.count, "Items per target");
  gen_mcq->add_option("--mix", mcq.mix, "Per-type counts, e.g. yon:20,what:20,corr:20, or 'auto'");
  gen_mcq->add_option("--seed", mcq.seed, "Master seed")->required();
  gen_mcq->add_option("--grounded-prob", mcq.grounded_prob,
                      "Probability a Correction description is already correct");
  gen_mcq->add_option("--sim-threshold", mcq.sim_threshold, "Similarity filter threshold");
  gen_mcq->add_option("--label-cap", mcq.label_cap, "Max fraction of one gold label per target");
  gen_mcq->add_option("--scorer", mcq.scorer, "Similarity backend: lexical or remote");
  gen_mcq->add_option("--concurrency", mcq.concurrency, "Worker threads");
  gen_mcq->add_option("--stroke", mcq.stroke, "Box stroke width in px (0 = auto)");
  gen_mcq->add_option("--out", mcq.out, "Output file (single target) or directory");
  gen_mcq->add_option("--images-out", mcq.images_out, "Rendered image directory");
  gen_mcq->add_option("--images-prefix", mcq.images_prefix,
                      "Path prefix stored in items for rendered images");

  // gen-instruct
  GenInstructOptions gi;
  auto* gen_instruct =
      app.add_subcommand("gen-instruct", "Generate instruction-tuning conversations");
  gen_instruct->add_option("--corpus", gi.corpus, "Canonical corpus JSONL")->required();
  gen_instruct->add_option("--adapter", gi.adapter, "Corpus adapter id");
  gen_instruct->add_option("--template-pool", gi.template_pool, "Template pool directory");
  gen_instruct->add_option("--thesaurus", gi.thesaurus, "Thesaurus directory");
  gen_instruct->add_option("--count", gi.count, "Total records");
  gen_instruct->add_option("--mix", gi.mix, "Type ratios, e.g. mr:1,vp:1,fc:1");
  gen_instruct->add_option("--seed", gi.seed, "Master seed")->required();
  gen_instruct->add_option("--paraphrase", gi.paraphrase, "off | endpoint");
  gen_instruct->add_option("--concurrency", gi.concurrency, "Worker threads");
  gen_instruct->add_option("--stroke", gi.stroke, "Box stroke width in px (0 = auto)");
  gen_instruct->add_option("--out", gi.out, "Output JSONL path");
  gen_instruct->add_option("--images-out", gi.images_out, "Rendered image directory");
  gen_instruct->add_option("--images-prefix", gi.images_prefix,
                           "Path prefix stored in records for rendered images");

  // validate
  std::string val_suite, val_images_base, val_out;
  auto* validate = app.add_subcommand("validate", "Check every item invariant in a suite");
  validate->add_option("--suite", val_suite, "Suite JSONL")->required();
  validate->add_option("--images-base", val_images_base, "Base dir for rendered image paths");
  validate->add_option("--out", val_out, "Validation report path (stdout when omitted)");

  // eval
  EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "Query a respondent over a suite");
  eval->add_option("--suite", ev.suite, "Suite JSONL")->required();
  eval->add_option("--respondent", ev.respondent,
                   "oracle | random | constant:<letter> | remote");
  eval->add_option("--seed", ev.seed, "Seed for the random respondent");
  eval->add_option("--model-endpoint", ev.model_endpoint, "Chat-completions endpoint URL");
  eval->add_option("--model-name", ev.model_name, "Model name passed to the endpoint");
  eval->add_option("--out", ev.out, "Responses JSONL path");
  eval->add_option("--concurrency", ev.concurrency, "In-flight request bound");
  eval->add_flag("--resume,!--no-resume", ev.resume, "Skip items with stored responses");
  eval->add_flag("--fallback-extract", ev.fallback_extract,
                 "Use MSG_EXTRACT_ENDPOINT when the regex cascade fails");

  // score
  std::string score_suite, score_responses, score_out, score_respondent;
  auto* score = app.add_subcommand("score", "Score stored responses against a suite");
  score->add_option("--suite", score_suite, "Suite JSONL")->required();
  score->add_option("--responses", score_responses, "Responses JSONL")->required();
  score->add_option("--out", score_out, "Result JSON path (stdout when omitted)");
  score->add_option("--respondent", score_respondent, "Respondent id recorded in the result");

  // analyze
  AnalyzeOptions an;
  auto* analyze = app.add_subcommand("analyze", "Accuracy/gain tables and CD analysis");
  analyze->add_option("--results", an.results, "Scored result JSON files");
  analyze->add_option("--import", an.import_file, "External results JSON");
  analyze->add_option("--import-before", an.import_before, "External results: baseline");
  analyze->add_option("--import-after", an.import_after, "External results: enhanced");
  analyze->add_option("--group-by", an.group_by, "target | type");
  analyze->add_option("--alpha", an.alpha, "Significance level (0.05 or 0.10)");
  analyze->add_option("--out", an.out, "Report directory");

  // demo
  DemoOptions demo;
  auto* demo_cmd =
      app.add_subcommand("demo", "Full pipeline on the bundled mini corpus with mock respondents");
  demo_cmd->add_option("--assets", demo.assets, "Bundled assets directory");
  demo_cmd->add_option("--out", demo.out, "Report directory");
  demo_cmd->add_option("--seed", demo.seed, "Master seed");
  demo_cmd->add_option("--concurrency", demo.concurrency, "Worker threads");
  demo_cmd->add_option("--count", demo.count_per_target, "MCQs per grounding target");
  demo_cmd->add_option("--instruct-count", demo.instruct_count, "Instruction records");

  std::vector<const char*> argv;
  argv.push_back("msg");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitError;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(in_path, in_format, ingest_out, report_path, ingest_seed);
    if (gen_mcq->parsed()) return cmd_gen_mcq(mcq);
    if (gen_instruct->parsed()) return cmd_gen_instruct(gi);
    if (validate->parsed()) return cmd_validate(val_suite, val_images_base, val_out);
    if (eval->parsed()) return cmd_eval(ev);
    if (score->parsed()) return cmd_score(score_suite, score_responses, score_out, score_respondent);
    if (analyze->parsed()) return cmd_analyze(an);
    if (demo_cmd->parsed()) return cmd_demo(demo);
  } catch (const Error& e) {
    detail::emit_error(e.code(), e.what());
    return kExitError;
  } catch (const std::exception& e) {
    detail::emit_error("internal", e.what());
    return kExitError;
  }
  return kExitError;
}

}  // namespace msg::cli
