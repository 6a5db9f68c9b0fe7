#include "support.hpp"

#include <cstdlib>

#include "protex/embedding.hpp"

namespace protex::testing {

fs::path source_dir() { return PROTEX_SOURCE_DIR; }
fs::path fixture_path(const std::string& relative) { return source_dir() / "tests" / "fixtures" / relative; }
fs::path sample_dir() { return source_dir() / "data" / "sample"; }

const std::vector<std::pair<std::string, double>>& reference_weights() {
  static const std::vector<std::pair<std::string, double>> table = {
    {"gen.study_nct_id", 0.15}, {"gen.study_title", 0.08}, {"gen.protocol_id_version_date", 0.07},
    {"gen.sponsor_name", 0.05}, {"gen.phase", 0.10}, {"gen.therapeutic_area", 0.01},
    {"gen.disease_or_condition", 0.03}, {"gen.allocation", 0.02}, {"gen.masking", 0.02},
    {"gen.target_enrollment", 0.00}, {"gen.countries_and_sites", 0.00}, {"gen.timeline", 0.00},
    {"gen.primary_objectives", 0.25}, {"gen.secondary_objectives", 0.02}, {"gen.endpoints", 0.20},
    {"ie.inclusion", 0.50}, {"ie.exclusion", 0.50}, {"ie.demographics", 0.00}, {"ie.washout_period", 0.00},
    {"ae.ae_definition", 0.15}, {"ae.sae_definition", 0.20}, {"ae.severity_grading", 0.05},
    {"ae.ae_relationship", 0.02}, {"ae.reporting_timeframes", 0.12}, {"ae.ae_data_collection_requirements", 0.08},
    {"ae.reporting_contacts", 0.02}, {"ae.safety_monitoring_plan", 0.08}, {"ae.discontinuation_criteria", 0.12},
    {"ae.emergency_procedures", 0.05}, {"ae.expected_aes", 0.04}, {"ae.potential_risks", 0.03},
    {"ae.concomitant_medication_restrictions", 0.03}, {"ae.special_population_considerations", 0.01},
    {"inter.arms", 0.50}, {"inter.treatment_level_information", 0.50},
    {"site.equipment", 0.20}, {"site.certifications", 0.10}, {"site.sample_handling", 0.35}, {"site.ip_storage", 0.35},
    {"soe.schedule_of_events", 1.00},
  };
  return table;
}

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "protex-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw Error(ErrorCode::StorageError, "mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

gateway::Response ScriptedTransport::complete(const gateway::ProviderConfig&, const gateway::Request& request) {
  ++completions_;
  return {reply_(request), std::nullopt};
}

std::vector<EmbeddingVector> ScriptedTransport::embed(const gateway::ProviderConfig& cfg,
                                                      const std::vector<std::string>& texts) {
  ++embeddings_;
  std::vector<EmbeddingVector> out;
  for (const auto& t : texts) out.push_back(mock_embedding(t, cfg.embedding_dim));
  return out;
}

std::unique_ptr<gateway::Gateway> scripted_gateway(std::shared_ptr<gateway::Transport> transport,
                                                   gateway::GatewayConfig cfg) {
  auto gw = std::make_unique<gateway::Gateway>(std::move(cfg));
  for (const auto& p : gw->config().providers) gw->set_transport(p.provider_id, transport);
  return gw;
}

namespace {

const char* const kVocab[] = {"patient", "dose",   "visit",  "study",    "safety",  "arm",     "placebo",
                              "week",    "blood",  "sample", "criteria", "adverse", "event",   "site",
                              "protocol", "drug",  "screen", "consent",  "report",  "monitor", "tablet"};

}  // namespace

std::string random_words(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> pick(0, std::size(kVocab) - 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += (i % 12 == 0) ? ". " : " ";
    out += kVocab[pick(rng)];
  }
  return out;
}

std::vector<std::string> synthetic_pages(std::mt19937_64& rng, std::size_t target_words, int max_depth) {
  std::uniform_int_distribution<int> para_words(5, 80);
  std::uniform_int_distribution<int> coin(0, 99);
  std::vector<int> numbering{0};
  std::string doc;
  std::size_t words = 0;
  if (coin(rng) < 50) {
    const std::size_t n = para_words(rng);
    doc += random_words(rng, n) + "\n\n";
    words += n;
  }
  while (words < target_words) {
    const int r = coin(rng);
    if (r < 30) {
      // numbered heading at a random admissible depth
      int depth = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(std::min<int>(max_depth, numbering.size() + 1)));
      numbering.resize(depth, 0);
      ++numbering[depth - 1];
      std::string label;
      for (int i = 0; i < depth; ++i) label += std::to_string(numbering[i]) + (i + 1 < depth ? "." : "");
      if (depth == 1) label += ".";
      doc += label + " Section " + random_words(rng, 2) + "\n";
    } else if (r < 35) {
      numbering.assign(1, numbering.empty() ? 0 : numbering[0]);
      doc += "APPENDIX " + std::to_string(coin(rng)) + "\n";
    } else if (r < 38) {
      // oversized section body without paragraph breaks
      const std::size_t n = 400 + coin(rng) * 10;
      doc += random_words(rng, n) + "\n";
      words += n;
    } else {
      const std::size_t n = para_words(rng);
      doc += random_words(rng, n) + "\n\n";
      words += n;
    }
  }
  // cut into pages at line boundaries of roughly 400 words
  std::vector<std::string> pages;
  std::string page;
  std::size_t page_words = 0;
  std::size_t start = 0;
  while (start < doc.size()) {
    std::size_t nl = doc.find('\n', start);
    if (nl == std::string::npos) nl = doc.size() - 1;
    const std::string line = doc.substr(start, nl - start + 1);
    page += line;
    for (char c : line) page_words += c == ' ';
    start = nl + 1;
    if (page_words > 400) {
      pages.push_back(page);
      page.clear();
      page_words = 0;
    }
  }
  if (!page.empty() || pages.empty()) pages.push_back(page);
  return pages;
}

}  // namespace protex::testing
