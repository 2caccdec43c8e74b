#include "moedr/config.hpp"

#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

namespace moedr {

const char* to_string(InputMode v) {
  switch (v) {
    case InputMode::both: return "both";
    case InputMode::read_only: return "read_only";
    case InputMode::interview_only: return "interview_only";
  }
  return "?";
}

const char* to_string(FusionKind v) {
  switch (v) {
    case FusionKind::block: return "block";
    case FusionKind::concat: return "concat";
    case FusionKind::none: return "none";
  }
  return "?";
}

const char* to_string(EncoderTopology v) {
  return v == EncoderTopology::tiny ? "tiny" : "alexnet_like";
}

const char* to_string(HeadKind v) {
  switch (v) {
    case HeadKind::sparse_moe: return "sparse_moe";
    case HeadKind::cp_mumoe: return "cp_mumoe";
    case HeadKind::tr_mumoe: return "tr_mumoe";
    case HeadKind::dense128: return "dense128";
  }
  return "?";
}

std::uint64_t default_seed() {
  if (const char* env = std::getenv("MOEDR_SEED")) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (end && *end == '\0') return static_cast<std::uint64_t>(v);
    throw ValidationError("MOEDR_SEED is not an integer: " + std::string(env));
  }
  return 7;
}

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

struct RawValue {
  std::string text;
  std::size_t line;
};

[[noreturn]] void fail(const std::string& origin, std::size_t line, const std::string& msg) {
  throw ValidationError(origin + ":" + std::to_string(line) + ": " + msg);
}

std::string parse_string(const std::string& origin, const RawValue& v) {
  if (v.text.size() >= 2 && v.text.front() == '"' && v.text.back() == '"') {
    return v.text.substr(1, v.text.size() - 2);
  }
  fail(origin, v.line, "expected a quoted string, got " + v.text);
}

bool parse_bool(const std::string& origin, const RawValue& v) {
  if (v.text == "true") return true;
  if (v.text == "false") return false;
  fail(origin, v.line, "expected true or false, got " + v.text);
}

std::int64_t parse_int(const std::string& origin, const RawValue& v) {
  char* end = nullptr;
  const long long x = std::strtoll(v.text.c_str(), &end, 10);
  if (!end || *end != '\0' || v.text.empty()) {
    fail(origin, v.line, "expected an integer, got " + v.text);
  }
  return static_cast<std::int64_t>(x);
}

double parse_float(const std::string& origin, const RawValue& v) {
  char* end = nullptr;
  const double x = std::strtod(v.text.c_str(), &end);
  if (!end || *end != '\0' || v.text.empty()) {
    fail(origin, v.line, "expected a number, got " + v.text);
  }
  return x;
}

template <typename E>
E parse_enum(const std::string& origin, const RawValue& v,
             const std::vector<std::pair<const char*, E>>& table, const char* what) {
  const std::string s = parse_string(origin, v);
  for (const auto& [name, value] : table) {
    if (s == name) return value;
  }
  std::string allowed;
  for (const auto& [name, value] : table) {
    if (!allowed.empty()) allowed += "|";
    allowed += name;
  }
  fail(origin, v.line, std::string(what) + " must be one of " + allowed + ", got \"" + s + "\"");
}

}  // namespace

ModelConfig parse_config_text(const std::string& text, const std::string& origin) {
  std::map<std::string, RawValue> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // Strip comments outside of quotes.
    bool quoted = false;
    std::string stripped;
    for (char ch : line) {
      if (ch == '"') quoted = !quoted;
      if (ch == '#' && !quoted) break;
      stripped += ch;
    }
    stripped = trim(stripped);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) fail(origin, lineno, "expected `key = value`");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty() || value.empty()) fail(origin, lineno, "expected `key = value`");
    if (kv.count(key)) fail(origin, lineno, "duplicate key " + key);
    kv[key] = {value, lineno};
  }

  ModelConfig cfg;
  bool seed_set = false;
  auto take = [&](const char* key) -> const RawValue* {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    return &it->second;
  };

  if (const auto* v = take("inputs")) {
    cfg.inputs = parse_enum<InputMode>(origin, *v,
                                       {{"both", InputMode::both},
                                        {"read_only", InputMode::read_only},
                                        {"interview_only", InputMode::interview_only}},
                                       "inputs");
  }
  if (const auto* v = take("fusion")) {
    cfg.fusion = parse_enum<FusionKind>(origin, *v,
                                        {{"block", FusionKind::block},
                                         {"concat", FusionKind::concat},
                                         {"none", FusionKind::none}},
                                        "fusion");
  }
  if (const auto* v = take("encoder_topology")) {
    cfg.encoder_topology = parse_enum<EncoderTopology>(
        origin, *v,
        {{"tiny", EncoderTopology::tiny}, {"alexnet_like", EncoderTopology::alexnet_like}},
        "encoder_topology");
  }
  if (const auto* v = take("encoder_shared")) cfg.encoder_shared = parse_bool(origin, *v);
  if (const auto* v = take("fusion_normalize")) cfg.fusion_normalize = parse_bool(origin, *v);
  if (const auto* v = take("head")) {
    cfg.head = parse_enum<HeadKind>(origin, *v,
                                    {{"sparse_moe", HeadKind::sparse_moe},
                                     {"cp_mumoe", HeadKind::cp_mumoe},
                                     {"tr_mumoe", HeadKind::tr_mumoe},
                                     {"dense128", HeadKind::dense128}},
                                    "head");
  }
  if (const auto* v = take("embedding_dim")) cfg.embedding_dim = parse_int(origin, *v);
  if (const auto* v = take("n_experts")) cfg.n_experts = parse_int(origin, *v);
  if (const auto* v = take("top_k")) cfg.top_k = parse_int(origin, *v);
  if (const auto* v = take("cp_rank")) cfg.cp_rank = parse_int(origin, *v);
  if (const auto* v = take("tr_rank1")) cfg.tr_rank1 = parse_int(origin, *v);
  if (const auto* v = take("tr_rank2")) cfg.tr_rank2 = parse_int(origin, *v);
  if (const auto* v = take("tr_rank3")) cfg.tr_rank3 = parse_int(origin, *v);
  if (const auto* v = take("alpha")) cfg.alpha = parse_float(origin, *v);
  if (const auto* v = take("lr")) cfg.lr = parse_float(origin, *v);
  if (const auto* v = take("epochs")) cfg.epochs = parse_int(origin, *v);
  if (const auto* v = take("batch_size")) cfg.batch_size = parse_int(origin, *v);
  if (const auto* v = take("folds")) cfg.folds = parse_int(origin, *v);
  if (const auto* v = take("runs")) cfg.runs = parse_int(origin, *v);
  if (const auto* v = take("seed")) {
    cfg.seed = static_cast<std::uint64_t>(parse_int(origin, *v));
    seed_set = true;
  }
  if (!seed_set) cfg.seed = default_seed();

  static const char* known[] = {"inputs", "fusion", "encoder_topology", "encoder_shared",
                                "fusion_normalize", "head", "embedding_dim", "n_experts",
                                "top_k", "cp_rank", "tr_rank1", "tr_rank2", "tr_rank3",
                                "alpha", "lr", "epochs", "batch_size", "folds", "runs", "seed"};
  for (const auto& [key, raw] : kv) {
    bool ok = false;
    for (const char* k : known) ok = ok || key == k;
    if (!ok) fail(origin, raw.line, "unknown key " + key);
  }

  validate_config(cfg);
  return cfg;
}

ModelConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

std::string serialize_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "inputs = \"" << to_string(cfg.inputs) << "\"\n";
  os << "fusion = \"" << to_string(cfg.fusion) << "\"\n";
  os << "encoder_topology = \"" << to_string(cfg.encoder_topology) << "\"\n";
  os << "encoder_shared = " << (cfg.encoder_shared ? "true" : "false") << "\n";
  os << "fusion_normalize = " << (cfg.fusion_normalize ? "true" : "false") << "\n";
  os << "head = \"" << to_string(cfg.head) << "\"\n";
  os << "embedding_dim = " << cfg.embedding_dim << "\n";
  os << "n_experts = " << cfg.resolved_experts() << "\n";
  os << "top_k = " << cfg.top_k << "\n";
  os << "cp_rank = " << cfg.cp_rank << "\n";
  os << "tr_rank1 = " << cfg.tr_rank1 << "\n";
  os << "tr_rank2 = " << cfg.tr_rank2 << "\n";
  os << "tr_rank3 = " << cfg.tr_rank3 << "\n";
  std::ostringstream fl;
  fl.precision(17);
  fl << "alpha = " << cfg.alpha << "\n";
  fl << "lr = " << cfg.lr << "\n";
  os << fl.str();
  os << "epochs = " << cfg.epochs << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "folds = " << cfg.folds << "\n";
  os << "runs = " << cfg.runs << "\n";
  os << "seed = " << cfg.seed << "\n";
  return os.str();
}

void validate_config(const ModelConfig& cfg) {
  const bool single = cfg.inputs != InputMode::both;
  if (single && cfg.fusion != FusionKind::none) {
    throw ValidationError("fusion must be \"none\" when a single input branch is used");
  }
  if (!single && cfg.fusion == FusionKind::none) {
    throw ValidationError("fusion \"none\" requires a single input branch (inputs = read_only|interview_only)");
  }
  if (cfg.embedding_dim <= 0) throw ValidationError("embedding_dim must be positive");
  const std::int64_t n = cfg.resolved_experts();
  if (n < 1) throw ValidationError("n_experts must be >= 1");
  if (cfg.head == HeadKind::sparse_moe && (cfg.top_k < 1 || cfg.top_k > n)) {
    throw ValidationError("top_k must satisfy 1 <= top_k <= n_experts");
  }
  if (cfg.cp_rank < 1 || cfg.tr_rank1 < 1 || cfg.tr_rank2 < 1 || cfg.tr_rank3 < 1) {
    throw ValidationError("factorization ranks must be >= 1");
  }
  if (cfg.alpha < 0) throw ValidationError("alpha must be >= 0");
  if (cfg.lr <= 0) throw ValidationError("lr must be > 0");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ValidationError("epochs and batch_size must be >= 1");
  if (cfg.folds < 2) throw ValidationError("folds must be >= 2");
  if (cfg.runs < 1) throw ValidationError("runs must be >= 1");
}

}  // namespace moedr
