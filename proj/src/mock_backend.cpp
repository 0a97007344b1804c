#include "damagepipe/mock_backend.hpp"

#include <array>
#include <charconv>
#include <random>
#include <regex>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "damagepipe/errors.hpp"
#include "damagepipe/prompts.hpp"
#include "damagepipe/synthetic.hpp"

namespace damagepipe::inference {

using json = nlohmann::json;

namespace {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct BadRequest {
  int status;
  std::string message;
};

struct Canned {
  std::array<std::string_view, 2> reasoning;
  std::vector<std::string_view> hazards;
  std::vector<std::string_view> characteristics;
  std::vector<std::string_view> recommendations;
};

const std::array<Canned, 4>& canned() {
  static const std::array<Canned, 4> table = {{
      {{"The building footprint and roof match the pre-disaster image; the image is slightly "
        "blurry but no structural change is visible.",
        "No visible damage to roof or walls; quality of the post-disaster image limits fine "
        "detail but the structure appears intact."},
       {"minor debris in the yard"},
       {"intact roof", "walls standing"},
       {"routine inspection", "no immediate action required"}},
      {{"Moderate roof damage with missing shingles on one side; the walls remain standing.",
        "The roof shows moderate damage and some debris; the structure is otherwise intact."},
       {"loose roofing material", "scattered debris"},
       {"partial roof damage", "walls intact"},
       {"secure loose roof elements before entry", "wear head protection"}},
      {{"Significant structural damage: partial collapse of the roof and one exterior wall.",
        "Major damage with significant structural deformation and partial roof collapse."},
       {"unstable walls", "risk of further collapse", "exposed wiring"},
       {"partial collapse", "significant structural deformation"},
       {"do not enter without shoring", "establish a safety perimeter"}},
      {{"Total collapse of the building; structural failure across the whole footprint and a "
        "debris field where the roof was.",
        "The structure is totally destroyed: total collapse with structural failure of all "
        "load-bearing walls."},
       {"total collapse debris", "gas leak risk", "sharp debris"},
       {"total collapse", "structural failure", "no standing walls"},
       {"search and rescue with heavy equipment only", "cordon off the site"}},
  }};
  return table;
}

json to_array(const std::vector<std::string_view>& items) {
  json out = json::array();
  for (auto s : items) out.push_back(std::string(s));
  return out;
}

std::optional<int> level_from_images(const json& images) {
  if (!images.is_array() || images.empty()) return std::nullopt;
  const auto& post = images.back();  // post image is last when both are present
  try {
    return synthetic::dominant_level(png::decode(base64_decode(post.get<std::string>())));
  } catch (const Error&) {
    return std::nullopt;
  }
}

}  // namespace

MockBackend::MockBackend(MockOptions options) : options_(options) {
  if (options_.embedding_dim < 1) throw ConfigError("mock embedding_dim must be >= 1");
}

HttpResponse MockBackend::post(std::string_view route, const std::string& body,
                               std::chrono::duration<double>) {
  if (options_.unreachable) {
    {
      std::lock_guard lock(mutex_);
      ++route_calls_[std::string(route)];
    }
    ++calls_;
    throw TransportFailure(fmt::format("mock {}: connection refused", route));
  }
  return handle(route, body);
}

HttpResponse MockBackend::handle(std::string_view route, const std::string& body) {
  {
    std::lock_guard lock(mutex_);
    ++route_calls_[std::string(route)];
  }
  ++calls_;
  try {
    if (route == "/api/chat") return {200, chat(body)};
    if (route == "/api/tokenize") return {200, tokenize(body)};
    if (route == "/api/embed") return {200, embed(body)};
    if (route == "/api/upscale") return {200, upscale(body)};
    if (route == "/api/detect") return {200, detect(body)};
    return {404, json{{"error", fmt::format("unknown route {}", route)}}.dump()};
  } catch (const BadRequest& e) {
    return {e.status, json{{"error", e.message}}.dump()};
  } catch (const json::exception& e) {
    return {400, json{{"error", e.what()}}.dump()};
  } catch (const Error& e) {
    return {400, json{{"error", e.what()}}.dump()};
  }
}

long MockBackend::calls(std::string_view route) const {
  std::lock_guard lock(mutex_);
  auto it = route_calls_.find(route);
  return it == route_calls_.end() ? 0 : it->second;
}

void MockBackend::reset_counters() {
  std::lock_guard lock(mutex_);
  route_calls_.clear();
  calls_ = 0;
}

std::string MockBackend::chat(const std::string& body) {
  const json req = json::parse(body);
  const auto prompt = req.at("prompt").get<std::string>();
  const std::uint64_t h = fnv1a(body, options_.seed ^ 0xcbf29ce484222325ULL);
  const bool repaired = prompt.find(prompts::kRepairInstruction) != std::string::npos;
  const bool jury = prompt.find(prompts::kJuryPersona) != std::string::npos;
  const bool assessment = !jury && prompt.find("\"category\"") != std::string::npos;

  if ((jury || assessment) && options_.garbage_first && !repaired) {
    return json{{"response", "I am unable to provide an assessment in that format."}}.dump();
  }

  std::optional<int> level = synthetic::find_category_marker(prompt);
  if (!level) level = level_from_images(req.value("images", json::array()));

  if (jury) {
    static const std::regex claimed_re(R"re("category"\s*:\s*([0-9]+))re");
    std::smatch m;
    std::optional<int> claimed;
    if (std::regex_search(prompt, m, claimed_re)) claimed = std::stoi(m[1].str());
    double score;
    std::string accuracy;
    if (claimed && level && *claimed == *level) {
      score = 80.0 + static_cast<double>(h % 21);
      accuracy = "correct";
    } else if (claimed && level) {
      score = 35.0 + static_cast<double>(h % 30);
      accuracy = fmt::format("incorrect, expected category {}", *level);
    } else {
      score = 50.0 + static_cast<double>(h % 40);
      accuracy = "cannot verify";
    }
    const json verdict = {{"score", score},
                          {"classification_accuracy", accuracy},
                          {"reasoning", "Assessment checked against the visible damage."}};
    return json{{"response", "```json\n" + verdict.dump(2) + "\n```"}}.dump();
  }

  if (assessment) {
    int cat = (level && *level >= 1 && *level <= 4) ? *level : 1 + static_cast<int>(h % 4);
    // With misread on, each model gets a fixed share (5-30%) of images wrong by one level.
    const auto model = req.value("model", std::string());
    const std::uint64_t error_pct = 5 + fnv1a(model, options_.seed ^ 0xcbf29ce484222325ULL) % 26;
    if (options_.misread && level && (h >> 16) % 100 < error_pct) cat = cat == 4 ? 3 : cat + 1;
    const Canned& c = canned()[cat - 1];
    const json a = {{"category", cat},
                    {"reasoning", std::string(c.reasoning[h % 2])},
                    {"hazards", to_array(c.hazards)},
                    {"characteristics", to_array(c.characteristics)},
                    {"recommendations", to_array(c.recommendations)}};
    return json{{"response", "Here is my assessment.\n```json\n" + a.dump(2) + "\n```\n"}}.dump();
  }

  return json{{"response", fmt::format("mock reply {:016x}", h)}}.dump();
}

std::string MockBackend::tokenize(const std::string& body) {
  const json req = json::parse(body);
  if (req.value("decode", false)) {
    const auto ids = req.at("tokens").get<std::vector<std::int64_t>>();
    if (ids.empty()) throw BadRequest{400, "empty token list"};
    std::string text;
    std::lock_guard lock(mutex_);
    for (auto id : ids) {
      auto it = vocabulary_.find(id);
      if (it == vocabulary_.end()) throw BadRequest{400, fmt::format("unknown token id {}", id)};
      if (!text.empty()) text += ' ';
      text += it->second;
    }
    return json{{"text", text}}.dump();
  }

  const auto text = req.at("text").get<std::string>();
  if (text.empty()) throw BadRequest{400, "empty text"};
  std::istringstream words(text);
  std::vector<std::int64_t> ids;
  std::lock_guard lock(mutex_);
  for (std::string w; words >> w;) {
    const auto id = static_cast<std::int64_t>(fnv1a(w) & 0x7fffffffULL);
    vocabulary_.try_emplace(id, w);
    ids.push_back(id);
  }
  if (ids.empty()) throw BadRequest{400, "text has no tokens"};
  return json{{"tokens", ids}}.dump();
}

std::string MockBackend::embed(const std::string& body) {
  const json req = json::parse(body);
  std::string payload;
  if (auto t = req.find("text"); t != req.end()) {
    payload = "text:" + t->get<std::string>();
  } else if (auto i = req.find("image"); i != req.end()) {
    payload = "image:" + i->get<std::string>();
  } else {
    throw BadRequest{400, "embed needs \"text\" or \"image\""};
  }
  if (payload.size() <= 6) throw BadRequest{400, "empty payload"};
  std::mt19937_64 rng(fnv1a(payload) ^ (options_.seed * 0x9e3779b97f4a7c15ULL));
  std::vector<double> v(static_cast<std::size_t>(options_.embedding_dim));
  for (double& x : v) {
    x = 3.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53 * 2.0 - 1.0);
  }
  return json{{"embedding", v}}.dump();
}

std::string MockBackend::upscale(const std::string& body) {
  const json req = json::parse(body);
  const int factor = req.at("factor").get<int>();
  if (factor < 1 || factor > 8) throw BadRequest{400, fmt::format("bad factor {}", factor)};
  Raster out = png::decode(base64_decode(req.at("image").get<std::string>()))
                   .upscale_nearest(factor);
  if (options_.wrong_upscale_dims) out = out.crop(0, 0, out.width() - 1, out.height());
  return json{{"image", base64_encode(png::encode(out))}}.dump();
}

std::string MockBackend::detect(const std::string& body) {
  const json req = json::parse(body);
  const Raster image = png::decode(base64_decode(req.at("image").get<std::string>()));
  json dets = json::array();
  for (const auto& obj : synthetic::decode(image)) {
    dets.push_back({{"box", {obj.box.x_min(), obj.box.y_min(), obj.box.x_max(), obj.box.y_max()}},
                    {"confidence", obj.confidence},
                    {"class", obj.building ? "building" : "vehicle"}});
  }
  return json{{"detections", dets}}.dump();
}

MockOptions parse_mock_url(std::string_view url) {
  MockOptions opt;
  const auto q = url.find('?');
  if (q == std::string_view::npos) return opt;
  std::string_view query = url.substr(q + 1);
  while (!query.empty()) {
    const auto amp = query.find('&');
    const std::string_view kv = query.substr(0, amp);
    query = amp == std::string_view::npos ? std::string_view{} : query.substr(amp + 1);
    const auto eq = kv.find('=');
    const std::string_view key = kv.substr(0, eq);
    const std::string_view value = eq == std::string_view::npos ? "1" : kv.substr(eq + 1);
    long long n = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), n);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
      throw ConfigError(fmt::format("mock URL parameter {} needs an integer", key));
    }
    if (key == "seed") {
      opt.seed = static_cast<std::uint64_t>(n);
    } else if (key == "dim") {
      opt.embedding_dim = static_cast<int>(n);
    } else if (key == "garbage_first") {
      opt.garbage_first = n != 0;
    } else if (key == "wrong_upscale_dims") {
      opt.wrong_upscale_dims = n != 0;
    } else if (key == "unreachable") {
      opt.unreachable = n != 0;
    } else if (key == "misread") {
      opt.misread = n != 0;
    } else {
      throw ConfigError(fmt::format("unknown mock URL parameter '{}'", key));
    }
  }
  return opt;
}

std::shared_ptr<MockBackend> shared_mock(const std::string& url) {
  static std::mutex mutex;
  static std::map<std::string, std::shared_ptr<MockBackend>> registry;
  std::lock_guard lock(mutex);
  auto& slot = registry[url];
  if (!slot) slot = std::make_shared<MockBackend>(parse_mock_url(url));
  return slot;
}

}  // namespace damagepipe::inference
