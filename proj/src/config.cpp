#include "invagg/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <system_error>
#include <unistd.h>

namespace invagg::config {

namespace {

/// Reads one JSON object, tracking which keys were consumed so leftovers
/// can be reported as unknown.
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(display(), "expected an object");
    }

    const Json* find(const char* key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    void get(const char* key, double& out) {
        if (const Json* v = find(key)) out = as_double(*v, field(key));
    }
    void get(const char* key, std::size_t& out) {
        if (const Json* v = find(key)) out = as_size(*v, field(key));
    }
    void get(const char* key, std::uint64_t& out, int /*tag*/) {
        if (const Json* v = find(key)) out = as_u64(*v, field(key));
    }
    void get(const char* key, bool& out) {
        if (const Json* v = find(key)) {
            if (!v->is_boolean()) throw ValidationError(field(key), "expected a boolean");
            out = v->get<bool>();
        }
    }
    void get(const char* key, std::string& out) {
        if (const Json* v = find(key)) {
            if (!v->is_string()) throw ValidationError(field(key), "expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const char* key, std::optional<double>& out) {
        if (const Json* v = find(key)) {
            out = v->is_null() ? std::nullopt : std::optional<double>(as_double(*v, field(key)));
        }
    }
    void get(const char* key, std::optional<std::size_t>& out) {
        if (const Json* v = find(key)) {
            out = v->is_null() ? std::nullopt : std::optional<std::size_t>(as_size(*v, field(key)));
        }
    }
    void get(const char* key, Vector& out) {
        if (const Json* v = find(key)) out = as_vector(*v, field(key));
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.count(key)) throw ValidationError(field(key.c_str()), "unknown key");
        }
    }

    static double as_double(const Json& v, const std::string& f) {
        if (!v.is_number()) throw ValidationError(f, "expected a number");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw ValidationError(f, "must be finite");
        return d;
    }
    static std::uint64_t as_u64(const Json& v, const std::string& f) {
        if (v.is_number_unsigned()) return v.get<std::uint64_t>();
        if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::uint64_t>();
        throw ValidationError(f, "expected a non-negative integer");
    }
    static std::size_t as_size(const Json& v, const std::string& f) {
        return static_cast<std::size_t>(as_u64(v, f));
    }
    static Vector as_vector(const Json& v, const std::string& f) {
        if (!v.is_array()) throw ValidationError(f, "expected an array of numbers");
        Vector out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(as_double(v[i], f + "[" + std::to_string(i) + "]"));
        }
        return out;
    }

private:
    std::string display() const { return path_.empty() ? "<root>" : path_; }

    const Json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class T>
Json optional_json(const std::optional<T>& v) {
    return v ? Json(*v) : Json(nullptr);
}

synthdata::GaussianClientSpec client_from_json(const Json& j, std::size_t index) {
    ObjectReader r(j, "scenario.clients[" + std::to_string(index) + "]");
    synthdata::GaussianClientSpec c;
    c.client_id = index;
    r.get("malicious", c.is_malicious);
    r.get("mu", c.mu);
    r.get("sigma", c.sigma);
    r.get("label_balance", c.label_balance);
    r.finish();
    return c;
}

ScenarioSection scenario_from_json(const Json& j) {
    ObjectReader r(j, "scenario");
    ScenarioSection s;
    r.get("recipe", s.recipe);
    r.get("samples_per_client", s.samples_per_client);
    r.get("eval_samples", s.eval_samples);
    if (s.recipe == "appendix_d1") {
        r.get("num_clients", s.num_clients);
        r.get("num_malicious", s.num_malicious);
        r.get("epsilon_std", s.epsilon_std);
    } else if (s.recipe == "custom") {
        r.get("initial_weights", s.initial_weights);
        if (const Json* t = r.find("trigger")) {
            ObjectReader tr(*t, "scenario.trigger");
            tr.get("feature_index", s.trigger.feature_index);
            tr.get("mu", s.trigger.trigger_mu);
            tr.get("sigma", s.trigger.trigger_sigma);
            std::size_t label = static_cast<std::size_t>(s.trigger.target_label);
            tr.get("target_label", label);
            if (label > 1) throw ValidationError("scenario.trigger.target_label", "must be 0 or 1");
            s.trigger.target_label = static_cast<int>(label);
            tr.finish();
        }
        const Json* clients = r.find("clients");
        if (!clients || !clients->is_array() || clients->empty()) {
            throw ValidationError("scenario.clients", "custom recipe needs a nonempty client list");
        }
        for (std::size_t i = 0; i < clients->size(); ++i) {
            s.clients.push_back(client_from_json((*clients)[i], i));
        }
        s.num_clients = s.clients.size();
        s.num_malicious = 0;
        for (const auto& c : s.clients) s.num_malicious += c.is_malicious ? 1 : 0;
    } else {
        throw ValidationError("scenario.recipe", "expected \"appendix_d1\" or \"custom\"");
    }
    r.finish();
    return s;
}

Json scenario_to_json(const ScenarioSection& s) {
    Json j;
    j["recipe"] = s.recipe;
    j["samples_per_client"] = s.samples_per_client;
    j["eval_samples"] = s.eval_samples;
    if (s.recipe == "custom") {
        j["initial_weights"] = s.initial_weights;
        j["trigger"] = Json{{"feature_index", s.trigger.feature_index},
                            {"mu", s.trigger.trigger_mu},
                            {"sigma", s.trigger.trigger_sigma},
                            {"target_label", s.trigger.target_label}};
        Json clients = Json::array();
        for (const auto& c : s.clients) {
            clients.push_back(Json{{"malicious", c.is_malicious},
                                   {"mu", c.mu},
                                   {"sigma", c.sigma},
                                   {"label_balance", c.label_balance}});
        }
        j["clients"] = std::move(clients);
    } else {
        j["num_clients"] = s.num_clients;
        j["num_malicious"] = s.num_malicious;
        j["epsilon_std"] = s.epsilon_std;
    }
    return j;
}

Json* navigate(Json& root, const std::vector<std::string>& parts, const std::string& path) {
    Json* node = &root;
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        const std::string& p = parts[i];
        if (node->is_array()) {
            std::size_t idx = 0;
            try {
                idx = std::stoul(p);
            } catch (const std::exception&) {
                throw ValidationError(path, "expected an array index at '" + p + "'");
            }
            if (idx >= node->size()) throw ValidationError(path, "index out of range");
            node = &(*node)[idx];
        } else if (node->is_object() && node->contains(p)) {
            node = &(*node)[p];
        } else {
            throw ValidationError(path, "unknown key");
        }
    }
    return node;
}

}  // namespace

ExperimentFile from_json(const Json& j) {
    ObjectReader root(j, "");
    ExperimentFile cfg;
    if (const Json* v = root.find("schema_version")) {
        if (ObjectReader::as_u64(*v, "schema_version") != kSchemaVersion) {
            throw ValidationError("schema_version", "unsupported version");
        }
    }
    if (const Json* s = root.find("scenario")) cfg.scenario = scenario_from_json(*s);
    if (const Json* t = root.find("training")) {
        ObjectReader r(*t, "training");
        r.get("lr", cfg.training.lr);
        r.get("epochs", cfg.training.epochs);
        r.get("batch_size", cfg.training.batch_size);
        r.get("rounds", cfg.training.rounds);
        r.get("clients_per_round", cfg.training.clients_per_round);
        r.get("threads", cfg.training.threads);
        r.finish();
    }
    if (const Json* a = root.find("aggregator")) {
        ObjectReader r(*a, "aggregator");
        auto& agg = cfg.aggregator;
        std::string kind(aggregation::to_string(agg.kind));
        r.get("kind", kind);
        try {
            agg.kind = aggregation::kind_from_string(kind);
        } catch (const std::invalid_argument& e) {
            throw ValidationError("aggregator.kind", e.what());
        }
        r.get("tau", agg.tau);
        r.get("alpha", agg.alpha);
        r.get("num_byzantine", agg.num_byzantine);
        r.get("krum_select", agg.krum_select);
        r.get("clip_norm", agg.clip_norm);
        r.get("noise_std", agg.noise_std);
        r.get("mv_threshold", agg.mv_threshold);
        r.get("sign_lr", agg.sign_lr);
        r.finish();
    }
    if (const Json* o = root.find("output")) {
        ObjectReader r(*o, "output");
        r.get("dir", cfg.output.dir);
        r.get("name", cfg.output.name);
        r.get("json", cfg.output.json);
        r.get("csv", cfg.output.csv);
        r.finish();
    }
    root.get("seed", cfg.seed, 0);
    root.finish();
    validate(cfg);
    return cfg;
}

Json to_json(const ExperimentFile& cfg) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["scenario"] = scenario_to_json(cfg.scenario);
    const auto& t = cfg.training;
    j["training"] = Json{{"lr", t.lr},
                         {"epochs", t.epochs},
                         {"batch_size", t.batch_size},
                         {"rounds", t.rounds},
                         {"clients_per_round", t.clients_per_round},
                         {"threads", t.threads}};
    const auto& a = cfg.aggregator;
    j["aggregator"] = Json{{"kind", std::string(aggregation::to_string(a.kind))},
                           {"tau", a.tau},
                           {"alpha", a.alpha},
                           {"num_byzantine", optional_json(a.num_byzantine)},
                           {"krum_select", optional_json(a.krum_select)},
                           {"clip_norm", optional_json(a.clip_norm)},
                           {"noise_std", optional_json(a.noise_std)},
                           {"mv_threshold", a.mv_threshold},
                           {"sign_lr", a.sign_lr}};
    j["output"] = Json{{"dir", cfg.output.dir},
                       {"name", cfg.output.name},
                       {"json", cfg.output.json},
                       {"csv", cfg.output.csv}};
    j["seed"] = cfg.seed;
    return j;
}

ExperimentFile load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config", "cannot open " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("config", std::string("malformed JSON: ") + e.what());
    }
    return from_json(j);
}

void validate(const ExperimentFile& cfg) {
    const auto& a = cfg.aggregator;
    // range-check tau and alpha even when the chosen kind ignores them
    if (!(a.tau >= 0.0 && a.tau <= 1.0)) throw ValidationError("aggregator.tau", "must lie in [0, 1]");
    if (!(a.alpha >= 0.0 && a.alpha < 0.5)) {
        throw ValidationError("aggregator.alpha", "must lie in [0, 0.5)");
    }
    aggregation::validate(a);
    if (cfg.output.name.empty()) throw ValidationError("output.name", "must be nonempty");
    const auto scenario = resolve_scenario(cfg);
    harness::validate(cfg.training, scenario.num_clients);
}

synthdata::ScenarioConfig resolve_scenario(const ExperimentFile& cfg) {
    const ScenarioSection& s = cfg.scenario;
    if (s.recipe == "appendix_d1") {
        synthdata::AppendixD1Params p;
        p.num_clients = s.num_clients;
        p.num_malicious = s.num_malicious;
        p.samples_per_client = s.samples_per_client;
        p.eval_samples = s.eval_samples;
        p.epsilon_std = s.epsilon_std;
        auto sc = synthdata::make_appendix_d1_scenario(cfg.seed, p);
        synthdata::validate(sc);
        return sc;
    }
    if (s.recipe != "custom") throw ValidationError("scenario.recipe", "unknown recipe");
    if (s.clients.empty()) throw ValidationError("scenario.clients", "must be nonempty");
    synthdata::ScenarioConfig sc;
    sc.num_clients = s.clients.size();
    sc.dim = s.clients.front().mu.size();
    for (const auto& c : s.clients) sc.num_malicious += c.is_malicious ? 1 : 0;
    sc.clients = s.clients;
    sc.samples_per_client = s.samples_per_client;
    sc.eval_samples = s.eval_samples;
    sc.initial_weights = s.initial_weights.empty() ? WeightVector(sc.dim, 0.0) : s.initial_weights;
    sc.trigger = s.trigger;
    sc.master_seed = cfg.seed;
    synthdata::validate(sc);
    return sc;
}

const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"appendix_d1_invariant", "appendix_d1_fedavg",
                                                "appendix_d1_and_mask", "appendix_d1_trimmed_mean"};
    return names;
}

ExperimentFile preset(std::string_view name) {
    ExperimentFile cfg;
    cfg.seed = 20240501;
    cfg.aggregator.tau = 0.2;
    cfg.aggregator.alpha = 0.25;
    if (name == "appendix_d1_invariant") {
        cfg.aggregator.kind = aggregation::AggregatorKind::invariant;
    } else if (name == "appendix_d1_fedavg") {
        cfg.aggregator.kind = aggregation::AggregatorKind::fedavg;
    } else if (name == "appendix_d1_and_mask") {
        cfg.aggregator.kind = aggregation::AggregatorKind::and_mask;
    } else if (name == "appendix_d1_trimmed_mean") {
        cfg.aggregator.kind = aggregation::AggregatorKind::trimmed_mean;
    } else {
        throw ValidationError("preset", "unknown preset '" + std::string(name) + "'");
    }
    cfg.output.name = std::string(name);
    return cfg;
}

void apply_override(ExperimentFile& cfg, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) {
        throw ValidationError(std::string(assignment), "override must look like path=value");
    }
    const std::string path(assignment.substr(0, eq));
    const std::string raw(assignment.substr(eq + 1));

    std::vector<std::string> parts;
    std::stringstream ss(path);
    for (std::string part; std::getline(ss, part, '.');) {
        if (part.empty()) throw ValidationError(path, "empty path segment");
        parts.push_back(part);
    }

    Json value;
    try {
        value = Json::parse(raw);
    } catch (const nlohmann::json::parse_error&) {
        value = raw;
    }

    Json j = to_json(cfg);
    Json* parent = navigate(j, parts, path);
    const std::string& leaf = parts.back();
    if (parent->is_array()) {
        std::size_t idx = 0;
        try {
            idx = std::stoul(leaf);
        } catch (const std::exception&) {
            throw ValidationError(path, "expected an array index");
        }
        if (idx >= parent->size()) throw ValidationError(path, "index out of range");
        (*parent)[idx] = std::move(value);
    } else if (parent->is_object()) {
        (*parent)[leaf] = std::move(value);
    } else {
        throw ValidationError(path, "unknown key");
    }
    cfg = from_json(j);
}

void write_atomic(const std::filesystem::path& path, std::string_view contents) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw std::runtime_error("cannot rename into " + path.string() + ": " + ec.message());
    }
}

Json to_json(const harness::RunResult& result, const ExperimentFile& cfg) {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = to_json(cfg);
    const auto& s = result.summary;
    j["summary"] = Json{{"rounds", result.rounds.size()},
                        {"final_weights", s.final_weights},
                        {"final_acc_main", s.final_acc_main},
                        {"final_acc_backdoor", s.final_acc_backdoor},
                        {"last10_acc_main", s.last10_acc_main},
                        {"last10_acc_backdoor", s.last10_acc_backdoor}};
    Json rounds = Json::array();
    for (const auto& r : result.rounds) {
        rounds.push_back(Json{{"round", r.round_index},
                              {"weights", r.weights_after},
                              {"acc_main", r.acc_main},
                              {"acc_backdoor", r.acc_backdoor},
                              {"sign_consistency", r.sign_consistency},
                              {"mask_pass_fraction", r.mask_pass_fraction},
                              {"aggregate_norm", r.aggregate_norm},
                              {"participants", r.participants}});
    }
    j["rounds"] = std::move(rounds);
    return j;
}

Json to_json(const theory::BoundCheckReport& report) {
    Json params;
    for (const auto& [k, v] : report.parameters) params[k] = v;
    Json j{{"schema_version", kSchemaVersion},
           {"check", report.check},
           {"trials", report.trials},
           {"violations", report.violations},
           {"violation_rate", report.violation_rate},
           {"allowed_rate", report.allowed_rate},
           {"empirical_quantile", report.empirical_quantile},
           {"theoretical_bound", report.theoretical_bound},
           {"passed", report.passed},
           {"parameters", std::move(params)}};
    if (!report.note.empty()) j["note"] = report.note;
    return j;
}

namespace {

Json sign_estimate_json(const theory::SignEstimate& e) {
    return Json{{"mean", e.mean},
                {"standard_error", e.standard_error},
                {"sign", e.sign},
                {"conclusive", e.conclusive}};
}

}  // namespace

Json to_json(const theory::Theorem3Result& result) {
    return Json{{"schema_version", kSchemaVersion},
                {"check", "t3"},
                {"regime", result.regime},
                {"estimate", sign_estimate_json(result.estimate)},
                {"predicted_sign", result.predicted_sign},
                {"status", theory::to_string(result.status)},
                {"literal_predicted_sign", result.literal_predicted_sign},
                {"literal_status", theory::to_string(result.literal_status)}};
}

Json to_json(const theory::Corollary1Result& result) {
    Json clients = Json::array();
    for (const auto& e : result.per_client) clients.push_back(sign_estimate_json(e));
    return Json{{"schema_version", kSchemaVersion},
                {"check", "c1"},
                {"feature", result.feature},
                {"w_k", result.w_k},
                {"mu_k", result.mu_k},
                {"regime", result.regime},
                {"measured_q", result.measured_q},
                {"expected_q", result.expected_q},
                {"expected_is_lower_bound", result.expected_is_lower_bound},
                {"inconclusive_clients", result.inconclusive_clients},
                {"passed", result.passed},
                {"per_client", std::move(clients)}};
}

}  // namespace invagg::config
