#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "invagg/aggregation.hpp"
#include "invagg/config.hpp"
#include "invagg/harness.hpp"
#include "invagg/synthdata.hpp"
#include "invagg/theory.hpp"

namespace py = pybind11;
using namespace invagg;

namespace {

// Python passes plain lists; ids default to positions, counts to 1.
std::vector<aggregation::ClientUpdate> to_updates(const std::vector<Vector>& gradients,
                                                  const std::optional<std::vector<std::size_t>>& ids,
                                                  const std::optional<std::vector<std::size_t>>& counts) {
    if (ids && ids->size() != gradients.size()) throw std::invalid_argument("client_ids length mismatch");
    if (counts && counts->size() != gradients.size()) throw std::invalid_argument("sample_counts length mismatch");
    std::vector<aggregation::ClientUpdate> out(gradients.size());
    for (std::size_t i = 0; i < gradients.size(); ++i) {
        out[i].client_id = ids ? (*ids)[i] : i;
        out[i].gradient = gradients[i];
        out[i].sample_count = counts ? (*counts)[i] : 1;
    }
    return out;
}

aggregation::AggregatorConfig aggregator_from_json(const std::string& text) {
    config::Json j = config::Json::object();
    j["aggregator"] = config::Json::parse(text);
    return config::from_json(j).aggregator;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Robust federated aggregation, synthetic backdoor scenarios and bound checks";

    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);

    m.def("fedavg",
          [](const std::vector<Vector>& g, std::optional<std::vector<std::size_t>> counts) {
              return aggregation::fedavg(to_updates(g, std::nullopt, counts));
          },
          py::arg("gradients"), py::arg("sample_counts") = py::none());
    m.def("sign_consistency",
          [](const std::vector<Vector>& g) { return aggregation::sign_consistency_all(to_updates(g, {}, {})); },
          py::arg("gradients"));
    m.def("and_mask",
          [](const std::vector<Vector>& g, double tau) { return aggregation::and_mask(to_updates(g, {}, {}), tau); },
          py::arg("gradients"), py::arg("tau"));
    m.def("trim_count", &aggregation::trim_count, py::arg("n"), py::arg("alpha"));
    m.def("trimmed_mean",
          [](const std::vector<Vector>& g, double alpha) {
              return aggregation::trimmed_mean(to_updates(g, {}, {}), alpha);
          },
          py::arg("gradients"), py::arg("alpha"));
    m.def("invariant_aggregate",
          [](const std::vector<Vector>& g, double tau, double alpha) {
              return aggregation::invariant_aggregate(to_updates(g, {}, {}), tau, alpha);
          },
          py::arg("gradients"), py::arg("tau"), py::arg("alpha"));
    m.def("aggregate",
          [](const std::vector<Vector>& g, const std::string& config_json,
             std::optional<std::vector<std::size_t>> ids, std::optional<std::vector<std::size_t>> counts,
             std::size_t default_byzantine, std::uint64_t seed) {
              const auto cfg = aggregator_from_json(config_json);
              auto r = aggregation::aggregate(to_updates(g, ids, counts), cfg, default_byzantine, seed);
              return py::make_tuple(r.value, r.mask ? py::cast(*r.mask) : py::none());
          },
          py::arg("gradients"), py::arg("config_json"), py::arg("client_ids") = py::none(),
          py::arg("sample_counts") = py::none(), py::arg("default_byzantine") = 0, py::arg("seed") = 0);
    m.def("aggregator_kinds", [] {
        std::vector<std::string> names;
        for (auto k : aggregation::all_kinds()) names.emplace_back(aggregation::to_string(k));
        return names;
    });

    m.def("preset_names", &config::preset_names);
    m.def("preset", [](const std::string& name) { return config::to_json(config::preset(name)).dump(); },
          py::arg("name"));
    m.def("resolve_config",
          [](const std::string& text, const std::vector<std::string>& overrides) {
              auto cfg = config::from_json(config::Json::parse(text));
              for (const auto& o : overrides) config::apply_override(cfg, o);
              return config::to_json(cfg).dump();
          },
          py::arg("config_json"), py::arg("overrides") = std::vector<std::string>{});
    m.def("run_experiment",
          [](const std::string& text) {
              const auto cfg = config::from_json(config::Json::parse(text));
              const auto scenario = config::resolve_scenario(cfg);
              harness::RunResult r;
              {
                  py::gil_scoped_release release;
                  r = harness::run_experiment(scenario, cfg.aggregator, cfg.training, cfg.seed);
              }
              return config::to_json(r, cfg).dump();
          },
          py::arg("config_json"));

    m.def("appendix_d1_client_data",
          [](std::uint64_t seed, std::size_t index) {
              const auto sc = synthdata::make_appendix_d1_scenario(seed);
              if (index >= sc.num_clients) throw py::index_error("client index out of range");
              std::vector<Vector> x;
              std::vector<int> y;
              for (const auto& s : synthdata::client_dataset(sc, index)) {
                  x.push_back(s.features);
                  y.push_back(s.label);
              }
              return py::make_tuple(x, y, sc.clients[index].is_malicious);
          },
          py::arg("seed"), py::arg("index"));

    m.def("theorem1_alpha", &theory::theorem1_alpha, py::arg("n"), py::arg("eta"), py::arg("delta"));
    m.def("check_theorem1",
          [](std::size_t n, double eta, double delta, double c, std::size_t trials, std::uint64_t seed,
             double mean, double stddev, const std::string& dist) {
              theory::Distribution d;
              d.mean = mean;
              d.stddev = stddev;
              if (dist == "uniform") d.kind = theory::Distribution::Kind::uniform;
              else if (dist != "normal") throw std::invalid_argument("dist must be normal or uniform");
              py::gil_scoped_release release;
              return config::to_json(theory::check_theorem1(d, n, eta, delta, c, trials, seed)).dump();
          },
          py::arg("n"), py::arg("eta"), py::arg("delta"), py::arg("c"), py::arg("trials") = 10000,
          py::arg("seed") = 1, py::arg("mean") = 0.0, py::arg("stddev") = 1.0, py::arg("dist") = "normal");
    m.def("theorem2_bound",
          [](double phi, std::size_t n, std::size_t n_prime, long tau_count, std::optional<double> p) {
              const auto b = theory::theorem2_bound(phi, n, n_prime, tau_count, p);
              return py::dict(py::arg("lower") = b.lower, py::arg("upper") = b.upper, py::arg("raw") = b.raw,
                              py::arg("clamped") = b.clamped);
          },
          py::arg("phi"), py::arg("n"), py::arg("n_prime"), py::arg("tau_count"),
          py::arg("substitute_p") = py::none());
    m.def("check_theorem2",
          [](double phi, std::size_t n, std::size_t n_prime, long tau_count, std::size_t trials,
             std::uint64_t seed, std::optional<double> p) {
              py::gil_scoped_release release;
              return config::to_json(theory::check_theorem2(phi, n, n_prime, tau_count, trials, seed, p)).dump();
          },
          py::arg("phi"), py::arg("n"), py::arg("n_prime"), py::arg("tau_count"), py::arg("trials") = 10000,
          py::arg("seed") = 1, py::arg("substitute_p") = py::none());
    m.def("check_theorem3",
          [](const Vector& mu, const Vector& sigma, const Vector& w, std::size_t k, std::size_t samples,
             std::uint64_t seed) {
              synthdata::GaussianClientSpec spec{0, false, mu, sigma, 0.5};
              py::gil_scoped_release release;
              return config::to_json(theory::check_theorem3(spec, w, k, samples, seed)).dump();
          },
          py::arg("mu"), py::arg("sigma"), py::arg("w"), py::arg("k"), py::arg("samples") = 1000000,
          py::arg("seed") = 1);
    m.def("check_corollary1",
          [](const Vector& w, std::size_t samples, std::uint64_t seed, std::uint64_t scenario_seed) {
              const auto sc = synthdata::make_appendix_d1_scenario(scenario_seed);
              py::gil_scoped_release release;
              return config::to_json(theory::check_corollary1(sc, w, samples, seed)).dump();
          },
          py::arg("w"), py::arg("samples") = 1000000, py::arg("seed") = 1, py::arg("scenario_seed") = 1);
}
