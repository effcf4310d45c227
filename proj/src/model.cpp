#include "crossgap/model.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "crossgap/errors.hpp"

namespace crossgap {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json grid_to_json(const std::vector<FlowVector>& v) {
    json arr = json::array();
    for (const auto& f : v) arr.push_back({round9(f.dx), round9(f.dy)});
    return arr;
}

std::vector<FlowVector> grid_from_json(const json& arr) {
    std::vector<FlowVector> out;
    out.reserve(arr.size());
    for (const auto& e : arr) out.push_back({e[0].get<double>(), e[1].get<double>()});
    return out;
}

json doubles_to_json(const std::vector<double>& v) {
    json arr = json::array();
    for (double d : v) arr.push_back(round9(d));
    return arr;
}

}  // namespace

double round9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::strtod(buf, nullptr);
}

void save_model(const std::filesystem::path& file, const TrainedModel& model) {
    json j;
    j["format_version"] = kFormatVersion;
    j["image"] = {{"width", model.image_width}, {"height", model.image_height}};
    j["fps"] = round9(model.fps);

    const InfluxMap& m = model.influx;
    j["grid"] = {{"stride", m.stride},
                 {"offset", m.offset},
                 {"width", m.grid_width},
                 {"height", m.grid_height}};
    json influx;
    influx["m"] = grid_to_json(m.m);
    influx["weights"] = doubles_to_json(m.weights);
    influx["pfa"] = {round9(m.pfa[0]), round9(m.pfa[1])};
    influx["frames_trained"] = m.frames_trained;
    influx["nullified_outbound"] = m.nullified_outbound;
    j["influx"] = std::move(influx);

    json points;
    points["points"] = json::array();
    for (const auto& p : model.points.points) points["points"].push_back({round9(p[0]), round9(p[1])});
    points["proj"] = grid_to_json(model.points.proj);
    points["shortfall"] = model.points.shortfall;
    points["requested"] = model.points.requested;
    points["seed"] = model.points.seed;
    points["sigma"] = round9(model.points.sigma);
    j["sample_points"] = std::move(points);

    json tpl;
    tpl["values"] = doubles_to_json(model.tpl.values);
    tpl["rate"] = round9(model.tpl.rate);
    j["template"] = std::move(tpl);

    j["noise"] = {{"sigma", round9(model.noise.sigma)},
                  {"method", model.noise.method},
                  {"sample_count", model.noise.sample_count}};

    const TrainParams& c = model.config;
    j["config"] = {{"stride", c.stride},
                   {"skip", c.skip},
                   {"two_way", c.two_way},
                   {"alpha", round9(c.alpha)},
                   {"rho_frac", round9(c.rho_frac)},
                   {"sigma_s_frac", round9(c.sigma_s_frac)},
                   {"sample_count", c.sample_count},
                   {"seed", c.seed},
                   {"detector_rate", round9(c.detector_rate)},
                   {"template_seconds", round9(c.template_seconds)},
                   {"peak_fraction", round9(c.peak_fraction)},
                   {"k_sal", round9(c.k_sal)},
                   {"min_separation", round9(c.min_separation)},
                   {"guard", round9(c.guard)},
                   {"backtrack_eps", round9(c.backtrack_eps)},
                   {"min_duration", round9(c.min_duration)},
                   {"flow",
                    {{"window_radius", c.flow.window_radius},
                     {"levels", c.flow.levels},
                     {"max_iterations", c.flow.max_iterations},
                     {"epsilon", round9(c.flow.epsilon)},
                     {"eigen_threshold", round9(c.flow.eigen_threshold)},
                     {"max_displacement", round9(c.flow.max_displacement)}}}};

    std::ofstream out(file);
    if (!out) throw RuntimeError("cannot write model " + file.string());
    out << j.dump(1) << "\n";
}

TrainedModel load_model(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot open model " + file.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw DataError("malformed model file: " + std::string(e.what()));
    }

    TrainedModel model;
    try {
        model.format_version = j.at("format_version").get<int>();
        if (model.format_version != kFormatVersion)
            throw DataError("unsupported model format_version " + std::to_string(model.format_version));
        model.image_width = j.at("image").at("width").get<int>();
        model.image_height = j.at("image").at("height").get<int>();
        model.fps = j.at("fps").get<double>();

        InfluxMap& m = model.influx;
        m.stride = j.at("grid").at("stride").get<int>();
        m.offset = j.at("grid").at("offset").get<int>();
        m.grid_width = j.at("grid").at("width").get<int>();
        m.grid_height = j.at("grid").at("height").get<int>();
        m.image_width = model.image_width;
        m.image_height = model.image_height;
        const json& ji = j.at("influx");
        m.m = grid_from_json(ji.at("m"));
        m.weights = ji.at("weights").get<std::vector<double>>();
        m.pfa = {ji.at("pfa")[0].get<double>(), ji.at("pfa")[1].get<double>()};
        m.frames_trained = ji.at("frames_trained").get<std::int64_t>();
        m.nullified_outbound = ji.at("nullified_outbound").get<bool>();
        m.counts.assign(m.m.size(), 0);
        if (m.m.size() != static_cast<std::size_t>(m.grid_width) * m.grid_height ||
            m.weights.size() != m.m.size())
            throw DataError("model influx grid size mismatch");

        const json& jp = j.at("sample_points");
        for (const auto& p : jp.at("points"))
            model.points.points.push_back({p[0].get<double>(), p[1].get<double>()});
        model.points.proj = grid_from_json(jp.at("proj"));
        model.points.shortfall = jp.at("shortfall").get<bool>();
        model.points.requested = jp.at("requested").get<int>();
        model.points.seed = jp.at("seed").get<std::uint64_t>();
        model.points.sigma = jp.at("sigma").get<double>();
        if (model.points.proj.size() != model.points.points.size())
            throw DataError("model sample point size mismatch");

        model.tpl = PulseTemplate::from_values(j.at("template").at("values").get<std::vector<double>>(),
                                               j.at("template").at("rate").get<double>());

        model.noise.sigma = j.at("noise").at("sigma").get<double>();
        model.noise.method = j.at("noise").at("method").get<std::string>();
        model.noise.sample_count = j.at("noise").at("sample_count").get<std::size_t>();

        const json& jc = j.at("config");
        TrainParams& c = model.config;
        c.stride = jc.at("stride").get<int>();
        c.skip = jc.at("skip").get<int>();
        c.two_way = jc.at("two_way").get<bool>();
        c.alpha = jc.at("alpha").get<double>();
        c.rho_frac = jc.at("rho_frac").get<double>();
        c.sigma_s_frac = jc.at("sigma_s_frac").get<double>();
        c.sample_count = jc.at("sample_count").get<int>();
        c.seed = jc.at("seed").get<std::uint64_t>();
        c.detector_rate = jc.at("detector_rate").get<double>();
        c.template_seconds = jc.at("template_seconds").get<double>();
        c.peak_fraction = jc.at("peak_fraction").get<double>();
        c.k_sal = jc.at("k_sal").get<double>();
        c.min_separation = jc.at("min_separation").get<double>();
        c.guard = jc.at("guard").get<double>();
        c.backtrack_eps = jc.at("backtrack_eps").get<double>();
        c.min_duration = jc.at("min_duration").get<double>();
        const json& jf = jc.at("flow");
        c.flow.window_radius = jf.at("window_radius").get<int>();
        c.flow.levels = jf.at("levels").get<int>();
        c.flow.max_iterations = jf.at("max_iterations").get<int>();
        c.flow.epsilon = jf.at("epsilon").get<double>();
        c.flow.eigen_threshold = jf.at("eigen_threshold").get<double>();
        c.flow.max_displacement = jf.at("max_displacement").get<double>();
    } catch (const json::exception& e) {
        throw DataError("model file missing fields: " + std::string(e.what()));
    }

    if (!(model.noise.sigma > 0.0)) throw DataError("model has non-positive noise sigma");
    return model;
}

}  // namespace crossgap
