#include "csav/edl/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include "csav/error.hpp"

namespace csav::edl {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kInitialEvidenceBias = 1.0;

struct Layout {
    std::size_t w1, b1, w2, b2, end;
};

Layout layout(int inputs, int hidden, int classes) {
    Layout l;
    l.w1 = 0;
    l.b1 = l.w1 + static_cast<std::size_t>(hidden) * inputs;
    l.w2 = l.b1 + hidden;
    l.b2 = l.w2 + static_cast<std::size_t>(classes) * hidden;
    l.end = l.b2 + classes;
    return l;
}

struct Forward {
    std::vector<double> h;
    std::vector<double> raw;
};

Forward forward(const EvidentialModel& m, const std::vector<double>& x) {
    if (static_cast<int>(x.size()) != m.inputs)
        throw DimensionError("feature vector has " + std::to_string(x.size()) + " entries, model expects " +
                             std::to_string(m.inputs));
    const Layout l = layout(m.inputs, m.hidden, m.classes);
    const auto& th = m.theta;
    Forward f;
    f.h.resize(m.hidden);
    for (int j = 0; j < m.hidden; ++j) {
        double a = th[l.b1 + j];
        for (int i = 0; i < m.inputs; ++i) a += th[l.w1 + static_cast<std::size_t>(j) * m.inputs + i] * x[i];
        f.h[j] = std::tanh(a);
    }
    f.raw.resize(m.classes);
    for (int c = 0; c < m.classes; ++c) {
        double a = th[l.b2 + c];
        for (int j = 0; j < m.hidden; ++j) a += th[l.w2 + static_cast<std::size_t>(c) * m.hidden + j] * f.h[j];
        f.raw[c] = a;
    }
    return f;
}

void check_sample(const Sample& s, const EvidentialModel& m) {
    if (static_cast<int>(s.y.size()) != m.classes)
        throw DimensionError("label has " + std::to_string(s.y.size()) + " classes, model has " + std::to_string(m.classes));
    if (static_cast<int>(s.x.size()) != m.inputs)
        throw DimensionError("feature vector has " + std::to_string(s.x.size()) + " entries, model expects " +
                             std::to_string(m.inputs));
}

std::vector<double> kl_alpha(const std::vector<double>& alpha, const std::vector<double>& y, KlTarget target) {
    if (target == KlTarget::Full) return alpha;
    std::vector<double> a(alpha.size());
    for (std::size_t k = 0; k < alpha.size(); ++k) a[k] = y[k] + (1.0 - y[k]) * alpha[k];
    return a;
}

} // namespace

std::size_t EvidentialModel::parameter_count(int inputs, int hidden, int classes) {
    return layout(inputs, hidden, classes).end;
}

EvidentialModel EvidentialModel::initialized(int inputs, int hidden, int classes, std::uint64_t seed) {
    if (inputs < 1 || hidden < 1 || classes < 2) throw DimensionError("model needs inputs >= 1, hidden >= 1, classes >= 2");
    EvidentialModel m;
    m.inputs = inputs;
    m.hidden = hidden;
    m.classes = classes;
    const Layout l = layout(inputs, hidden, classes);
    m.theta.assign(l.end, 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::size_t i = l.w1; i < l.b1; ++i) m.theta[i] = n01(rng) / std::sqrt(static_cast<double>(inputs));
    for (std::size_t i = l.w2; i < l.b2; ++i) m.theta[i] = n01(rng) / std::sqrt(static_cast<double>(hidden));
    // Start the evidence outputs in the active ReLU region.
    for (std::size_t i = l.b2; i < l.end; ++i) m.theta[i] = kInitialEvidenceBias;
    return m;
}

std::vector<double> EvidentialModel::raw(const std::vector<double>& x) const { return forward(*this, x).raw; }

DirichletPrediction EvidentialModel::predict(const std::vector<double>& x) const { return dirichlet_from_raw(raw(x)); }

double annealing(double t) { return std::min(1.0, t); }

double data_term(const std::vector<double>& alpha, const std::vector<double>& y, LossVariant v) {
    if (alpha.size() != y.size()) throw DimensionError("label and prediction sizes differ");
    const DirichletPrediction d(alpha);
    const double s = d.strength();
    double total = 0.0;
    for (int c = 0; c < d.classes(); ++c) {
        const double p = d.p(c);
        const double r = y[c] - p;
        total += (v == LossVariant::Squared ? r * r : r) + p * (1.0 - p) / (s + 1.0);
    }
    return total;
}

std::vector<double> data_term_gradient(const std::vector<double>& alpha, const std::vector<double>& y, LossVariant v) {
    if (alpha.size() != y.size()) throw DimensionError("label and prediction sizes differ");
    const DirichletPrediction d(alpha);
    const double s = d.strength();
    const int n = d.classes();
    std::vector<double> dl_dp(n);
    double dl_ds = 0.0; // explicit dependence through the 1/(S+1) factor
    for (int j = 0; j < n; ++j) {
        const double p = d.p(j);
        const double residual = v == LossVariant::Squared ? -2.0 * (y[j] - p) : -1.0;
        dl_dp[j] = residual + (1.0 - 2.0 * p) / (s + 1.0);
        dl_ds -= p * (1.0 - p) / ((s + 1.0) * (s + 1.0));
    }
    std::vector<double> g(n);
    for (int k = 0; k < n; ++k) {
        double acc = dl_ds;
        for (int j = 0; j < n; ++j) acc += dl_dp[j] * ((j == k ? 1.0 : 0.0) - d.p(j)) / s;
        g[k] = acc;
    }
    return g;
}

LossBreakdown edl_loss(const std::vector<Sample>& batch, const EvidentialModel& model, double t, const LossOptions& opt) {
    if (batch.empty()) throw DimensionError("empty batch");
    LossBreakdown out;
    out.lambda = annealing(t);
    out.n = batch.size();
    for (const auto& s : batch) {
        check_sample(s, model);
        const DirichletPrediction d = model.predict(s.x);
        out.data_term += data_term(d.alpha(), s.y, opt.variant);
        out.kl_term += kl_to_uniform(kl_alpha(d.alpha(), s.y, opt.kl_target));
    }
    out.total = out.data_term + out.lambda * out.kl_term;
    return out;
}

std::vector<double> loss_gradient(const std::vector<Sample>& batch, const EvidentialModel& model, double t,
                                  const LossOptions& opt) {
    if (batch.empty()) throw DimensionError("empty batch");
    const double lambda = annealing(t);
    const Layout l = layout(model.inputs, model.hidden, model.classes);
    const auto& th = model.theta;
    std::vector<double> g(l.end, 0.0);
    for (const auto& s : batch) {
        check_sample(s, model);
        const Forward f = forward(model, s.x);
        const DirichletPrediction d = dirichlet_from_raw(f.raw);
        std::vector<double> dalpha = data_term_gradient(d.alpha(), s.y, opt.variant);
        if (lambda > 0.0) {
            const auto kg = kl_to_uniform_gradient(kl_alpha(d.alpha(), s.y, opt.kl_target));
            for (int k = 0; k < model.classes; ++k) {
                const double chain = opt.kl_target == KlTarget::Full ? 1.0 : 1.0 - s.y[k];
                dalpha[k] += lambda * kg[k] * chain;
            }
        }
        std::vector<double> draw(model.classes);
        for (int c = 0; c < model.classes; ++c) draw[c] = f.raw[c] > 0.0 ? dalpha[c] : 0.0;

        std::vector<double> dh(model.hidden, 0.0);
        for (int c = 0; c < model.classes; ++c) {
            if (draw[c] == 0.0) continue;
            g[l.b2 + c] += draw[c];
            for (int j = 0; j < model.hidden; ++j) {
                const std::size_t w = l.w2 + static_cast<std::size_t>(c) * model.hidden + j;
                g[w] += draw[c] * f.h[j];
                dh[j] += th[w] * draw[c];
            }
        }
        for (int j = 0; j < model.hidden; ++j) {
            const double dpre = dh[j] * (1.0 - f.h[j] * f.h[j]);
            g[l.b1 + j] += dpre;
            for (int i = 0; i < model.inputs; ++i) g[l.w1 + static_cast<std::size_t>(j) * model.inputs + i] += dpre * s.x[i];
        }
    }
    return g;
}

TrainResult train(const std::vector<Sample>& data, const TrainingSchedule& sch) {
    if (data.empty()) throw Error("training set is empty");
    if (sch.epochs < 1 || sch.learning_rate <= 0.0 || sch.batch_size < 1 || sch.anneal_denominator <= 0.0)
        throw Error("invalid training schedule");
    const int inputs = static_cast<int>(data.front().x.size());
    const int classes = static_cast<int>(data.front().y.size());
    std::set<int> seen;
    for (const auto& s : data) {
        if (static_cast<int>(s.x.size()) != inputs || static_cast<int>(s.y.size()) != classes)
            throw DimensionError("inconsistent sample dimensions in training set");
        seen.insert(static_cast<int>(std::max_element(s.y.begin(), s.y.end()) - s.y.begin()));
    }
    if (seen.size() < 2) throw Error("training set holds a single class");

    TrainResult out;
    out.model = EvidentialModel::initialized(inputs, sch.hidden, classes, sch.seed);
    out.model.config_hash = config_hash(sch);
    std::mt19937_64 rng(sch.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<Sample> batch;
    for (int epoch = 0; epoch < sch.epochs; ++epoch) {
        const double t = epoch / sch.anneal_denominator;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += sch.batch_size) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + sch.batch_size); ++i) batch.push_back(data[order[i]]);
            const auto g = loss_gradient(batch, out.model, t, sch.loss);
            const double step = sch.learning_rate / static_cast<double>(batch.size());
            for (std::size_t i = 0; i < g.size(); ++i) out.model.theta[i] -= step * g[i];
        }
        out.epoch_loss.push_back(edl_loss(data, out.model, t, sch.loss).total / static_cast<double>(data.size()));
    }
    return out;
}

double accuracy(const EvidentialModel& model, const std::vector<Sample>& data) {
    if (data.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& s : data) {
        const int truth = static_cast<int>(std::max_element(s.y.begin(), s.y.end()) - s.y.begin());
        hits += model.predict(s.x).argmax() == truth;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

ordered_json to_json(const TrainingSchedule& s) {
    return ordered_json{{"epochs", s.epochs},
                        {"learning_rate", s.learning_rate},
                        {"anneal_denominator", s.anneal_denominator},
                        {"batch_size", s.batch_size},
                        {"seed", s.seed},
                        {"hidden", s.hidden},
                        {"loss_variant", s.loss.variant == LossVariant::Squared ? "squared" : "literal"},
                        {"kl_target", s.loss.kl_target == KlTarget::Full ? "full" : "misleading_removed"}};
}

std::string config_hash(const TrainingSchedule& s) {
    // FNV-1a over the canonical JSON text.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : to_json(s).dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ordered_json to_json(const EvidentialModel& m) {
    return ordered_json{{"version", kModelVersion}, {"inputs", m.inputs},       {"hidden", m.hidden},
                        {"classes", m.classes},     {"config_hash", m.config_hash}, {"theta", m.theta}};
}

EvidentialModel model_from_json(const json& j) {
    try {
        if (j.at("version").get<std::string>() != kModelVersion)
            throw FormatError("unsupported model version '" + j.at("version").get<std::string>() + "'");
        EvidentialModel m;
        m.inputs = j.at("inputs").get<int>();
        m.hidden = j.at("hidden").get<int>();
        m.classes = j.at("classes").get<int>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.theta = j.at("theta").get<std::vector<double>>();
        if (m.inputs < 1 || m.hidden < 1 || m.classes < 2 ||
            m.theta.size() != EvidentialModel::parameter_count(m.inputs, m.hidden, m.classes))
            throw FormatError("model parameter count does not match its shape");
        for (double v : m.theta)
            if (!std::isfinite(v)) throw FormatError("model has non-finite parameters");
        return m;
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed model: ") + e.what());
    }
}

void save_model(const std::filesystem::path& path, const EvidentialModel& m) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << to_json(m).dump() << '\n';
}

EvidentialModel load_model(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read " + path.string());
    try {
        return model_from_json(json::parse(f));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace csav::edl
