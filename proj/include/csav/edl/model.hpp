#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "csav/edl/dirichlet.hpp"

namespace csav::edl {

inline constexpr const char* kModelVersion = "edl-v1";

// One hidden tanh layer followed by a linear layer producing C raw outputs.
// theta layout: W1 (hidden x inputs, row-major), b1, W2 (classes x hidden), b2.
struct EvidentialModel {
    int inputs = 0;
    int hidden = 0;
    int classes = 2;
    std::vector<double> theta;
    std::string config_hash; // of the training config that produced theta

    static std::size_t parameter_count(int inputs, int hidden, int classes);
    // Gaussian weights scaled by 1/sqrt(fan_in); hidden biases zero, output biases positive.
    static EvidentialModel initialized(int inputs, int hidden, int classes, std::uint64_t seed);

    // Throws DimensionError on a wrong-length input.
    std::vector<double> raw(const std::vector<double>& x) const;
    DirichletPrediction predict(const std::vector<double>& x) const;
};

struct Sample {
    std::vector<double> x;
    std::vector<double> y; // one-hot over classes
};

enum class LossVariant { Squared, Literal };
// Full: KL on alpha as is. MisleadingRemoved: KL on y + (1 - y) * alpha.
enum class KlTarget { Full, MisleadingRemoved };

struct LossOptions {
    LossVariant variant = LossVariant::Squared;
    KlTarget kl_target = KlTarget::Full;
};

struct LossBreakdown {
    double data_term = 0.0;
    double kl_term = 0.0;
    double lambda = 0.0;
    double total = 0.0; // data_term + lambda * kl_term
    std::size_t n = 0;
};

double annealing(double t);

// Per-sample data term and its gradient with respect to alpha.
double data_term(const std::vector<double>& alpha, const std::vector<double>& y, LossVariant v);
std::vector<double> data_term_gradient(const std::vector<double>& alpha, const std::vector<double>& y, LossVariant v);

// Sums over the batch. Throw DimensionError on empty batches or size mismatches.
LossBreakdown edl_loss(const std::vector<Sample>& batch, const EvidentialModel& model, double t, const LossOptions& opt = {});
std::vector<double> loss_gradient(const std::vector<Sample>& batch, const EvidentialModel& model, double t,
                                  const LossOptions& opt = {});

struct TrainingSchedule {
    int epochs = 60;
    double learning_rate = 0.1;
    double anneal_denominator = 10.0;
    int batch_size = 32;
    std::uint64_t seed = 1;
    int hidden = 8;
    LossOptions loss;
};

struct TrainResult {
    EvidentialModel model;
    std::vector<double> epoch_loss; // mean total loss per sample, per epoch
};

// Throws Error if the dataset is empty or holds a single class.
TrainResult train(const std::vector<Sample>& data, const TrainingSchedule& schedule);

double accuracy(const EvidentialModel& model, const std::vector<Sample>& data);

nlohmann::ordered_json to_json(const TrainingSchedule& s);
std::string config_hash(const TrainingSchedule& s);

nlohmann::ordered_json to_json(const EvidentialModel& m);
EvidentialModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const EvidentialModel& m);
EvidentialModel load_model(const std::filesystem::path& path);

} // namespace csav::edl
