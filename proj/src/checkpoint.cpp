#include "systemmatch/errors.hpp"
#include "systemmatch/perturb.hpp"

#include <fstream>

#include "json.hpp"

namespace systemmatch {

namespace {

using nlohmann::json;

constexpr const char* checkpoint_format = "systemmatch-checkpoint";

json config_to_json(const TrainConfig& cfg) {
    return json{
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"lr_autoencoder", cfg.lr_autoencoder},
        {"lr_adversary", cfg.lr_adversary},
        {"adversary_weight", cfg.adversary_weight},
        {"adversary_steps", cfg.adversary_steps},
        {"latent_dim", cfg.hyper.latent_dim},
        {"hidden_width", cfg.hyper.hidden_width},
        {"depth", cfg.hyper.depth},
        {"seed", cfg.seed}
    };
}

TrainConfig config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.lr_autoencoder = j.at("lr_autoencoder").get<double>();
    cfg.lr_adversary = j.at("lr_adversary").get<double>();
    cfg.adversary_weight = j.at("adversary_weight").get<double>();
    cfg.adversary_steps = j.at("adversary_steps").get<std::size_t>();
    cfg.hyper.latent_dim = j.at("latent_dim").get<std::size_t>();
    cfg.hyper.hidden_width = j.at("hidden_width").get<std::size_t>();
    cfg.hyper.depth = j.at("depth").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params, const TrainConfig& cfg) {
    json doc;
    doc["format"] = checkpoint_format;
    doc["version"] = checkpoint_version;
    doc["genes"] = params.gene_ids;
    doc["hyper"] = {
        {"latent_dim", params.hyper.latent_dim},
        {"hidden_width", params.hyper.hidden_width},
        {"depth", params.hyper.depth}
    };
    doc["perturbations"] = params.perturbations.names;
    doc["covariates"] = json::array();
    for (std::size_t c = 0; c < params.covariates.classes.size(); ++c) {
        doc["covariates"].push_back({{"class", params.covariates.classes[c]}, {"levels", params.covariates.levels[c]}});
    }
    doc["train_config"] = config_to_json(cfg);

    auto& tensors = doc["tensors"] = json::array();
    for_each_tensor(params.tensors, [&](const std::string& name, const double* data, std::size_t n, bool) {
        tensors.push_back({{"name", name}, {"values", std::vector<double>(data, data + n)}});
    });

    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot open checkpoint '" + path.string() + "' for writing");
    }
    out << doc.dump(1) << '\n';
    if (!out) {
        throw DataError("failed to write checkpoint '" + path.string() + "'");
    }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open checkpoint '" + path.string() + "'");
    }

    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw DataError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
    }

    try {
        if (doc.at("format").get<std::string>() != checkpoint_format) {
            throw DataError("'" + path.string() + "' is not a model checkpoint");
        }
        if (doc.at("version").get<int>() != checkpoint_version) {
            throw DataError("unsupported checkpoint version " + std::to_string(doc.at("version").get<int>()));
        }

        ModelHyperparameters hyper;
        hyper.latent_dim = doc.at("hyper").at("latent_dim").get<std::size_t>();
        hyper.hidden_width = doc.at("hyper").at("hidden_width").get<std::size_t>();
        hyper.depth = doc.at("hyper").at("depth").get<std::size_t>();

        PerturbationVocabulary perts{doc.at("perturbations").get<std::vector<std::string>>()};
        CovariateVocabulary covs;
        for (const auto& c : doc.at("covariates")) {
            covs.classes.push_back(c.at("class").get<std::string>());
            covs.levels.push_back(c.at("levels").get<std::vector<std::string>>());
        }

        Checkpoint out{
            initialize_model(doc.at("genes").get<std::vector<std::string>>(), std::move(perts), std::move(covs), hyper, 0),
            config_from_json(doc.at("train_config"))
        };

        const auto& tensors = doc.at("tensors");
        std::size_t index = 0;
        for_each_tensor(out.params.tensors, [&](const std::string& name, double* data, std::size_t n, bool) {
            if (index >= tensors.size() || tensors[index].at("name").get<std::string>() != name) {
                throw DataError("checkpoint is missing tensor '" + name + "'");
            }
            const auto& values = tensors[index].at("values");
            if (values.size() != n) {
                throw DataError("tensor '" + name + "' has " + std::to_string(values.size()) + " values, expected " + std::to_string(n));
            }
            for (std::size_t i = 0; i < n; ++i) {
                data[i] = values[i].get<double>();
            }
            ++index;
        });
        if (index != tensors.size()) {
            throw DataError("checkpoint has unexpected extra tensors");
        }
        return out;
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint '" + path.string() + "': " + e.what());
    }
}

}
