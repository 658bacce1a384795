#include "kinflow/checkpoint.hpp"

#include "kinflow/tensor_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace kinflow {

void save_params(const std::string& dir, const ParamMap& params, const std::string& meta_json) {
    std::filesystem::create_directories(dir);

    nlohmann::json manifest;
    manifest["format_version"] = 1;
    manifest["tensors"] = nlohmann::json::object();
    for (const auto& [name, tensor] : params) {
        manifest["tensors"][name] = tensor.dims();
        write_tensor((std::filesystem::path(dir) / (name + ".tensor")).string(), tensor);
    }
    manifest["meta"] = nlohmann::json::parse(meta_json);

    std::ofstream f(std::filesystem::path(dir) / "manifest.json", std::ios::trunc);
    if (!f) {
        throw FormatError("checkpoint '" + dir + "': cannot write manifest");
    }
    f << manifest.dump(2) << "\n";
}

namespace {

nlohmann::json read_manifest(const std::string& dir) {
    std::ifstream f(std::filesystem::path(dir) / "manifest.json");
    if (!f) {
        throw FormatError("checkpoint '" + dir + "': missing manifest.json");
    }
    std::stringstream ss;
    ss << f.rdbuf();
    try {
        return nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint '" + dir + "': bad manifest: " + e.what());
    }
}

}  // namespace

ParamMap load_params(const std::string& dir) {
    const nlohmann::json manifest = read_manifest(dir);

    ParamMap params;
    try {
        for (const auto& [name, shape] : manifest.at("tensors").items()) {
            Tensor t = read_tensor((std::filesystem::path(dir) / (name + ".tensor")).string());
            const auto expected = shape.get<std::vector<Index>>();
            if (t.dims() != expected) {
                throw FormatError("checkpoint '" + dir + "': tensor '" + name +
                                  "' does not match manifest shape");
            }
            params.emplace(name, std::move(t));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("checkpoint '" + dir + "': bad manifest: " + e.what());
    }
    return params;
}

std::string load_checkpoint_meta(const std::string& dir) {
    const nlohmann::json manifest = read_manifest(dir);
    return manifest.contains("meta") ? manifest["meta"].dump() : "{}";
}

Tensor to_tensor(const Eigen::MatrixXd& m) {
    Tensor t({m.rows(), m.cols()});
    for (Index r = 0; r < m.rows(); ++r) {
        for (Index c = 0; c < m.cols(); ++c) {
            t(r, c) = m(r, c);
        }
    }
    return t;
}

Tensor to_tensor(const Eigen::VectorXd& v) {
    Tensor t({v.size()});
    for (Index i = 0; i < v.size(); ++i) {
        t(i) = v[i];
    }
    return t;
}

Eigen::MatrixXd to_matrix(const Tensor& t) {
    require(t.rank() == 2, "to_matrix: expected a rank-2 tensor");
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (Index r = 0; r < t.dim(0); ++r) {
        for (Index c = 0; c < t.dim(1); ++c) {
            m(r, c) = t(r, c);
        }
    }
    return m;
}

Eigen::VectorXd to_vector(const Tensor& t) {
    require(t.rank() == 1, "to_vector: expected a rank-1 tensor");
    Eigen::VectorXd v(t.dim(0));
    for (Index i = 0; i < t.dim(0); ++i) {
        v[i] = t(i);
    }
    return v;
}

}  // namespace kinflow
