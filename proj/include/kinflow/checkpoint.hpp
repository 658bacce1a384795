#pragma once

#include "kinflow/tensor.hpp"

#include <map>
#include <string>

namespace kinflow {

// Parameter checkpoints are a directory of tensor files plus a
// manifest.json mapping each name to its shape:
//   {"format_version":1, "tensors":{"w_q":[16,16], ...}, "meta":{...}}
using ParamMap = std::map<std::string, Tensor>;

void save_params(const std::string& dir, const ParamMap& params,
                 const std::string& meta_json = "{}");
ParamMap load_params(const std::string& dir);
std::string load_checkpoint_meta(const std::string& dir);

Tensor to_tensor(const Eigen::MatrixXd& m);
Tensor to_tensor(const Eigen::VectorXd& v);
Eigen::MatrixXd to_matrix(const Tensor& t);
Eigen::VectorXd to_vector(const Tensor& t);

}  // namespace kinflow
