#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>

namespace topicdpr {

// Binary container for named matrices. Names are stored sorted so two files
// holding the same tensors are byte-identical.
void write_tensors(const std::map<std::string, Eigen::MatrixXd>& tensors,
                   const std::string& path);

std::map<std::string, Eigen::MatrixXd> read_tensors(const std::string& path);

}  // namespace topicdpr
