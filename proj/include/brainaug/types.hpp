#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace brainaug {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

using TokenId = int;
using TokenList = std::vector<std::string>;
using IdList = std::vector<TokenId>;

/// A surface form bound to a vocabulary slot.
struct Token {
    std::string surface;
    TokenId id = -1;
};

}  // namespace brainaug
