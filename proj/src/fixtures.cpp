#include "rcassoc/fixtures.hpp"

namespace rcassoc {

namespace {

ContingencyTable make_table5() {
    Eigen::MatrixXd m(4, 5);
    m << 526, 1222, 1707, 307, 102,
         731, 1911, 5046, 1916, 1224,
         512, 1664, 3742, 1370, 1017,
         135, 501, 1686, 1076, 1376;
    return validate_table({"U", "F", "S", "W"}, {"N", "P", "S", "H", "G"}, m, true);
}

ContingencyTable make_table6() {
    Eigen::MatrixXd m(5, 4);
    m << 655, 579, 572, 98,
         1544, 1461, 1933, 360,
         2134, 3996, 4739, 1312,
         363, 1466, 1749, 1091,
         100, 778, 1057, 1784;
    return validate_table({"N", "P", "S", "H", "G"}, {"U", "F", "S", "W"}, m, true);
}

ContingencyTable make_table7() {
    Eigen::MatrixXd m(4, 4);
    m << 2644, 192, 898, 130,
         988, 6861, 1917, 1062,
         845, 730, 5952, 778,
         319, 497, 1283, 2675;
    return validate_table({"U", "F", "S", "W"}, {"U", "F", "S", "W"}, m, true);
}

}  // namespace

bool is_fixture_name(const std::string& name) {
    return name == "table5" || name == "table6" || name == "table7";
}

ContingencyTable fixture_table(const std::string& name) {
    if (name == "table5") return make_table5();
    if (name == "table6") return make_table6();
    if (name == "table7") return make_table7();
    throw Error(ErrorCode::usage_error, "unknown fixture '" + name + "'");
}

std::vector<std::string> fixture_names() { return {"table5", "table6", "table7"}; }

}  // namespace rcassoc
