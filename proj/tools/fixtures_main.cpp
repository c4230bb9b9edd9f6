// cimq-fixtures: writes the bundled synthetic dataset, toy/rigged models, and
// ready-to-run pipeline configs under the given directory.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "cimq/fixtures.hpp"

int main(int argc, char** argv) {
    CLI::App app{"generate the bundled model/dataset fixtures"};
    std::string dir;
    uint64_t seed = 1234;
    app.add_option("dir", dir, "output directory")->required();
    app.add_option("--seed", seed, "generator seed");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }
    try {
        cimq::write_fixture_tree(dir, seed);
    } catch (const std::exception& e) {
        std::cerr << "cimq-fixtures: " << e.what() << "\n";
        return 3;
    }
    std::cout << "fixtures written to " << dir << "\n";
    return 0;
}
