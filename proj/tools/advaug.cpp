#include "advaug/cli.hpp"

int main(int argc, char** argv) {
    return advaug::cli_main(std::vector<std::string>(argv + 1, argv + argc));
}
