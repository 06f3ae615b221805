#include "signspot/cli.hpp"

int main(int argc, char** argv) {
  return signspot::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
