#include <subspectra/cli.hpp>

int main(int argc, char ** argv)
{
    return subspectra::cli::run_main(argc, argv);
}
