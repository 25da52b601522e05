// Regenerates the bundled corpus and question banks under a target directory.
#include <filesystem>
#include <iostream>

#include "veil/corpus.hpp"
#include "veil/questions.hpp"

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_corpus <output-dir>\n";
        return 1;
    }
    const std::string dir = argv[1];
    try {
        const auto corpus = veil::build_toy_corpus();
        veil::write_corpus_dir(corpus, dir + "/corpus");
        std::filesystem::create_directories(dir + "/questions");
        veil::write_question_bank(veil::general_question_bank(),
                                  dir + "/questions/general_bank.txt");
        veil::write_question_bank(veil::privacy_question_bank(),
                                  dir + "/questions/privacy_bank.txt");
    } catch (const std::exception& e) {
        std::cerr << "make_corpus: " << e.what() << "\n";
        return 2;
    }
    std::cout << "corpus written to " << dir << "\n";
    return 0;
}
